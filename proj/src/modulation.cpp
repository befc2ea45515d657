#include "tmdit/modulation.hpp"

#include <cmath>

namespace tmdit {

Tensor sinusoidal_features(std::span<const double> sigma) {
    const auto b = static_cast<std::int64_t>(sigma.size());
    constexpr int n = TimeEmbedder::kFrequencies;
    std::vector<double> feats(static_cast<std::size_t>(b * 2 * n));
    for (std::int64_t i = 0; i < b; ++i) {
        const double t = sigma[i] * TimeEmbedder::kTimeScale;
        for (int k = 0; k < n; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / n);
            feats[i * 2 * n + k] = std::cos(t * freq);
            feats[i * 2 * n + n + k] = std::sin(t * freq);
        }
    }
    return Tensor::from({b, 2 * n}, std::move(feats));
}

TimeEmbedder TimeEmbedder::init(std::int64_t dim, RngStream& rng) {
    return TimeEmbedder{Linear::random(2 * kFrequencies, dim, rng), Linear::random(dim, dim, rng)};
}

Tensor TimeEmbedder::operator()(std::span<const double> sigma) const {
    for (double s : sigma) {
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("flow time must lie in [0,1]");
    }
    return fc2(silu(fc1(sinusoidal_features(sigma))));
}

void TimeEmbedder::collect(const std::string& prefix, NamedParams& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

SlotMlp SlotMlp::init(std::int64_t dim) { return SlotMlp{Linear::zeros(dim, 6 * dim)}; }

ModulationSlots split_slots(const Tensor& packed) {
    if (packed.rank() != 2 || packed.dim(1) % 6 != 0) {
        throw ShapeError("slot vector must be [B, 6D], got " + shape_str(packed.shape()));
    }
    const auto b = packed.dim(0);
    const auto d = packed.dim(1) / 6;
    ModulationSlots s;
    for (int i = 0; i < 6; ++i) s.slot[i] = reshape(narrow(packed, 1, i * d, d), {b, 1, d});
    return s;
}

ModulationSlots SlotMlp::operator()(const Tensor& t_emb) const { return split_slots(proj(silu(t_emb))); }

void SlotMlp::collect(const std::string& prefix, NamedParams& out) const { proj.collect(prefix + ".proj", out); }

Tensor modulated_ln(const Tensor& h, const Tensor& shift, const Tensor& scale) {
    return add(mul(layernorm_noaffine(h), add_scalar(scale, 1.0)), shift);
}

Tensor gated_residual(const Tensor& h, const Tensor& delta, const Tensor& gate) {
    return add(h, mul(gate, delta));
}

}  // namespace tmdit
