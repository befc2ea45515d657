#include "tmdit/sampler.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tmdit {

std::vector<double> sigma_grid(int steps) {
    if (steps < 1) throw std::invalid_argument("sampler needs at least one step");
    std::vector<double> g(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) g[i] = static_cast<double>(steps - i) / static_cast<double>(steps);
    return g;
}

namespace {

// x + h * (a + b) / 2 when `b` is given, else x + h * a.
Tensor step_tensor(const Tensor& x, double h, const Tensor& a, const Tensor* b = nullptr) {
    if (x.shape() != a.shape()) throw ShapeError("velocity shape " + shape_str(a.shape()) + " != state " + shape_str(x.shape()));
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto da = a.data();
    if (b) {
        const auto db = b->data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += h * (0.5 * (da[i] + db[i]));
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += h * da[i];
    }
    return Tensor::from(x.shape(), std::move(out));
}

Tensor guide(const Tensor& uc, const Tensor& uu, double gamma) {
    std::vector<double> out(uc.data().begin(), uc.data().end());
    const auto du = uu.data();
    const double k = gamma - 1.0;
    if (k == 0.0) return Tensor::from(uc.shape(), std::move(out));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += k * (out[i] - du[i]);
    return Tensor::from(uc.shape(), std::move(out));
}

bool finite(const Latents& s) {
    for (const Tensor* t : {&s.video, &s.audio}) {
        for (double v : t->data()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace

Velocity cfg_velocity(const Model& model, const Latents& state, double sigma, const Tensor& y_cond,
                      const Tensor& y_uncond, double gamma) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("guidance scale must be non-negative");
    const std::vector<double> s(static_cast<std::size_t>(state.video.dim(0)), sigma);
    const Velocity uc = model.forward(state.video, state.audio, y_cond, s);
    const Velocity uu = model.forward(state.video, state.audio, y_uncond, s);
    return {guide(uc.video, uu.video, gamma), guide(uc.audio, uu.audio, gamma)};
}

Latents integrate(const VelocityField& field, const Latents& init, const SamplerConfig& cfg) {
    NoGradGuard no_grad;
    const auto grid = sigma_grid(cfg.steps);
    Latents x{init.video.detach(), init.audio.detach()};
    for (int i = 0; i < cfg.steps; ++i) {
        const double s0 = grid[i];
        const double s1 = grid[i + 1];
        const double h = s1 - s0;
        try {
            const Velocity u0 = field(x, s0);
            if (cfg.solver == Solver::euler) {
                x = {step_tensor(x.video, h, u0.video), step_tensor(x.audio, h, u0.audio)};
            } else {
                const Latents pred{step_tensor(x.video, h, u0.video), step_tensor(x.audio, h, u0.audio)};
                const Velocity u1 = field(pred, s1);
                x = {step_tensor(x.video, h, u0.video, &u1.video), step_tensor(x.audio, h, u0.audio, &u1.audio)};
            }
        } catch (const NumericalError& e) {
            throw NumericalError("sampler step " + std::to_string(i) + ": " + e.what());
        }
        if (!finite(x)) throw NumericalError("sampler step " + std::to_string(i) + ": non-finite state");
    }
    return x;
}

Latents generate(const Model& model, std::span<const int> tokens, std::int64_t batch, const SamplerConfig& cfg,
                 std::uint64_t seed) {
    const auto& mc = model.config();
    NoGradGuard no_grad;
    auto rng = RngStream::named(seed, "sample.noise");
    Latents init{rng.normal_tensor({batch, mc.channels, mc.frames, mc.height, mc.width}),
                 rng.normal_tensor({batch, mc.audio_len, mc.audio_dim})};
    const Tensor y_cond = model.embed_text(tokens, batch);
    const Tensor y_uncond = model.null_text(batch);
    const double gamma = cfg.guidance;
    return integrate([&](const Latents& s, double sigma) { return cfg_velocity(model, s, sigma, y_cond, y_uncond, gamma); },
                     init, cfg);
}

}  // namespace tmdit
