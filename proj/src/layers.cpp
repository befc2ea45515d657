#include "tmdit/layers.hpp"

#include <cmath>

namespace tmdit {

Linear Linear::random(std::int64_t in, std::int64_t out, RngStream& rng, bool with_bias, double gain) {
    Linear l;
    l.weight = rng.normal_tensor({in, out}, gain / std::sqrt(static_cast<double>(in)));
    l.weight.set_requires_grad(true);
    if (with_bias) l.bias = Tensor::zeros({out}, true);
    return l;
}

Linear Linear::zeros(std::int64_t in, std::int64_t out, bool with_bias) {
    Linear l;
    l.weight = Tensor::zeros({in, out}, true);
    if (with_bias) l.bias = Tensor::zeros({out}, true);
    return l;
}

Linear Linear::identity(std::int64_t n) {
    Linear l = zeros(n, n, false);
    auto w = l.weight.mutable_data();
    for (std::int64_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
    return l;
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

Mlp Mlp::random(std::int64_t dim, std::int64_t hidden, RngStream& rng) {
    return Mlp{Linear::random(dim, hidden, rng), Linear::random(hidden, dim, rng)};
}

void Mlp::collect(const std::string& prefix, NamedParams& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

}  // namespace tmdit
