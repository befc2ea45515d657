#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tmdit/rng.hpp"
#include "tmdit/tensor.hpp"

namespace tmdit {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// y = x W + b with W stored [in, out].
struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when the layer has no bias

    static Linear random(std::int64_t in, std::int64_t out, RngStream& rng, bool with_bias = true, double gain = 1.0);
    static Linear zeros(std::int64_t in, std::int64_t out, bool with_bias = true);
    static Linear identity(std::int64_t n);

    std::int64_t in_features() const { return weight.dim(0); }
    std::int64_t out_features() const { return weight.dim(1); }

    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Two-layer feed-forward with GELU.
struct Mlp {
    Linear fc1;
    Linear fc2;

    static Mlp random(std::int64_t dim, std::int64_t hidden, RngStream& rng);

    Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
    void collect(const std::string& prefix, NamedParams& out) const;
};

}  // namespace tmdit
