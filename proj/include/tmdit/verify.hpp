#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tmdit/model.hpp"

namespace tmdit {

// Norm-wise relative error between reverse-mode and central-difference
// gradients of <W, f()> with respect to `leaves`, W a fixed random tensor.
// f is re-evaluated with each leaf element perturbed by +-h.
double gradient_rel_error(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves, RngStream& rng,
                          double h = 1e-5);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Zero-gate identity, plug-in orthogonality, gradient checks, sampler order
// and small metric/schedule oracles, all on tiny random instances.
std::vector<CheckResult> run_property_suite(std::uint64_t seed);

}  // namespace tmdit
