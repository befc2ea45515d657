#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tmdit/model.hpp"

namespace tmdit {

enum class Solver { euler, heun };

struct SamplerConfig {
    int steps = 50;
    Solver solver = Solver::euler;
    double guidance = 3.0;
};

// Joint (video, audio) latent state; same layout as a velocity.
using Latents = Velocity;

// 1 = s_0 > s_1 > ... > s_N = 0, uniform.
std::vector<double> sigma_grid(int steps);

// d(state)/d(sigma)
using VelocityField = std::function<Velocity(const Latents& state, double sigma)>;

// u_c + (gamma - 1)(u_c - u_u), i.e. u_u + gamma (u_c - u_u). Two model evaluations.
Velocity cfg_velocity(const Model& model, const Latents& state, double sigma, const Tensor& y_cond,
                      const Tensor& y_uncond, double gamma);

// Integrates from sigma=1 to sigma=0 without recording gradients. A non-finite
// state raises NumericalError naming the step.
Latents integrate(const VelocityField& field, const Latents& init, const SamplerConfig& cfg);

// Unit Gaussian start drawn from `seed`, guided by the caption `tokens` (batch * L_y ids).
Latents generate(const Model& model, std::span<const int> tokens, std::int64_t batch, const SamplerConfig& cfg,
                 std::uint64_t seed);

}  // namespace tmdit
