#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmdit/model.hpp"

namespace tmdit {

enum class Weighting { constant_one, sigma_one_minus_sigma };

double flow_weight(Weighting w, double sigma);

struct FlowSample {
    Tensor v_gt, a_gt;
    Tensor eps_v, eps_a;
    std::vector<double> sigma;  // one per batch element
    Tensor v_sigma, a_sigma;
};

// (1 - sigma_b) x + sigma_b eps, with sigma indexed by the leading (batch) axis.
Tensor interpolate(const Tensor& x, const Tensor& eps, std::span<const double> sigma);

// Explicit noise and times.
FlowSample make_flow_sample(const Tensor& v_gt, const Tensor& a_gt, const Tensor& eps_v, const Tensor& eps_a,
                            std::vector<double> sigma);
// sigma ~ U[0,1) per element from `sigma_rng`; noise for video then audio from `noise_rng`.
FlowSample make_flow_sample(const Tensor& v_gt, const Tensor& a_gt, RngStream& sigma_rng, RngStream& noise_rng);

// (eps_v - v_gt, eps_a - a_gt)
Velocity target_velocity(const FlowSample& s);

// mean_b w(sigma_b) * (mean |u_v - u_v*|^2 + mean |u_a - u_a*|^2), means taken per sample.
Tensor fm_loss(const Velocity& pred, const Velocity& target, std::span<const double> sigma, Weighting w);

struct CaptionDropout {
    Tensor y0;              // [B, L_y, D]
    std::vector<bool> dropped;
};

// y_uncond may be [B, L_y, D] or [1, L_y, D].
CaptionDropout caption_dropout(const Tensor& y_cond, const Tensor& y_uncond, double p_cap, RngStream& rng);

// max(0, 1 - s / s_max)
double mask_probability(std::int64_t step, std::int64_t s_max);

// With probability mask_probability(step), masks (or drops) video or audio, chosen uniformly.
OmniMode modality_mask_plan(std::int64_t step, std::int64_t s_max, ModalityMode mode, RngStream& rng);

// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t warmup_steps = 0;  // linear ramp from lr/warmup to lr
};

class Adam {
public:
    Adam(NamedParams params, AdamConfig cfg);

    double lr_at(std::int64_t step) const;
    // Applies one update from the accumulated gradients, then clears them.
    void step();
    void zero_grad();
    std::int64_t steps_taken() const { return t_; }
    const NamedParams& params() const { return params_; }

private:
    NamedParams params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

struct TrainerConfig {
    Weighting weighting = Weighting::constant_one;
    double p_cap = 0.1;
    std::int64_t s_max = 1000;
    ModalityMode modality_mode = ModalityMode::mask;
    double lr = 1e-3;
    std::int64_t warmup_steps = 0;
    std::int64_t batch = 8;
    std::int64_t steps = 2000;
};

struct TrainBatch {
    Tensor video;             // [B, C, F, H, W]
    Tensor audio;             // [B, L_a, d_a]
    std::vector<int> tokens;  // B * L_y
};

struct StepReport {
    std::int64_t step = 0;
    double loss = 0.0;
    double p_mask = 0.0;
    double lr = 0.0;
    OmniMode mode;
};

// One forward, loss, backward over the trainable set and one Adam update.
// All randomness comes from streams named after `seed` and `step`.
StepReport train_step(Model& model, Adam& opt, const TrainBatch& batch, const TrainerConfig& cfg,
                      std::int64_t step, std::uint64_t seed);

// "step, loss, p_mask, lr"
std::string format_log_line(const StepReport& r);

}  // namespace tmdit
