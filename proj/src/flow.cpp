#include "tmdit/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace tmdit {

double flow_weight(Weighting w, double sigma) {
    return w == Weighting::constant_one ? 1.0 : sigma * (1.0 - sigma);
}

namespace {

// [B] values -> tensor broadcastable against a rank-r tensor with leading batch axis.
Tensor per_batch(std::span<const double> values, int rank) {
    Shape shape(static_cast<std::size_t>(rank), 1);
    shape[0] = static_cast<std::int64_t>(values.size());
    return Tensor::from(shape, {values.begin(), values.end()});
}

void check_sigma(std::span<const double> sigma, std::int64_t batch) {
    if (static_cast<std::int64_t>(sigma.size()) != batch) throw ShapeError("one sigma per batch element required");
    for (double s : sigma) {
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("sigma outside [0, 1]");
    }
}

}  // namespace

Tensor interpolate(const Tensor& x, const Tensor& eps, std::span<const double> sigma) {
    if (x.shape() != eps.shape()) throw ShapeError("noise shape " + shape_str(eps.shape()) + " != " + shape_str(x.shape()));
    check_sigma(sigma, x.dim(0));
    std::vector<double> keep(sigma.size());
    std::transform(sigma.begin(), sigma.end(), keep.begin(), [](double s) { return 1.0 - s; });
    return add(mul(x, per_batch(keep, x.rank())), mul(eps, per_batch(sigma, x.rank())));
}

FlowSample make_flow_sample(const Tensor& v_gt, const Tensor& a_gt, const Tensor& eps_v, const Tensor& eps_a,
                            std::vector<double> sigma) {
    if (v_gt.dim(0) != a_gt.dim(0)) throw ShapeError("video and audio batch sizes differ");
    FlowSample s{v_gt, a_gt, eps_v, eps_a, std::move(sigma), {}, {}};
    s.v_sigma = interpolate(v_gt, eps_v, s.sigma);
    s.a_sigma = interpolate(a_gt, eps_a, s.sigma);
    return s;
}

FlowSample make_flow_sample(const Tensor& v_gt, const Tensor& a_gt, RngStream& sigma_rng, RngStream& noise_rng) {
    std::vector<double> sigma(static_cast<std::size_t>(v_gt.dim(0)));
    for (auto& s : sigma) s = sigma_rng.uniform();
    Tensor eps_v = noise_rng.normal_tensor(v_gt.shape());
    Tensor eps_a = noise_rng.normal_tensor(a_gt.shape());
    return make_flow_sample(v_gt, a_gt, eps_v, eps_a, std::move(sigma));
}

Velocity target_velocity(const FlowSample& s) { return {sub(s.eps_v, s.v_gt), sub(s.eps_a, s.a_gt)}; }

Tensor fm_loss(const Velocity& pred, const Velocity& target, std::span<const double> sigma, Weighting w) {
    if (pred.video.shape() != target.video.shape() || pred.audio.shape() != target.audio.shape()) {
        throw ShapeError("prediction and target shapes differ");
    }
    const auto b = pred.video.dim(0);
    check_sigma(sigma, b);
    const auto per_sample = [b](const Tensor& p, const Tensor& t) {
        return mean_lastdim(reshape(square(sub(p, t)), {b, -1}));
    };
    Tensor err = add(per_sample(pred.video, target.video), per_sample(pred.audio, target.audio));
    std::vector<double> weights(sigma.size());
    std::transform(sigma.begin(), sigma.end(), weights.begin(), [w](double s) { return flow_weight(w, s); });
    return mean(mul(err, Tensor::from({b}, std::move(weights))));
}

CaptionDropout caption_dropout(const Tensor& y_cond, const Tensor& y_uncond, double p_cap, RngStream& rng) {
    if (!(p_cap >= 0.0 && p_cap <= 1.0)) throw std::invalid_argument("p_cap outside [0, 1]");
    if (y_cond.rank() != 3) throw ShapeError("caption embedding must be [B, L_y, D]");
    const auto b = y_cond.dim(0);
    CaptionDropout out;
    std::vector<double> m(static_cast<std::size_t>(b));
    std::vector<double> keep(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const bool drop = rng.bernoulli(p_cap);
        out.dropped.push_back(drop);
        m[i] = drop ? 1.0 : 0.0;
        keep[i] = 1.0 - m[i];
    }
    out.y0 = add(mul(y_cond, per_batch(keep, 3)), mul(y_uncond, per_batch(m, 3)));
    return out;
}

double mask_probability(std::int64_t step, std::int64_t s_max) {
    if (step < 0) throw std::invalid_argument("step must be non-negative");
    if (s_max <= 0) throw std::invalid_argument("s_max must be positive");
    return std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(s_max));
}

OmniMode modality_mask_plan(std::int64_t step, std::int64_t s_max, ModalityMode mode, RngStream& rng) {
    const double p = mask_probability(step, s_max);
    // Draw both variates unconditionally so the stream position is independent of the outcome.
    const bool hit = rng.bernoulli(p);
    const bool audio = rng.uniform_int(2) == 1;
    if (mode == ModalityMode::none || !hit) return {};
    return {mode, audio ? Modality::audio : Modality::video};
}

// ---------------------------------------------------------------------------

Adam::Adam(NamedParams params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& [name, t] : params_) {
        m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
}

double Adam::lr_at(std::int64_t step) const {
    if (cfg_.warmup_steps <= 0 || step >= cfg_.warmup_steps) return cfg_.lr;
    return cfg_.lr * static_cast<double>(step + 1) / static_cast<double>(cfg_.warmup_steps);
}

void Adam::step() {
    const double lr = lr_at(t_);
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].second;
        const auto g = p.grad();
        if (g.empty()) continue;
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

StepReport train_step(Model& model, Adam& opt, const TrainBatch& batch, const TrainerConfig& cfg,
                      std::int64_t step, std::uint64_t seed) {
    const auto b = batch.video.dim(0);
    auto sigma_rng = RngStream::named(seed, "train.sigma", static_cast<std::uint64_t>(step));
    auto noise_rng = RngStream::named(seed, "train.noise", static_cast<std::uint64_t>(step));
    auto caption_rng = RngStream::named(seed, "train.caption", static_cast<std::uint64_t>(step));
    auto mask_rng = RngStream::named(seed, "train.mask", static_cast<std::uint64_t>(step));

    StepReport r;
    r.step = step;
    r.lr = opt.lr_at(opt.steps_taken());
    r.p_mask = cfg.modality_mode == ModalityMode::none ? 0.0 : mask_probability(step, cfg.s_max);
    r.mode = modality_mask_plan(step, cfg.s_max, cfg.modality_mode, mask_rng);

    const FlowSample s = make_flow_sample(batch.video, batch.audio, sigma_rng, noise_rng);
    const auto y = caption_dropout(model.embed_text(batch.tokens, b), model.null_text(1), cfg.p_cap, caption_rng);
    const Velocity pred = model.forward(s.v_sigma, s.a_sigma, y.y0, s.sigma, r.mode);
    Tensor loss = fm_loss(pred, target_velocity(s), s.sigma, cfg.weighting);
    r.loss = loss.item();
    opt.zero_grad();
    loss.backward();
    opt.step();
    return r;
}

std::string format_log_line(const StepReport& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%lld, %.9g, %.6g, %.6g", static_cast<long long>(r.step), r.loss, r.p_mask, r.lr);
    return buf;
}

}  // namespace tmdit
