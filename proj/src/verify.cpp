#include "tmdit/verify.hpp"

#include <cmath>
#include <cstdio>

#include "tmdit/metrics.hpp"
#include "tmdit/sampler.hpp"

namespace tmdit {

double gradient_rel_error(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves, RngStream& rng,
                          double h) {
    std::vector<Tensor> ps = leaves;
    for (auto& p : ps) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    const Tensor probe = f();
    const Tensor w = rng.normal_tensor(probe.shape());
    sum(mul(probe, w)).backward();

    const auto objective = [&] {
        NoGradGuard guard;
        const Tensor out = f();
        double s = 0.0;
        for (std::int64_t i = 0; i < out.numel(); ++i) s += out.data()[i] * w.data()[i];
        return s;
    };
    double diff = 0.0;
    double na = 0.0;
    double nn = 0.0;
    for (auto& p : ps) {
        const auto g = p.grad();
        auto data = p.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = objective();
            data[i] = keep - h;
            const double down = objective();
            data[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = g.empty() ? 0.0 : g[i];
            diff += (analytic - numeric) * (analytic - numeric);
            na += analytic * analytic;
            nn += numeric * numeric;
        }
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.dim = 8;
    c.heads = 2;
    c.mlp_ratio = 2;
    c.video_blocks = 2;
    c.audio_blocks = 2;
    c.omni_blocks = 1;
    c.channels = 2;
    c.frames = 2;
    c.height = 2;
    c.width = 2;
    c.patch_h = 1;
    c.patch_w = 2;
    c.audio_len = 3;
    c.audio_dim = 2;
    c.text_len = 2;
    c.vocab = 4;
    return c;
}

struct Inputs {
    Tensor video, audio, text;
    std::vector<double> sigma;
};

Inputs random_inputs(const Model& m, std::int64_t b, RngStream& rng) {
    const auto& c = m.config();
    Inputs in;
    in.video = rng.normal_tensor({b, c.channels, c.frames, c.height, c.width});
    in.audio = rng.normal_tensor({b, c.audio_len, c.audio_dim});
    in.text = rng.normal_tensor({b, c.text_len, c.dim});
    for (std::int64_t i = 0; i < b; ++i) in.sigma.push_back(rng.uniform());
    return in;
}

CheckResult zero_gate_identity(std::uint64_t seed) {
    auto rng = RngStream::named(seed, "check.zero_gate");
    const std::int64_t d = 8;
    const auto layout = RopeLayout::from_ratios(4, 2, 1, 1, 10000);
    const auto vrope = video_rope_table(1, 1, 3, layout);
    const auto arope = audio_rope_table(2, layout);
    int failures = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = rng.normal_tensor({2, 3, d});
        const Tensor y = rng.normal_tensor({2, 2, d});
        const Tensor a = rng.normal_tensor({2, 2, d});
        const Tensor t = rng.normal_tensor({2, d});

        auto dual = DualStreamBlock::init(d, 2, 2 * d, rng);
        auto [xo, yo] = dual(x, y, t, &vrope);
        failures += !(bitwise_equal(xo, x) && bitwise_equal(yo, y));

        auto wan = WanBlock::init(d, 2, 2 * d, rng);
        failures += !bitwise_equal(wan(x, y, t, &vrope), x);

        auto omni = OmniBlock::init(d, 2, 2 * d, rng);
        for (auto mode : {OmniMode{}, OmniMode{ModalityMode::mask, Modality::audio},
                          OmniMode{ModalityMode::drop, Modality::video}}) {
            const TriStream out = omni({x, y, a}, t, &vrope, &arope, mode);
            failures += !(bitwise_equal(out.v, x) && bitwise_equal(out.y, y) && bitwise_equal(out.a, a));
        }
    }
    return {"zero_gate_identity", failures == 0, std::to_string(failures) + " mismatches"};
}

CheckResult orthogonality(std::uint64_t seed) {
    auto rng = RngStream::named(seed, "check.orthogonality");
    ModelConfig c = tiny_config();
    c.omni_blocks = 0;
    c.conditioning = Conditioning::static_text;
    int failures = 0;
    for (int trial = 0; trial < 5; ++trial) {
        Model m(c, seed + trial);
        m.randomize_all(rng);
        const Inputs in = random_inputs(m, 2, rng);
        const Tensor other = rng.normal_tensor(in.audio.shape());
        const Velocity u1 = m.forward(in.video, in.audio, in.text, in.sigma);
        const Velocity u2 = m.forward(in.video, other, in.text, in.sigma);
        const Tensor tower = m.video_tower(in.video, in.text, in.sigma);
        failures += !(bitwise_equal(u1.video, u2.video) && bitwise_equal(u1.video, tower));
    }
    return {"plugin_orthogonality", failures == 0, std::to_string(failures) + " mismatches"};
}

CheckResult gradients(std::uint64_t seed) {
    auto rng = RngStream::named(seed, "check.gradients");
    double worst = 0.0;
    for (auto family : {BlockFamily::sd3_dual, BlockFamily::wan}) {
        ModelConfig c = tiny_config();
        c.family = family;
        c.conditioning = family == BlockFamily::wan ? Conditioning::static_text : Conditioning::dynamic_text;
        Model m(c, seed);
        m.randomize_all(rng);
        const Inputs in = random_inputs(m, 1, rng);
        std::vector<Tensor> leaves;
        for (auto& [name, t] : m.parameters()) leaves.push_back(t);
        leaves.push_back(in.text);
        const OmniMode mode{ModalityMode::mask, Modality::video};
        const auto f = [&] {
            const Velocity u = m.forward(in.video, in.audio, in.text, in.sigma, mode);
            return concat({reshape(u.video, {-1}), reshape(u.audio, {-1})}, 0);
        };
        worst = std::max(worst, gradient_rel_error(f, leaves, rng));
    }
    return {"gradient_check", worst < 1e-5, fmt("max rel err %.3g", worst)};
}

double order_error(Solver solver, int steps) {
    const Latents init{Tensor::full({1, 1, 1, 1, 1}, 1.0), Tensor::full({1, 1, 1}, -0.5)};
    const auto field = [](const Latents& s, double) { return Velocity{s.video, s.audio}; };
    const Latents out = integrate(field, init, {steps, solver, 1.0});
    return std::abs(out.video.item() - std::exp(-1.0));
}

CheckResult sampler_order(Solver solver, double lo, double hi) {
    double min_order = 1e9;
    double max_order = -1e9;
    for (int n : {8, 16, 32}) {
        const double p = std::log2(order_error(solver, n) / order_error(solver, 2 * n));
        min_order = std::min(min_order, p);
        max_order = std::max(max_order, p);
    }
    const bool ok = min_order >= lo && max_order <= hi;
    return {solver == Solver::euler ? "sampler_order_euler" : "sampler_order_heun", ok,
            fmt("order in [%.3f, ", min_order) + fmt("%.3f]", max_order)};
}

CheckResult counters() {
    const auto s = build_schedule(2, 2, SchedulePolicy::strict_alternate);
    const auto lit = build_schedule(2, 2, SchedulePolicy::strict_alternate, CounterMode::literal);
    const bool ok = s.video_counter == std::vector<int>{1, 1, 2, 2} && s.audio_counter == std::vector<int>{0, 1, 1, 2} &&
                    lit.video_counter == std::vector<int>{2, 2, 3, 3} && lit.audio_counter == std::vector<int>{1, 2, 2, 3};
    return {"schedule_counters", ok, ""};
}

CheckResult metric_oracles() {
    const GaussianStats a{1, {0.0}, {1.0}};
    const GaussianStats b{1, {1.0}, {1.0}};
    const GaussianStats c{1, {0.0}, {4.0}};
    const double d1 = frechet_distance(a, b);
    const double d2 = frechet_distance(a, c);
    const double iou = av_align({1, 2}, {2, 3}, 0);
    const bool ok = std::abs(d1 - 1.0) < 1e-6 && std::abs(d2 - 1.0) < 1e-6 && std::abs(iou - 1.0 / 3.0) < 1e-12;
    return {"metric_oracles", ok, fmt("frechet %.9g, ", d1) + fmt("%.9g, ", d2) + fmt("iou %.12g", iou)};
}

}  // namespace

std::vector<CheckResult> run_property_suite(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const auto guarded = [&](const char* name, const std::function<CheckResult()>& fn) {
        try {
            out.push_back(fn());
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("threw: ") + e.what()});
        }
    };
    guarded("zero_gate_identity", [&] { return zero_gate_identity(seed); });
    guarded("plugin_orthogonality", [&] { return orthogonality(seed); });
    guarded("gradient_check", [&] { return gradients(seed); });
    guarded("sampler_order_euler", [] { return sampler_order(Solver::euler, 0.9, 1.1); });
    guarded("sampler_order_heun", [] { return sampler_order(Solver::heun, 1.8, 2.2); });
    guarded("schedule_counters", [] { return counters(); });
    guarded("metric_oracles", [] { return metric_oracles(); });
    return out;
}

}  // namespace tmdit
