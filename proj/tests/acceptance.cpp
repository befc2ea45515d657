// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "tmdit/config.hpp"
#include "tmdit/harness.hpp"
#include "tmdit/metrics.hpp"
#include "tmdit/model.hpp"
#include "tmdit/sampler.hpp"

using namespace tmdit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void randomize(const NamedParams& ps, RngStream& rng, double stddev = 0.5) {
    for (const auto& [n, t] : ps) {
        for (auto& v : Tensor(t).mutable_data()) v = stddev * rng.normal();
    }
}

ModulationSlots slots_with_zero_gates(RngStream& rng, std::int64_t b, std::int64_t d) {
    ModulationSlots s;
    for (int i = 0; i < 6; ++i) s.slot[i] = rng.normal_tensor({b, 1, d});
    s.slot[ModulationSlots::kGateMsa] = Tensor::zeros({b, 1, d});
    s.slot[ModulationSlots::kGateMlp] = Tensor::zeros({b, 1, d});
    return s;
}

ModelConfig small_model(std::int64_t dim) {
    ModelConfig c;
    c.dim = dim;
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

// 1. Video output with no omni blocks and static text ignores audio and equals the tower.
Outcome plugin_orthogonality() {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream rng(101);
    int bad = 0;
    std::int64_t lv = 0;
    for (int draw = 0; draw < 20; ++draw) {
        ModelConfig c = small_model(16);
        c.omni_blocks = 0;
        c.conditioning = Conditioning::static_text;
        c.family = draw % 2 ? BlockFamily::wan : BlockFamily::sd3_dual;
        c.frames = 4;
        c.height = 4;
        c.width = 4;
        c.patch_h = 2;
        c.patch_w = 2;
        c.audio_len = 8;
        lv = c.video_tokens();
        Model m(c, 500 + draw);
        m.randomize_all(rng);
        const Tensor v = rng.normal_tensor({2, c.channels, c.frames, c.height, c.width});
        const Tensor a = rng.normal_tensor({2, c.audio_len, c.audio_dim});
        const Tensor a2 = rng.normal_tensor(a.shape());
        const Tensor y = rng.normal_tensor({2, c.text_len, c.dim});
        const std::vector<double> s{rng.uniform(), rng.uniform()};
        const Tensor joint = m.forward(v, a, y, s).video;
        bad += !testing::bitwise_equal(joint, m.video_tower(v, y, s));
        bad += !testing::bitwise_equal(joint, m.forward(v, a2, y, s).video);
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < 10.0 && lv <= 16, fmt("20 draws, L_v=%g, D=16, %g mismatches, %.2fs", lv, bad, secs)};
}

// 2. Zero gates make every block an identity on its residual streams.
Outcome zero_gate_identity() {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream rng(202);
    const std::int64_t d = 8;
    const auto layout = RopeLayout::from_ratios(d / 2, 2, 1, 1);
    const auto vrope = video_rope_table(1, 2, 2, layout);
    const auto arope = audio_rope_table(3, layout);
    int bad = 0;
    int cases = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const Tensor x = rng.normal_tensor({2, 4, d});
        const Tensor y = rng.normal_tensor({2, 2, d});
        const Tensor a = rng.normal_tensor({2, 3, d});
        const Tensor t = rng.normal_tensor({2, d});

        // freshly initialised blocks: slot MLPs start at zero
        const auto dual0 = DualStreamBlock::init(d, 2, 2 * d, rng);
        const auto [dx, dy] = dual0(x, y, t, &vrope);
        bad += !(testing::bitwise_equal(dx, x) && testing::bitwise_equal(dy, y));
        const auto wan0 = WanBlock::init(d, 2, 2 * d, rng);
        bad += !testing::bitwise_equal(wan0(x, y, t, &vrope), x);
        const auto omni0 = OmniBlock::init(d, 2, 2 * d, rng);
        const TriStream o0 = omni0({x, y, a}, t, &vrope, &arope);
        bad += !(testing::bitwise_equal(o0.v, x) && testing::bitwise_equal(o0.y, y) && testing::bitwise_equal(o0.a, a));
        cases += 3;

        // random weights and shift/scale slots, only the gates at zero
        auto dual = DualStreamBlock::init(d, 2, 2 * d, rng);
        NamedParams ps;
        dual.collect("d", ps);
        randomize(ps, rng);
        const auto [rx, ry] = dual_stream_block(x, y, slots_with_zero_gates(rng, 2, d), slots_with_zero_gates(rng, 2, d),
                                                &vrope, dual.attn, dual.mlp_x, dual.mlp_y);
        bad += !(testing::bitwise_equal(rx, x) && testing::bitwise_equal(ry, y));

        auto wan = WanBlock::init(d, 2, 2 * d, rng);
        ps.clear();
        wan.collect("w", ps);
        randomize(ps, rng);
        NamedParams cross;
        wan.cross_attn.o.collect("o", cross);
        for (const auto& [n, p] : cross) {
            for (auto& v : Tensor(p).mutable_data()) v = 0.0;
        }
        bad += !testing::bitwise_equal(
            wan_block(x, y, slots_with_zero_gates(rng, 2, d), &vrope, wan.self_attn, wan.cross_attn, wan.mlp), x);

        auto omni = OmniBlock::init(d, 2, 2 * d, rng);
        ps.clear();
        omni.collect("o", ps);
        randomize(ps, rng);
        for (const OmniMode mode : {OmniMode{}, OmniMode{ModalityMode::mask, Modality::video},
                                    OmniMode{ModalityMode::mask, Modality::audio},
                                    OmniMode{ModalityMode::drop, Modality::video},
                                    OmniMode{ModalityMode::drop, Modality::audio}}) {
            const TriStream o = omni_block({x, y, a}, slots_with_zero_gates(rng, 2, d), slots_with_zero_gates(rng, 2, d),
                                           slots_with_zero_gates(rng, 2, d), &vrope, &arope, omni.attn, omni.mlp_v,
                                           omni.mlp_y, omni.mlp_a, mode);
            bad += !(testing::bitwise_equal(o.v, x) && testing::bitwise_equal(o.y, y) && testing::bitwise_equal(o.a, a));
        }
        cases += 7;
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < 5.0, fmt("50 instances, %g block calls, %g mismatches, %.2fs", cases, bad, secs)};
}

// 3. Tape gradients against central differences, blocks and the whole tiny model.
Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream rng(303);
    const std::int64_t d = 8;
    const auto layout = RopeLayout::from_ratios(d / 2, 2, 1, 1);
    const auto vrope = video_rope_table(1, 1, 3, layout);
    const auto arope = audio_rope_table(2, layout);
    double worst_dual = 0, worst_wan = 0, worst_omni = 0, worst_model = 0;
    std::uint64_t seed = 1;
    for (int inst = 0; inst < 10; ++inst) {
        const Tensor x = rng.normal_tensor({1, 3, d});
        const Tensor y = rng.normal_tensor({1, 2, d});
        const Tensor a = rng.normal_tensor({1, 2, d});
        const Tensor t = rng.normal_tensor({1, d});

        auto dual = DualStreamBlock::init(d, 2, 2 * d, rng);
        NamedParams ps;
        dual.collect("d", ps);
        randomize(ps, rng);
        std::vector<Tensor> leaves{x, y, t};
        for (auto& p : ps) leaves.push_back(p.second);
        worst_dual = std::max(worst_dual, testing::fd_rel_error([&] {
                                  auto [xo, yo] = dual(x, y, t, &vrope);
                                  return concat({xo, yo}, 1);
                              },
                                                                leaves, seed++));

        auto wan = WanBlock::init(d, 2, 2 * d, rng);
        ps.clear();
        wan.collect("w", ps);
        randomize(ps, rng);
        leaves = {x, y, t};
        for (auto& p : ps) leaves.push_back(p.second);
        worst_wan = std::max(worst_wan, testing::fd_rel_error([&] { return wan(x, y, t, &vrope); }, leaves, seed++));

        auto omni = OmniBlock::init(d, 2, 2 * d, rng);
        ps.clear();
        omni.collect("o", ps);
        randomize(ps, rng);
        leaves = {x, y, a, t};
        for (auto& p : ps) leaves.push_back(p.second);
        const OmniMode mode = inst % 3 == 0   ? OmniMode{}
                              : inst % 3 == 1 ? OmniMode{ModalityMode::mask, Modality::audio}
                                              : OmniMode{ModalityMode::drop, Modality::video};
        worst_omni = std::max(worst_omni, testing::fd_rel_error([&] {
                                  const TriStream o = omni({x, y, a}, t, &vrope, &arope, mode);
                                  return concat({o.v, o.y, o.a}, 1);
                              },
                                                                leaves, seed++));

        ModelConfig c = small_model(d);
        c.family = inst % 2 ? BlockFamily::wan : BlockFamily::sd3_dual;
        c.conditioning = inst % 2 ? Conditioning::static_text : Conditioning::dynamic_text;
        Model m(c, 900 + inst);
        m.randomize_all(rng);
        const Tensor v = rng.normal_tensor({1, c.channels, c.frames, c.height, c.width});
        const Tensor au = rng.normal_tensor({1, c.audio_len, c.audio_dim});
        const Tensor txt = rng.normal_tensor({1, c.text_len, c.dim});
        const std::vector<double> s{0.1 + 0.8 * rng.uniform()};
        leaves = {v, au, txt};
        for (auto& p : m.parameters()) leaves.push_back(p.second);
        // Instances alternate families. Each family's parameter coordinates are split into five
        // disjoint folds and its five instances take one fold each, so every coordinate is
        // checked once. Inputs are checked in full.
        const auto fold = [&](std::size_t leaf, std::size_t idx) {
            if (leaf < 3) return true;
            const std::uint64_t key = (static_cast<std::uint64_t>(leaf) << 32) ^ idx;
            return RngStream::named(77, "fold", key).uniform_int(5) == static_cast<std::uint64_t>(inst / 2);
        };
        worst_model = std::max(worst_model, testing::fd_rel_error([&] {
                                   const Velocity u = m.forward(v, au, txt, s, mode);
                                   return concat({reshape(u.video, {-1}), reshape(u.audio, {-1})}, 0);
                               },
                                                                  leaves, seed++, 1e-5, fold));
    }
    const double worst = std::max({worst_dual, worst_wan, worst_omni, worst_model});
    const double secs = seconds_since(t0);
    return {worst < 1e-5 && secs < 60.0,
            fmt("max rel err dual %.2g wan %.2g omni %.2g model %.2g", worst_dual, worst_wan, worst_omni, worst_model) +
                fmt(", %.1fs", secs)};
}

// 4. Interpolant endpoints, zero loss at the target, sigma(1-sigma) weighting.
Outcome flow_contract() {
    RngStream rng(404);
    const Tensor v = rng.normal_tensor({3, 2, 2, 2, 2});
    const Tensor a = rng.normal_tensor({3, 5, 2});
    const Tensor ev = rng.normal_tensor(v.shape());
    const Tensor ea = rng.normal_tensor(a.shape());
    const FlowSample at0 = make_flow_sample(v, a, ev, ea, {0.0, 0.0, 0.0});
    const FlowSample at1 = make_flow_sample(v, a, ev, ea, {1.0, 1.0, 1.0});
    const bool ends = testing::bitwise_equal(at0.v_sigma, v) && testing::bitwise_equal(at0.a_sigma, a) &&
                      testing::bitwise_equal(at1.v_sigma, ev) && testing::bitwise_equal(at1.a_sigma, ea);

    const FlowSample mid = make_flow_sample(v, a, ev, ea, {0.3, 0.6, 0.9});
    const Velocity target = target_velocity(mid);
    const double zero = fm_loss(target, target, mid.sigma, Weighting::sigma_one_minus_sigma).item();

    const Velocity pred{rng.normal_tensor(v.shape()), rng.normal_tensor(a.shape())};
    double worst = 0;
    for (double s : {0.25, 0.5, 0.75}) {
        const std::vector<double> ss(3, s);
        double hand = 0;
        for (int b = 0; b < 3; ++b) {
            double mv = 0, ma = 0;
            const std::int64_t nv = v.numel() / 3, na = a.numel() / 3;
            for (std::int64_t j = 0; j < nv; ++j) {
                const double e = pred.video.data()[b * nv + j] - target.video.data()[b * nv + j];
                mv += e * e;
            }
            for (std::int64_t j = 0; j < na; ++j) {
                const double e = pred.audio.data()[b * na + j] - target.audio.data()[b * na + j];
                ma += e * e;
            }
            hand += s * (1 - s) * (mv / nv + ma / na);
        }
        hand /= 3;
        worst = std::max(worst, std::abs(fm_loss(pred, target, ss, Weighting::sigma_one_minus_sigma).item() - hand));
    }
    return {ends && zero == 0.0 && worst < 1e-12,
            std::string(ends ? "endpoints exact" : "endpoints differ") + fmt(", loss at target %g, weighting err %.2g", zero, worst)};
}

// 5. Convergence order on u(x, sigma) = x.
Outcome sampler_order() {
    const auto error = [](Solver solver, int n) {
        const Latents init{Tensor::full({1, 1, 1, 1, 1}, 1.0), Tensor::full({1, 1, 1}, 1.0)};
        const Latents out =
            integrate([](const Latents& x, double) { return Velocity{x.video, x.audio}; }, init, {n, solver, 1.0});
        return std::abs(out.video.item() - std::exp(-1.0));
    };
    double e_lo = 1e9, e_hi = -1e9, h_lo = 1e9, h_hi = -1e9;
    const std::vector<int> grid{8, 16, 32, 64};
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double pe = std::log2(error(Solver::euler, grid[i]) / error(Solver::euler, grid[i + 1]));
        const double ph = std::log2(error(Solver::heun, grid[i]) / error(Solver::heun, grid[i + 1]));
        e_lo = std::min(e_lo, pe);
        e_hi = std::max(e_hi, pe);
        h_lo = std::min(h_lo, ph);
        h_hi = std::max(h_hi, ph);
    }
    const double rel = error(Solver::heun, 64) / std::exp(-1.0);
    const bool ok = e_lo >= 0.9 && e_hi <= 1.1 && h_lo >= 1.8 && h_hi <= 2.2 && rel < 1e-4;
    return {ok, fmt("euler [%.3f, %.3f], heun [%.3f, %.3f]", e_lo, e_hi, h_lo, h_hi) + fmt(", heun@64 rel err %.2g", rel)};
}

// 6. Frechet distance closed forms, identity and symmetry.
Outcome frechet_oracle() {
    const GaussianStats n01{1, {0.0}, {1.0}};
    const GaussianStats n11{1, {1.0}, {1.0}};
    const GaussianStats n04{1, {0.0}, {4.0}};
    const double shift = frechet_distance(n01, n11);
    const double widen = frechet_distance(n01, n04);

    RngStream rng(606);
    std::vector<double> vals(64 * 6);
    for (auto& x : vals) x = rng.normal();
    const EmbeddingSet e{64, 6, EmbeddingRole::video, vals};
    for (auto& x : vals) x = 0.5 * rng.normal() + 0.2;
    const EmbeddingSet f{64, 6, EmbeddingRole::video, vals};
    const double same = frechet_distance(gaussian_stats(e), gaussian_stats(e));
    const double ab = frechet_distance(gaussian_stats(e), gaussian_stats(f));
    const double ba = frechet_distance(gaussian_stats(f), gaussian_stats(e));
    const bool ok = std::abs(shift - 1.0) <= 1e-6 && std::abs(widen - 1.0) <= 1e-6 && same < 1e-8 && std::abs(ab - ba) <= 1e-8;
    return {ok, fmt("mean shift %.9g, var 1->4 %.9g, identical %.2g, asymmetry %.2g", shift, widen, same, std::abs(ab - ba))};
}

// 7. IoU of matched peaks.
Outcome av_align_oracle() {
    const double same = av_align({2, 7, 11}, {2, 7, 11}, 0);
    const double disjoint = av_align({1, 2}, {8, 9}, 0);
    const double third = av_align({1, 2}, {2, 3}, 0);
    RngStream rng(707);
    int drift = 0;
    for (int i = 0; i < 100; ++i) {
        PeakSet a, v;
        for (int k = 0; k < 3; ++k) a.push_back(4 * k + static_cast<std::int64_t>(rng.uniform_int(3)));
        for (int k = 0; k < 3; ++k) v.push_back(4 * k + static_cast<std::int64_t>(rng.uniform_int(3)));
        const auto off = static_cast<std::int64_t>(rng.uniform_int(10000)) - 5000;
        PeakSet as = a, vs = v;
        for (auto& p : as) p += off;
        for (auto& p : vs) p += off;
        drift += av_align(a, v, 1) != av_align(as, vs, 1);
    }
    const bool ok = same == 1.0 && disjoint == 0.0 && std::abs(third - 1.0 / 3.0) <= 1e-12 && drift == 0;
    return {ok, fmt("identical %g, disjoint %g, {1,2}/{2,3} %.15g, shift mismatches %g", same, disjoint, third, drift)};
}

// 8. Counters against an independent count over the schedule.
Outcome counter_semantics() {
    const auto s = build_schedule(2, 2, SchedulePolicy::strict_alternate);
    const auto lit = build_schedule(2, 2, SchedulePolicy::strict_alternate, CounterMode::literal);
    const std::vector<char> want{'V', 'A', 'V', 'A'};
    std::vector<int> iv, ia;
    int nv = 0, na = 0;
    bool order = s.order.size() == want.size();
    for (std::size_t i = 0; order && i < want.size(); ++i) {
        order = static_cast<char>(s.order[i]) == want[i];
        (want[i] == 'V' ? nv : na) += 1;
        iv.push_back(nv);
        ia.push_back(na);
    }
    std::vector<int> iv1 = iv, ia1 = ia;
    for (auto& x : iv1) ++x;
    for (auto& x : ia1) ++x;
    const bool ok = order && s.video_counter == iv && s.audio_counter == ia && iv == std::vector<int>{1, 1, 2, 2} &&
                    ia == std::vector<int>{0, 1, 1, 2} && lit.video_counter == iv1 && lit.audio_counter == ia1;
    return {ok, ok ? "i_v=[1,1,2,2] i_a=[0,1,1,2], literal +1" : "counter mismatch"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

double metric(const MetricReport& r, const std::string& key) {
    for (const auto& [k, v] : r) {
        if (k == key) return v;
    }
    throw std::runtime_error("missing metric " + key);
}

// 9. Default config: loss halves and generated pairs beat the shuffled baseline.
Outcome learning_signal() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_config(TMDIT_DEFAULT_CONFIG);
    cfg.out_dir = (fs::temp_directory_path() / "tmdit_acceptance_e2e").string();
    fs::remove_all(cfg.out_dir);
    run_train(cfg);
    run_sample(cfg);
    const MetricReport r = run_eval(cfg);

    std::vector<double> loss;
    std::istringstream log(slurp(fs::path(cfg.out_dir) / kTrainLogFile));
    for (std::string line; std::getline(log, line);) {
        const auto comma = line.find(',');
        loss.push_back(std::stod(line.substr(comma + 1)));
    }
    if (loss.size() < 200) return {false, "training log too short"};
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        first += loss[i] / 100;
        last += loss[loss.size() - 100 + i] / 100;
    }
    const double matched = metric(r, "av_align");
    const double shuffled = metric(r, "av_align_shuffled");
    const double secs = seconds_since(t0);
    const bool ok = last <= 0.5 * first && matched >= shuffled + 0.1 && secs < 1800 && cfg.eval.samples == 32 &&
                    cfg.train.steps == 2000;
    return {ok, fmt("loss %.4g -> %.4g (ratio %.3f)", first, last, last / first) +
                    fmt(", av_align %.4f vs shuffled %.4f (margin %.4f), %.0fs", matched, shuffled, matched - shuffled, secs)};
}

// 10. Two identical runs give identical bytes.
Outcome determinism() {
    ExperimentConfig cfg = load_config(TMDIT_DEFAULT_CONFIG);
    cfg.train.steps = 40;
    cfg.eval.samples = 6;
    cfg.sampler.steps = 8;
    cfg.seed = 17;
    std::vector<std::string> runs[2];
    for (int r = 0; r < 2; ++r) {
        cfg.out_dir = (fs::temp_directory_path() / ("tmdit_acceptance_det" + std::to_string(r))).string();
        fs::remove_all(cfg.out_dir);
        run_train(cfg);
        run_sample(cfg);
        run_eval(cfg);
        for (const char* f : {kCheckpointFile, kTrainLogFile, kSamplesFile, kMetricsFile}) {
            runs[r].push_back(slurp(fs::path(cfg.out_dir) / f));
        }
    }
    int differ = 0;
    std::size_t bytes = 0;
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
        differ += runs[0][i] != runs[1][i] || runs[0][i].empty();
        bytes += runs[0][i].size();
    }
    return {differ == 0, fmt("checkpoint, log, latents, metrics: %g of 4 differ (%g bytes compared)", differ,
                             static_cast<double>(bytes))};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"plug-in orthogonality", plugin_orthogonality},
        {"zero-gate identity", zero_gate_identity},
        {"gradient correctness", gradient_correctness},
        {"flow-matching contract", flow_contract},
        {"sampler order", sampler_order},
        {"frechet oracle", frechet_oracle},
        {"av-align oracle", av_align_oracle},
        {"counter semantics", counter_semantics},
        {"end-to-end learning signal", learning_signal},
        {"pipeline determinism", determinism},
    };
    // optional argument: comma-free list of criterion numbers to run, e.g. "1 2 9"
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s criterion %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
