#include "tmdit/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tmdit/tensor_io.hpp"

namespace tmdit {

namespace fs = std::filesystem;

namespace {

fs::path out_path(const ExperimentConfig& cfg, const char* name) { return fs::path(cfg.out_dir) / name; }

void ensure_out_dir(const ExperimentConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
}

SceneConfig scene_of(const ExperimentConfig& cfg) {
    SceneConfig s = cfg.scene;
    s.adopt_geometry(cfg.model);
    return s;
}

void write_checkpoint(const ExperimentConfig& cfg, const Model& model, std::uint64_t steps) {
    Container c;
    c.config = config_echo(cfg);
    c.tensors = model.parameters();
    c.rng_seed = cfg.seed;
    c.rng_counter = steps;
    write_container(out_path(cfg, kCheckpointFile), ContainerKind::checkpoint, c);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
}

// Fixed random linear map R^in -> R^out, rows scaled by 1/sqrt(in).
struct Projection {
    std::int64_t in = 0;
    std::int64_t out = 0;
    std::vector<double> w;

    Projection(std::uint64_t seed, const char* name, std::int64_t in_, std::int64_t out_) : in(in_), out(out_) {
        auto rng = RngStream::named(seed, name);
        w = rng.normals(static_cast<std::size_t>(in * out));
        for (auto& v : w) v /= std::sqrt(static_cast<double>(in));
    }

    void apply(const double* x, double* y) const {
        for (std::int64_t o = 0; o < out; ++o) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
            y[o] = acc;
        }
    }
};

// One row per batch element.
EmbeddingSet project_rows(const Tensor& t, const Projection& p, EmbeddingRole role) {
    const auto b = t.dim(0);
    std::vector<double> rows(static_cast<std::size_t>(b * p.out));
    for (std::int64_t i = 0; i < b; ++i) p.apply(t.data().data() + i * p.in, rows.data() + i * p.out);
    return {b, p.out, role, std::move(rows)};
}

// Per-frame video embeddings of sample b: frame f gathers C x H x W values.
EmbeddingSet video_frames(const Tensor& video, std::int64_t b, const Projection& p) {
    const auto c = video.dim(1);
    const auto f = video.dim(2);
    const auto hw = video.dim(3) * video.dim(4);
    const auto d = video.data();
    std::vector<double> rows(static_cast<std::size_t>(f * p.out));
    std::vector<double> frame(static_cast<std::size_t>(c * hw));
    for (std::int64_t t = 0; t < f; ++t) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t j = 0; j < hw; ++j) frame[ch * hw + j] = d[((b * c + ch) * f + t) * hw + j];
        }
        p.apply(frame.data(), rows.data() + t * p.out);
    }
    return {f, p.out, EmbeddingRole::frame, std::move(rows)};
}

// Per-frame audio embeddings of sample b (the audio steps aligned with each frame).
EmbeddingSet audio_frames(const Tensor& audio, std::int64_t b, std::int64_t frames, const Projection& p) {
    const auto per = audio.dim(1) * audio.dim(2) / frames;
    std::vector<double> rows(static_cast<std::size_t>(frames * p.out));
    const double* base = audio.data().data() + b * audio.dim(1) * audio.dim(2);
    for (std::int64_t t = 0; t < frames; ++t) p.apply(base + t * per, rows.data() + t * p.out);
    return {frames, p.out, EmbeddingRole::audio, std::move(rows)};
}

std::vector<double> row_mean(const EmbeddingSet& e, std::int64_t begin, std::int64_t end) {
    std::vector<double> m(static_cast<std::size_t>(e.d), 0.0);
    for (std::int64_t i = begin; i < end; ++i) {
        for (std::int64_t j = 0; j < e.d; ++j) m[j] += e.row(i)[j];
    }
    for (auto& v : m) v /= static_cast<double>(end - begin);
    return m;
}

EmbeddingSet text_embeddings(const std::vector<int>& tokens, std::int64_t n, std::int64_t text_len,
                             std::int64_t vocab, std::int64_t dim, std::uint64_t seed) {
    auto rng = RngStream::named(seed, "eval.proj.text");
    const auto table = rng.normals(static_cast<std::size_t>(vocab * dim));
    std::vector<double> rows(static_cast<std::size_t>(n * dim), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < text_len; ++k) {
            const int tok = tokens[i * text_len + k];
            for (std::int64_t j = 0; j < dim; ++j) rows[i * dim + j] += table[tok * dim + j];
        }
    }
    return {n, dim, EmbeddingRole::text, std::move(rows)};
}

struct ModalityScores {
    double clip = 0, clap = 0, ib_av = 0, cavp = 0, avh = 0, javis = 0;
};

ModalityScores cosine_scores(const ExperimentConfig& cfg, const Tensor& video, const Tensor& audio,
                             const EmbeddingSet& text) {
    const auto& m = cfg.model;
    const auto k = cfg.eval.feature_dim;
    const auto n = video.dim(0);
    const Projection pf(cfg.eval.feature_seed, "eval.proj.frame", m.channels * m.height * m.width, k);
    const Projection pa(cfg.eval.feature_seed, "eval.proj.audio_frame", m.audio_len * m.audio_dim / m.frames, k);
    const auto windows = javis_windows(m.frames, cfg.scene.fps, cfg.eval.javis);

    std::vector<EmbeddingSet> frames;
    std::vector<double> video_global;
    std::vector<double> audio_global;
    ModalityScores s;
    for (std::int64_t i = 0; i < n; ++i) {
        EmbeddingSet vf = video_frames(video, i, pf);
        const EmbeddingSet af = audio_frames(audio, i, m.frames, pa);
        const auto vg = row_mean(vf, 0, vf.n);
        const auto ag = row_mean(af, 0, af.n);
        video_global.insert(video_global.end(), vg.begin(), vg.end());
        audio_global.insert(audio_global.end(), ag.begin(), ag.end());
        s.avh += avh_score(vf, ag);
        std::vector<double> aw;
        for (const auto& w : windows) {
            const auto mean = row_mean(af, w.begin, w.end);
            aw.insert(aw.end(), mean.begin(), mean.end());
        }
        s.javis += javis_score(vf, {static_cast<std::int64_t>(windows.size()), k, EmbeddingRole::audio, aw},
                               cfg.scene.fps, cfg.eval.javis);
        // cavp: temporally aligned frame/audio pairs, averaged per sample
        double c = 0;
        for (std::int64_t t = 0; t < vf.n; ++t) c += cosine(vf.row(t), af.row(t));
        s.cavp += c / static_cast<double>(vf.n);
        frames.push_back(std::move(vf));
    }
    s.avh /= static_cast<double>(n);
    s.javis /= static_cast<double>(n);
    s.cavp /= static_cast<double>(n);
    const EmbeddingSet vg{n, k, EmbeddingRole::video, video_global};
    const EmbeddingSet ag{n, k, EmbeddingRole::audio, audio_global};
    s.clip = clip_video_score(frames, text);
    s.clap = cosine_agg(CosineMode::clap_audio, ag, text);
    s.ib_av = cosine_agg(CosineMode::ib_av, vg, ag);
    return s;
}

struct AlignScores {
    double matched = 0;
    double shuffled = 0;
};

AlignScores align_scores(const SceneConfig& scene, const Tensor& video, const Tensor& audio, std::int64_t tol) {
    const auto n = video.dim(0);
    std::vector<PeakSet> vp;
    std::vector<PeakSet> ap;
    for (std::int64_t i = 0; i < n; ++i) {
        vp.push_back(scene_video_peaks(video, i, scene));
        ap.push_back(scene_audio_peaks(audio, i, scene));
    }
    AlignScores s;
    for (std::int64_t i = 0; i < n; ++i) {
        s.matched += av_align(ap[i], vp[i], tol);
        for (std::int64_t j = 0; j < n; ++j) {
            if (j != i) s.shuffled += av_align(ap[j], vp[i], tol);
        }
    }
    s.matched /= static_cast<double>(n);
    s.shuffled /= static_cast<double>(n * (n - 1));
    return s;
}

}  // namespace

SyntheticBatch heldout_set(const ExperimentConfig& cfg) {
    auto rng = RngStream::named(cfg.seed, "eval.heldout");
    return synthetic_batch(scene_of(cfg), cfg.eval.samples, rng);
}

Model load_model(const ExperimentConfig& cfg, const fs::path& checkpoint) {
    if (!fs::exists(checkpoint)) throw ConfigError("missing checkpoint '" + checkpoint.string() + "'");
    const Container c = read_container(checkpoint, ContainerKind::checkpoint);
    Model model(cfg.model, cfg.seed);
    try {
        model.load_parameters(c.tensors);
    } catch (const ShapeError& e) {
        throw ConfigError("checkpoint '" + checkpoint.string() + "' does not match the config: " + e.what());
    }
    return model;
}

void run_train(const ExperimentConfig& cfg, std::ostream* progress) {
    cfg.validate();
    ensure_out_dir(cfg);
    Model model(cfg.model, cfg.seed);
    Adam opt(model.trainable_parameters(), {cfg.train.lr, 0.9, 0.999, 1e-8, cfg.train.warmup_steps});
    const SceneConfig scene = scene_of(cfg);
    std::ofstream log(out_path(cfg, kTrainLogFile), std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot open training log");
    for (std::int64_t step = 0; step < cfg.train.steps; ++step) {
        auto data_rng = RngStream::named(cfg.seed, "train.data", static_cast<std::uint64_t>(step));
        const SyntheticBatch data = synthetic_batch(scene, cfg.train.batch, data_rng);
        const StepReport r = train_step(model, opt, data.batch, cfg.train, step, cfg.seed);
        const std::string line = format_log_line(r);
        log << line << '\n';
        if (progress) *progress << line << '\n';
    }
    write_checkpoint(cfg, model, static_cast<std::uint64_t>(cfg.train.steps));
}

void run_sample(const ExperimentConfig& cfg) {
    cfg.validate();
    const Model model = load_model(cfg, out_path(cfg, kCheckpointFile));
    const SyntheticBatch ref = heldout_set(cfg);
    const Latents out = generate(model, ref.batch.tokens, cfg.eval.samples, cfg.sampler, cfg.seed);
    std::vector<double> tokens(ref.batch.tokens.begin(), ref.batch.tokens.end());
    Container c;
    c.config = config_echo(cfg);
    c.tensors = {{"video", out.video},
                 {"audio", out.audio},
                 {"tokens", Tensor::from({cfg.eval.samples, cfg.model.text_len}, std::move(tokens))}};
    c.rng_seed = cfg.seed;
    ensure_out_dir(cfg);
    write_container(out_path(cfg, kSamplesFile), ContainerKind::latents, c);
    write_text(out_path(cfg, kSamplesSidecar), c.config);
}

MetricReport run_eval(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto samples_path = out_path(cfg, kSamplesFile);
    if (!fs::exists(samples_path)) throw ConfigError("missing samples '" + samples_path.string() + "'");
    const Container gen = read_container(samples_path, ContainerKind::latents);
    const Tensor& gv = gen.get("video");
    const Tensor& ga = gen.get("audio");
    const SyntheticBatch ref = heldout_set(cfg);
    if (gv.shape() != ref.batch.video.shape() || ga.shape() != ref.batch.audio.shape()) {
        throw ConfigError("generated latents do not match the configured geometry or sample count");
    }
    const auto& m = cfg.model;
    const auto k = cfg.eval.feature_dim;
    const auto n = cfg.eval.samples;
    const Projection pv(cfg.eval.feature_seed, "eval.proj.video", m.channels * m.frames * m.height * m.width, k);
    const Projection pa(cfg.eval.feature_seed, "eval.proj.audio", m.audio_len * m.audio_dim, k);
    const EmbeddingSet gen_v = project_rows(gv, pv, EmbeddingRole::video);
    const EmbeddingSet ref_v = project_rows(ref.batch.video, pv, EmbeddingRole::video);
    const EmbeddingSet gen_a = project_rows(ga, pa, EmbeddingRole::audio);
    const EmbeddingSet ref_a = project_rows(ref.batch.audio, pa, EmbeddingRole::audio);
    write_embeddings(out_path(cfg, "gen_video.emb"), gen_v);
    write_embeddings(out_path(cfg, "ref_video.emb"), ref_v);
    write_embeddings(out_path(cfg, "gen_audio.emb"), gen_a);
    write_embeddings(out_path(cfg, "ref_audio.emb"), ref_a);

    const EmbeddingSet text = text_embeddings(ref.batch.tokens, n, m.text_len, m.vocab, k, cfg.eval.feature_seed);
    const ModalityScores cs = cosine_scores(cfg, gv, ga, text);
    const SceneConfig scene = scene_of(cfg);
    const AlignScores gen_align = align_scores(scene, gv, ga, cfg.eval.tolerance);
    const AlignScores ref_align = align_scores(scene, ref.batch.video, ref.batch.audio, cfg.eval.tolerance);

    MetricReport r = {
        {"fvd", frechet_distance(gaussian_stats(gen_v), gaussian_stats(ref_v))},
        {"fad", frechet_distance(gaussian_stats(gen_a), gaussian_stats(ref_a))},
        {"clip_score", cs.clip},
        {"clap_score", cs.clap},
        {"ib_av", cs.ib_av},
        {"cavp", cs.cavp},
        {"avh_score", cs.avh},
        {"javis_score", cs.javis},
        {"av_align", gen_align.matched},
        {"av_align_shuffled", gen_align.shuffled},
        {"av_align_reference", ref_align.matched},
        {"av_align_reference_shuffled", ref_align.shuffled},
    };
    write_text(out_path(cfg, kMetricsFile), format_metrics(r));
    return r;
}

std::vector<CheckResult> run_check(const ExperimentConfig& cfg) { return run_property_suite(cfg.seed); }

std::string format_metrics(const MetricReport& r) {
    std::string out;
    for (const auto& [name, v] : r) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        out += name + "=" + buf + "\n";
    }
    return out;
}

}  // namespace tmdit
