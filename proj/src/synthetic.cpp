#include "tmdit/synthetic.hpp"

#include <algorithm>
#include <stdexcept>

namespace tmdit {

void SceneConfig::adopt_geometry(const ModelConfig& m) {
    channels = m.channels;
    frames = m.frames;
    height = m.height;
    width = m.width;
    patch_h = m.patch_h;
    patch_w = m.patch_w;
    audio_len = m.audio_len;
    audio_dim = m.audio_dim;
    text_len = m.text_len;
    vocab = m.vocab;
}

int count_token(int events) { return 2 + events; }

int first_type_token(const SceneConfig& cfg) { return count_token(cfg.max_events) + 1; }

int SceneConfig::type_count() const { return static_cast<int>(vocab) - first_type_token(*this); }

void SceneConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(what);
    };
    require(frames >= 3, "scene needs at least three frames");
    require(audio_len % frames == 0, "audio length must be a multiple of the frame count");
    require(height % patch_h == 0 && width % patch_w == 0, "scene grid must be divisible by the patch");
    require(min_events >= 0 && max_events >= min_events, "event count range invalid");
    require(text_len >= 1 + max_events, "text length too short for the caption layout");
    require(type_count() >= 1, "vocabulary too small for any event type");
    require(coupling >= 0.0 && coupling <= 1.0, "coupling outside [0, 1]");
    require(min_spacing >= 1, "event spacing must be positive");
    require(static_cast<std::int64_t>(max_events - 1) * min_spacing <= frames - 3, "events cannot fit in the clip");
}

namespace {

PeakSet draw_times(int k, const SceneConfig& cfg, RngStream& rng) {
    const auto lo = std::int64_t{1};
    const auto span = static_cast<std::uint64_t>(cfg.frames - 2);
    for (;;) {
        PeakSet t;
        for (int i = 0; i < k; ++i) t.push_back(lo + static_cast<std::int64_t>(rng.uniform_int(span)));
        std::sort(t.begin(), t.end());
        bool ok = true;
        for (std::size_t i = 1; i < t.size(); ++i) ok = ok && t[i] - t[i - 1] >= cfg.min_spacing;
        if (ok) return t;
    }
}

}  // namespace

SyntheticPair generate_synthetic_pair(const SceneConfig& cfg, RngStream& rng) {
    cfg.validate();
    const auto c = cfg.channels;
    const auto f = cfg.frames;
    const auto h = cfg.height;
    const auto w = cfg.width;
    const auto la = cfg.audio_len;
    const auto da = cfg.audio_dim;
    const auto rate = cfg.audio_rate();
    const auto cells_w = w / cfg.patch_w;
    const auto cells = (h / cfg.patch_h) * cells_w;

    SyntheticPair p;
    const int k = cfg.min_events + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.max_events - cfg.min_events + 1)));
    for (int i = 0; i < k; ++i) p.types.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.type_count()))));
    p.video_peaks = draw_times(k, cfg, rng);
    const PeakSet independent = draw_times(k, cfg, rng);
    // Each audio burst follows its visual event with probability kappa.
    PeakSet audio_times(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) audio_times[i] = rng.bernoulli(cfg.coupling) ? p.video_peaks[i] : independent[i];

    std::vector<double> video(static_cast<std::size_t>(c * f * h * w));
    for (auto& v : video) v = cfg.noise * rng.normal();
    std::vector<double> audio(static_cast<std::size_t>(la * da));
    for (auto& v : audio) v = cfg.noise * rng.normal();

    for (int i = 0; i < k; ++i) {
        const int type = p.types[i];
        const auto ch = type % c;
        const auto cell = (type / c) % cells;
        const auto r0 = (cell / cells_w) * cfg.patch_h;
        const auto c0 = (cell % cells_w) * cfg.patch_w;
        const auto t = p.video_peaks[i];
        for (auto y = r0; y < r0 + cfg.patch_h; ++y) {
            for (auto x = c0; x < c0 + cfg.patch_w; ++x) video[((ch * f + t) * h + y) * w + x] += cfg.amplitude;
        }
        const auto ach = type % da;
        for (auto s = audio_times[i] * rate; s < (audio_times[i] + 1) * rate; ++s) audio[s * da + ach] += cfg.amplitude;
    }

    p.audio_peaks = audio_times;
    std::sort(p.audio_peaks.begin(), p.audio_peaks.end());
    p.audio_peaks.erase(std::unique(p.audio_peaks.begin(), p.audio_peaks.end()), p.audio_peaks.end());

    p.tokens.assign(static_cast<std::size_t>(cfg.text_len), 1);
    p.tokens[0] = count_token(k);
    for (int i = 0; i < k; ++i) p.tokens[1 + i] = first_type_token(cfg) + p.types[i];

    p.video = Tensor::from({1, c, f, h, w}, std::move(video));
    p.audio = Tensor::from({1, la, da}, std::move(audio));
    return p;
}

SyntheticBatch synthetic_batch(const SceneConfig& cfg, std::int64_t size, RngStream& rng) {
    if (size < 1) throw std::invalid_argument("batch size must be positive");
    std::vector<Tensor> videos;
    std::vector<Tensor> audios;
    SyntheticBatch out;
    for (std::int64_t i = 0; i < size; ++i) {
        SyntheticPair p = generate_synthetic_pair(cfg, rng);
        videos.push_back(p.video);
        audios.push_back(p.audio);
        out.batch.tokens.insert(out.batch.tokens.end(), p.tokens.begin(), p.tokens.end());
        out.video_peaks.push_back(std::move(p.video_peaks));
        out.audio_peaks.push_back(std::move(p.audio_peaks));
    }
    out.batch.video = concat(videos, 0);
    out.batch.audio = concat(audios, 0);
    return out;
}

std::vector<double> video_frame_energy(const Tensor& video, std::int64_t b) {
    const auto c = video.dim(1);
    const auto f = video.dim(2);
    const auto hw = video.dim(3) * video.dim(4);
    const auto d = video.data();
    std::vector<double> e(static_cast<std::size_t>(f), 0.0);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t t = 0; t < f; ++t) {
            const auto base = ((b * c + ch) * f + t) * hw;
            for (std::int64_t j = 0; j < hw; ++j) e[t] += d[base + j] * d[base + j];
        }
    }
    for (auto& v : e) v /= static_cast<double>(c * hw);
    return e;
}

std::vector<double> audio_frame_energy(const Tensor& audio, std::int64_t b, std::int64_t frames) {
    const auto la = audio.dim(1);
    const auto da = audio.dim(2);
    if (la % frames != 0) throw ShapeError("audio length must be a multiple of the frame count");
    const auto rate = la / frames;
    const auto d = audio.data();
    std::vector<double> e(static_cast<std::size_t>(frames), 0.0);
    for (std::int64_t s = 0; s < la; ++s) {
        for (std::int64_t j = 0; j < da; ++j) e[s / rate] += d[(b * la + s) * da + j] * d[(b * la + s) * da + j];
    }
    for (auto& v : e) v /= static_cast<double>(rate * da);
    return e;
}

PeakConfig scene_peak_config(const SceneConfig& cfg) { return {3.0, std::max<std::int64_t>(1, cfg.min_spacing - 1)}; }

double video_event_energy(const SceneConfig& cfg) {
    const double amp2 = cfg.amplitude * cfg.amplitude;
    return amp2 * static_cast<double>(cfg.patch_h * cfg.patch_w) / static_cast<double>(cfg.channels * cfg.height * cfg.width);
}

double audio_event_energy(const SceneConfig& cfg) { return cfg.amplitude * cfg.amplitude / static_cast<double>(cfg.audio_dim); }

PeakSet scene_video_peaks(const Tensor& video, std::int64_t b, const SceneConfig& cfg) {
    PeakConfig pc = scene_peak_config(cfg);
    pc.floor = kEventFloorFraction * video_event_energy(cfg);
    return detect_video_peaks(video_frame_energy(video, b), pc);
}

PeakSet scene_audio_peaks(const Tensor& audio, std::int64_t b, const SceneConfig& cfg) {
    PeakConfig pc = scene_peak_config(cfg);
    pc.floor = kEventFloorFraction * audio_event_energy(cfg);
    return detect_peaks(audio_frame_energy(audio, b, cfg.frames), pc);
}

}  // namespace tmdit
