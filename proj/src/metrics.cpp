#include "tmdit/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include "tmdit/tensor_io.hpp"

namespace tmdit {

EmbeddingSet::EmbeddingSet(std::int64_t n_, std::int64_t d_, EmbeddingRole role_, std::vector<double> values_)
    : n(n_), d(d_), role(role_), values(std::move(values_)) {
    if (n < 0 || d < 0 || static_cast<std::int64_t>(values.size()) != n * d) {
        throw std::invalid_argument("embedding set size does not match N x d");
    }
}

std::span<const double> EmbeddingSet::row(std::int64_t i) const {
    if (i < 0 || i >= n) throw std::out_of_range("embedding row out of range");
    return {values.data() + i * d, static_cast<std::size_t>(d)};
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& e) {
    static_assert(std::endian::native == std::endian::little);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    const auto n = static_cast<std::uint32_t>(e.n);
    const auto d = static_cast<std::uint32_t>(e.d);
    const auto role = static_cast<std::uint8_t>(e.role);
    out.write("EMB1", 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&role), 1);
    for (double v : e.values) {
        const auto f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const std::vector<char> raw(std::istreambuf_iterator<char>(in), {});
    if (raw.size() < 13 || std::memcmp(raw.data(), "EMB1", 4) != 0) throw IoError("'" + path.string() + "' is not EMB1");
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    std::memcpy(&n, raw.data() + 4, 4);
    std::memcpy(&d, raw.data() + 8, 4);
    const auto role = static_cast<std::uint8_t>(raw[12]);
    if (role > 3) throw IoError("unknown embedding role tag " + std::to_string(role));
    const std::size_t count = std::size_t{n} * d;
    if (raw.size() != 13 + 4 * count) throw IoError("EMB1 payload size does not match header");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, raw.data() + 13 + 4 * i, 4);
        values[i] = f;
    }
    return EmbeddingSet(n, d, static_cast<EmbeddingRole>(role), std::move(values));
}

// ---------------------------------------------------------------------------

GaussianStats gaussian_stats(const EmbeddingSet& e) {
    if (e.n < 2) throw std::invalid_argument("gaussian statistics need at least two rows");
    GaussianStats s;
    s.d = e.d;
    s.mean.assign(static_cast<std::size_t>(e.d), 0.0);
    for (std::int64_t i = 0; i < e.n; ++i) {
        const auto r = e.row(i);
        for (std::int64_t j = 0; j < e.d; ++j) s.mean[j] += r[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(e.n);
    s.cov.assign(static_cast<std::size_t>(e.d * e.d), 0.0);
    for (std::int64_t i = 0; i < e.n; ++i) {
        const auto r = e.row(i);
        for (std::int64_t a = 0; a < e.d; ++a) {
            const double da = r[a] - s.mean[a];
            for (std::int64_t b = a; b < e.d; ++b) s.cov[a * e.d + b] += da * (r[b] - s.mean[b]);
        }
    }
    for (std::int64_t a = 0; a < e.d; ++a) {
        for (std::int64_t b = a; b < e.d; ++b) {
            const double v = s.cov[a * e.d + b] / static_cast<double>(e.n - 1);
            s.cov[a * e.d + b] = v;
            s.cov[b * e.d + a] = v;
        }
    }
    return s;
}

namespace {

using Mat = Eigen::MatrixXd;

Mat to_matrix(const GaussianStats& s) {
    Mat m(s.d, s.d);
    for (std::int64_t i = 0; i < s.d; ++i) {
        for (std::int64_t j = 0; j < s.d; ++j) m(i, j) = 0.5 * (s.cov[i * s.d + j] + s.cov[j * s.d + i]);
    }
    return m;
}

Eigen::SelfAdjointEigenSolver<Mat> eig(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    if (es.info() != Eigen::Success) throw std::runtime_error("matrix square root failed: eigendecomposition did not converge");
    return es;
}

Mat psd_sqrt(const Mat& m) {
    const auto es = eig(m);
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(kEigenFloor).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const GaussianStats& g, const GaussianStats& r) {
    if (g.d != r.d) throw std::invalid_argument("Frechet distance between different dimensions");
    double mean_term = 0.0;
    for (std::int64_t i = 0; i < g.d; ++i) mean_term += (g.mean[i] - r.mean[i]) * (g.mean[i] - r.mean[i]);
    const Mat sg = to_matrix(g);
    const Mat sr = to_matrix(r);
    const Mat root_g = psd_sqrt(sg);
    Mat inner = root_g * sr * root_g;
    inner = 0.5 * (inner + inner.transpose());
    const double cross = eig(inner).eigenvalues().cwiseMax(kEigenFloor).cwiseSqrt().sum();
    const double d = mean_term + sg.trace() + sr.trace() - 2.0 * cross;
    return std::max(0.0, d);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine of vectors with different lengths");
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw std::invalid_argument("cosine of a zero vector");
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::vector<std::int64_t> uniform_frame_picks(std::int64_t frames, int k) {
    if (frames < 1 || k < 1) throw std::invalid_argument("frame sampling needs frames and k >= 1");
    std::vector<std::int64_t> picks(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        picks[i] = static_cast<std::int64_t>(std::floor((i + 0.5) * static_cast<double>(frames) / k));
    }
    return picks;
}

double clip_video_score(const std::vector<EmbeddingSet>& frames_per_sample, const EmbeddingSet& text, int k) {
    if (frames_per_sample.empty()) throw std::invalid_argument("no samples");
    if (text.n != static_cast<std::int64_t>(frames_per_sample.size())) {
        throw std::invalid_argument("one text embedding per sample required");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < frames_per_sample.size(); ++s) {
        const auto& f = frames_per_sample[s];
        double acc = 0.0;
        for (auto idx : uniform_frame_picks(f.n, k)) acc += cosine(f.row(idx), text.row(static_cast<std::int64_t>(s)));
        total += acc / k;
    }
    return total / static_cast<double>(frames_per_sample.size());
}

double cosine_agg(CosineMode mode, const EmbeddingSet& a, const EmbeddingSet& b) {
    if (mode == CosineMode::clip_video) throw std::invalid_argument("clip_video scores frames; use clip_video_score");
    if (a.n != b.n || a.n == 0) throw std::invalid_argument("paired cosine needs equal, non-zero row counts");
    double total = 0.0;
    for (std::int64_t i = 0; i < a.n; ++i) total += cosine(a.row(i), b.row(i));
    return total / static_cast<double>(a.n);
}

double avh_score(const EmbeddingSet& frames, std::span<const double> audio) {
    if (frames.n < 1) throw std::invalid_argument("AVHScore needs at least one frame");
    double total = 0.0;
    for (std::int64_t i = 0; i < frames.n; ++i) total += cosine(frames.row(i), audio);
    return total / static_cast<double>(frames.n);
}

// ---------------------------------------------------------------------------

namespace {

double median(std::vector<double> v) {
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

PeakSet detect_peaks(std::span<const double> signal, const PeakConfig& cfg) {
    const auto n = static_cast<std::int64_t>(signal.size());
    if (n == 0) return {};
    std::vector<double> v(signal.begin(), signal.end());
    const double med = median(v);
    for (auto& x : v) x = std::abs(x - med);
    const double threshold = med + cfg.k_mad * median(v);

    std::vector<std::int64_t> cand;
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = signal[i];
        const bool left = i == 0 || x > signal[i - 1];
        const bool right = i + 1 == n || x >= signal[i + 1];
        if (left && right && x > 0.0 && x > threshold && x > cfg.floor) cand.push_back(i);
    }
    std::stable_sort(cand.begin(), cand.end(), [&](auto a, auto b) { return signal[a] > signal[b]; });
    PeakSet kept;
    for (auto c : cand) {
        const bool clear = std::all_of(kept.begin(), kept.end(),
                                       [&](auto k) { return std::abs(k - c) >= cfg.min_separation; });
        if (clear) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

PeakSet detect_audio_peaks(std::span<const double> signal, double sample_rate, double fps, std::int64_t window,
                           const PeakConfig& cfg) {
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("energy window must be odd");
    if (static_cast<std::int64_t>(signal.size()) < window) throw std::invalid_argument("signal shorter than energy window");
    if (sample_rate <= 0 || fps <= 0) throw std::invalid_argument("rates must be positive");
    const auto n = static_cast<std::int64_t>(signal.size());
    const auto half = window / 2;
    std::vector<double> hann(static_cast<std::size_t>(window));
    for (std::int64_t k = 0; k < window; ++k) {
        hann[k] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(k + 1) / static_cast<double>(window + 1));
    }
    std::vector<double> energy(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < window; ++k) {
            const auto j = i + k - half;
            if (j >= 0 && j < n) energy[i] += hann[k] * signal[j] * signal[j];
        }
    }
    PeakSet frames;
    for (auto p : detect_peaks(energy, cfg)) {
        const auto f = static_cast<std::int64_t>(std::llround(static_cast<double>(p) / sample_rate * fps));
        if (frames.empty() || frames.back() != f) frames.push_back(f);
    }
    return frames;
}

PeakSet detect_video_peaks(std::span<const double> motion, const PeakConfig& cfg) {
    if (motion.size() < 3) throw std::invalid_argument("video peak detection needs at least three frames");
    for (double m : motion) {
        if (m < 0.0) throw std::invalid_argument("motion intensity must be non-negative");
    }
    return detect_peaks(motion, cfg);
}

std::vector<double> latent_motion(std::span<const double> frames, std::int64_t frame_count) {
    if (frame_count < 1 || frames.size() % static_cast<std::size_t>(frame_count) != 0) {
        throw std::invalid_argument("frame buffer not divisible by frame count");
    }
    const auto per = static_cast<std::int64_t>(frames.size()) / frame_count;
    std::vector<double> m(static_cast<std::size_t>(frame_count), 0.0);
    for (std::int64_t f = 1; f < frame_count; ++f) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < per; ++j) acc += std::abs(frames[f * per + j] - frames[(f - 1) * per + j]);
        m[f] = acc / static_cast<double>(per);
    }
    return m;
}

double av_align(const PeakSet& a, const PeakSet& v, std::int64_t tolerance) {
    if (tolerance < 0) throw std::invalid_argument("tolerance must be non-negative");
    if (a.empty() && v.empty()) return 1.0;
    std::size_t i = 0;
    std::size_t j = 0;
    std::int64_t matched = 0;
    while (i < a.size() && j < v.size()) {
        if (std::abs(a[i] - v[j]) <= tolerance) {
            ++matched;
            ++i;
            ++j;
        } else if (a[i] < v[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const auto uni = static_cast<std::int64_t>(a.size() + v.size()) - matched;
    return static_cast<double>(matched) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------

std::vector<FrameWindow> javis_windows(std::int64_t frames, double fps, const JavisConfig& cfg) {
    if (frames < 1 || fps <= 0 || cfg.window_s <= 0 || cfg.hop_s <= 0) throw std::invalid_argument("invalid window setup");
    const auto win = std::max<std::int64_t>(1, std::llround(cfg.window_s * fps));
    const auto hop = std::max<std::int64_t>(1, std::llround(cfg.hop_s * fps));
    std::vector<FrameWindow> out;
    if (frames <= win) return {{0, frames}};
    for (std::int64_t b = 0; b + win <= frames; b += hop) out.push_back({b, b + win});
    return out;
}

double javis_window_score(const EmbeddingSet& frames, std::int64_t begin, std::int64_t end,
                          std::span<const double> audio, double bottom_fraction) {
    if (!(bottom_fraction > 0.0 && bottom_fraction <= 1.0)) throw std::invalid_argument("bottom fraction outside (0, 1]");
    if (begin < 0 || end <= begin || end > frames.n) throw std::invalid_argument("window outside clip");
    std::vector<double> cs;
    for (std::int64_t i = begin; i < end; ++i) cs.push_back(cosine(frames.row(i), audio));
    std::sort(cs.begin(), cs.end());
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(bottom_fraction * cs.size() - 1e-9)));
    return std::accumulate(cs.begin(), cs.begin() + static_cast<std::ptrdiff_t>(keep), 0.0) / static_cast<double>(keep);
}

double javis_score(const EmbeddingSet& frames, const EmbeddingSet& audio_windows, double fps, const JavisConfig& cfg) {
    const auto windows = javis_windows(frames.n, fps, cfg);
    if (audio_windows.n != static_cast<std::int64_t>(windows.size())) {
        throw std::invalid_argument("expected " + std::to_string(windows.size()) + " audio window embeddings, got " +
                                    std::to_string(audio_windows.n));
    }
    double total = 0.0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        total += javis_window_score(frames, windows[w].begin, windows[w].end,
                                    audio_windows.row(static_cast<std::int64_t>(w)), cfg.bottom_fraction);
    }
    return total / static_cast<double>(windows.size());
}

}  // namespace tmdit
