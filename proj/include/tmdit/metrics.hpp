#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tmdit {

enum class EmbeddingRole : std::uint8_t { video = 0, audio = 1, text = 2, frame = 3 };

// N x d row-major.
struct EmbeddingSet {
    std::int64_t n = 0;
    std::int64_t d = 0;
    EmbeddingRole role = EmbeddingRole::video;
    std::vector<double> values;

    EmbeddingSet() = default;
    EmbeddingSet(std::int64_t n, std::int64_t d, EmbeddingRole role, std::vector<double> values);

    std::span<const double> row(std::int64_t i) const;
};

// "EMB1", u32 N, u32 d, u8 role, N*d f32, all little-endian.
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& e);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

struct GaussianStats {
    std::int64_t d = 0;
    std::vector<double> mean;  // d
    std::vector<double> cov;   // d x d, unbiased
};

GaussianStats gaussian_stats(const EmbeddingSet& e);

// |mu_g - mu_r|^2 + Tr(S_g + S_r - 2 (S_g^1/2 S_r S_g^1/2)^1/2). Square roots go
// through a symmetric eigendecomposition with eigenvalues clamped at kEigenFloor.
inline constexpr double kEigenFloor = 1e-10;
double frechet_distance(const GaussianStats& g, const GaussianStats& r);

double cosine(std::span<const double> a, std::span<const double> b);

enum class CosineMode { clip_video, clap_audio, ib_av, cavp };
inline constexpr int kClipFrames = 48;

// Frame indices used for clip_video: k uniformly spaced picks out of `frames`.
std::vector<std::int64_t> uniform_frame_picks(std::int64_t frames, int k = kClipFrames);

// clip_video: per sample, mean cosine between kClipFrames sampled frame rows and the text row.
double clip_video_score(const std::vector<EmbeddingSet>& frames_per_sample, const EmbeddingSet& text,
                        int k = kClipFrames);
// Paired modes: row i of `a` against row i of `b`, averaged over rows.
double cosine_agg(CosineMode mode, const EmbeddingSet& a, const EmbeddingSet& b);

// Mean over frames of cos(frame, audio).
double avh_score(const EmbeddingSet& frames, std::span<const double> audio);

// ---------------------------------------------------------------------------
// AV-Align

using PeakSet = std::vector<std::int64_t>;

struct PeakConfig {
    double k_mad = 3.0;           // threshold = median + k * MAD
    std::int64_t min_separation = 2;
    double floor = 0.0;           // candidates must also exceed this absolute value
};

// Local maxima (strict on the left, so a plateau reports its first sample)
// that are positive and exceed both the threshold and cfg.floor; then greedy non-maximum
// suppression by value. Sorted output.
PeakSet detect_peaks(std::span<const double> signal, const PeakConfig& cfg = {});

// Short-time energy with a Hann-weighted window of `window` samples (odd),
// peaks mapped from sample index to video frame index round(i / rate * fps).
PeakSet detect_audio_peaks(std::span<const double> signal, double sample_rate, double fps, std::int64_t window = 5,
                           const PeakConfig& cfg = {});

// Peak picking on a supplied per-frame motion intensity.
PeakSet detect_video_peaks(std::span<const double> motion, const PeakConfig& cfg = {});

// Default motion source: mean absolute difference between frame f and f-1 (0 at f=0).
// `frames` is F x (per-frame values) row-major.
std::vector<double> latent_motion(std::span<const double> frames, std::int64_t frame_count);

// |P_a n P_v| / |P_a u P_v| where two peaks match when |p - q| <= tolerance,
// one-to-one. Two empty sets score 1.
double av_align(const PeakSet& a, const PeakSet& v, std::int64_t tolerance = 1);

// ---------------------------------------------------------------------------
// JavisScore

struct JavisConfig {
    double window_s = 2.0;
    double hop_s = 1.0;
    double bottom_fraction = 0.4;
};

struct FrameWindow {
    std::int64_t begin = 0;
    std::int64_t end = 0;  // exclusive
};

// Windows over `frames` frames at `fps`; at least one (the whole clip) when it is shorter than a window.
std::vector<FrameWindow> javis_windows(std::int64_t frames, double fps, const JavisConfig& cfg);

// Mean of the lowest ceil(rho * n) frame-audio cosines.
double javis_window_score(const EmbeddingSet& frames, std::int64_t begin, std::int64_t end,
                          std::span<const double> audio, double bottom_fraction);

// audio_windows row w embeds window w of javis_windows(frames.n, fps, cfg).
double javis_score(const EmbeddingSet& frames, const EmbeddingSet& audio_windows, double fps, const JavisConfig& cfg);

}  // namespace tmdit
