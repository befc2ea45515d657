#pragma once

#include <cstdint>
#include <vector>

#include "tmdit/flow.hpp"
#include "tmdit/metrics.hpp"
#include "tmdit/model.hpp"

namespace tmdit {

struct SceneConfig {
    // geometry, normally copied from the model
    std::int64_t channels = 4;
    std::int64_t frames = 16;
    std::int64_t height = 4;
    std::int64_t width = 4;
    std::int64_t patch_h = 2;
    std::int64_t patch_w = 2;
    std::int64_t audio_len = 32;
    std::int64_t audio_dim = 8;
    std::int64_t text_len = 4;
    std::int64_t vocab = 16;
    // events
    int min_events = 1;
    int max_events = 2;
    std::int64_t min_spacing = 3;  // frames between events of one modality
    double coupling = 1.0;         // per event: P(audio burst co-timed with the video pulse)
    double amplitude = 2.0;
    double noise = 0.05;
    double fps = 4.0;

    void adopt_geometry(const ModelConfig& m);
    std::int64_t audio_rate() const { return audio_len / frames; }  // audio steps per frame
    int type_count() const;
    void validate() const;
};

// Caption layout: [count token, type tokens..., pad...]
//   0 null (unconditional), 1 pad, 2 + K for K events, first_type_token() + type.
int count_token(int events);
int first_type_token(const SceneConfig& cfg);

struct SyntheticPair {
    Tensor video;  // [1, C, F, H, W]
    Tensor audio;  // [1, L_a, d_a]
    std::vector<int> tokens;
    std::vector<int> types;
    PeakSet video_peaks;  // frames of the visual pulses
    PeakSet audio_peaks;  // frames of the audio bursts
};

// Event frames are drawn uniformly from [1, F-2] with pairwise spacing >= min_spacing.
SyntheticPair generate_synthetic_pair(const SceneConfig& cfg, RngStream& rng);

struct SyntheticBatch {
    TrainBatch batch;
    std::vector<PeakSet> video_peaks;
    std::vector<PeakSet> audio_peaks;
};

SyntheticBatch synthetic_batch(const SceneConfig& cfg, std::int64_t size, RngStream& rng);

// Per-frame mean squared value of sample `b`: video over C,H,W; audio over the
// frame's audio steps and channels.
std::vector<double> video_frame_energy(const Tensor& video, std::int64_t b);
std::vector<double> audio_frame_energy(const Tensor& audio, std::int64_t b, std::int64_t frames);

// Frame energy of one clean event, as measured by the functions above.
double video_event_energy(const SceneConfig& cfg);
double audio_event_energy(const SceneConfig& cfg);

// Peak detectors matched to the synthetic construction (frame energy for both
// modalities). A frame counts only above a quarter of one clean event's energy.
inline constexpr double kEventFloorFraction = 0.25;
PeakConfig scene_peak_config(const SceneConfig& cfg);
PeakSet scene_video_peaks(const Tensor& video, std::int64_t b, const SceneConfig& cfg);
PeakSet scene_audio_peaks(const Tensor& audio, std::int64_t b, const SceneConfig& cfg);

}  // namespace tmdit
