#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmdit/blocks.hpp"
#include "tmdit/layers.hpp"
#include "tmdit/modulation.hpp"
#include "tmdit/tokenize.hpp"

namespace tmdit {

enum class BlockFamily { sd3_dual, wan };
enum class Conditioning { static_text, dynamic_text };
enum class SchedulePolicy { strict_alternate, video_first_ratio };
// one_based: i_v(l) = #{j <= l : b_j = V}, so the first video block is block 1.
// literal:   i_v(l) = 1 + #{j <= l : b_j = V}, as the recurrence is printed.
enum class CounterMode { one_based, literal };

struct ModelConfig {
    // widths
    std::int64_t dim = 32;
    int heads = 4;
    std::int64_t mlp_ratio = 4;
    // depth
    int video_blocks = 2;
    int audio_blocks = 2;
    int omni_blocks = 1;
    BlockFamily family = BlockFamily::sd3_dual;
    Conditioning conditioning = Conditioning::dynamic_text;
    SchedulePolicy schedule = SchedulePolicy::strict_alternate;
    AttnScale attn_scale = AttnScale::per_head;
    bool frozen_video = false;
    // geometry
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
    // positional encodings
    double rope_ratio_t = 2.0;
    double rope_ratio_h = 1.0;
    double rope_ratio_w = 1.0;
    double rope_base = 10000.0;
    int audio_conv_layers = 2;
    int audio_conv_kernel = 3;

    PatchConfig patch() const { return {patch_h, patch_w, channels, dim}; }
    AudioEmbedConfig audio_embed() const { return {audio_dim, dim, audio_conv_layers, audio_conv_kernel}; }
    RopeLayout rope_layout() const;
    std::int64_t video_tokens() const;
    // Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

enum class BlockKind : char { video = 'V', audio = 'A' };

struct BlockSchedule {
    std::vector<BlockKind> order;
    std::vector<int> video_counter;  // i_v(l) under the chosen counter mode
    std::vector<int> audio_counter;  // i_a(l)
    std::vector<int> block_index;    // 0-based index into the tower that runs at step l
    CounterMode counters = CounterMode::one_based;
};

// strict_alternate: V,A,V,A,... then the surplus of the deeper tower.
// video_first_ratio: spreads the shallower tower evenly, video first on ties.
BlockSchedule build_schedule(int video_blocks, int audio_blocks, SchedulePolicy policy,
                             CounterMode counters = CounterMode::one_based);

struct Velocity {
    Tensor video;  // [B, C, F, H, W]
    Tensor audio;  // [B, L_a, d_a]
};

// Hidden states recorded after every scheduled tower block (dynamic mode).
struct ScheduleTrace {
    std::vector<Tensor> v, a, y;
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const BlockSchedule& schedule() const { return schedule_; }

    // ids: batch * text_len token ids -> [B, L_y, D]
    Tensor embed_text(std::span<const int> ids, std::int64_t batch) const;
    // Embedding of the all-null caption, [B, L_y, D].
    Tensor null_text(std::int64_t batch) const;

    Velocity forward(const Tensor& video, const Tensor& audio, const Tensor& text, std::span<const double> sigma,
                     const OmniMode& mode = {}, ScheduleTrace* trace = nullptr,
                     std::vector<Tensor>* probe = nullptr) const;

    // The video backbone on its own: patch embed, video blocks on fixed text, head.
    Tensor video_tower(const Tensor& video, const Tensor& text, std::span<const double> sigma) const;

    NamedParams parameters() const;
    // Excludes every backbone ("video.") tensor when frozen_video is set.
    NamedParams trainable_parameters() const;
    // Replaces values in place; names and shapes must match exactly.
    void load_parameters(const NamedParams& values);

    // Draws every parameter (gates, zero-initialised layers included) from N(0, stddev^2).
    void randomize_all(RngStream& rng, double stddev = 0.3);
    // Zeroes the columns of every slot MLP that produce gates.
    void zero_gates();

    static constexpr int kNullToken = 0;

private:
    void check_geometry(const Tensor& video, const Tensor& audio, const Tensor& text,
                        std::span<const double> sigma) const;
    Tensor embed_video(const Tensor& video) const;
    Tensor video_out(const Tensor& tokens) const;

    ModelConfig cfg_;
    BlockSchedule schedule_;
    RopeTable video_rope_;
    RopeTable audio_rope_;

    // Backbone
    TimeEmbedder time_;
    Tensor text_table_;  // [vocab, D]
    Linear patch_embed_;
    std::vector<DualStreamBlock> video_dual_;
    std::vector<WanBlock> video_wan_;
    Linear video_head_;
    // Audio branch and fusion
    AudioEmbed audio_embed_;
    std::vector<DualStreamBlock> audio_dual_;
    std::vector<WanBlock> audio_wan_;
    std::vector<OmniBlock> omni_;
    Linear audio_head_;
};

}  // namespace tmdit
