#pragma once

#include <cstdint>
#include <vector>

#include "tmdit/layers.hpp"
#include "tmdit/tensor.hpp"

namespace tmdit {

struct PatchConfig {
    std::int64_t patch_h = 2;
    std::int64_t patch_w = 2;
    std::int64_t channels = 4;  // C_v
    std::int64_t dim = 32;      // D

    std::int64_t patch_features() const { return channels * patch_h * patch_w; }
};

// Number of video tokens for an (F, H, W) latent; throws ShapeError when the
// spatial grid is not divisible by the patch size.
std::int64_t video_token_count(const PatchConfig& cfg, std::int64_t frames, std::int64_t height, std::int64_t width);

// [B, C, F, H, W] -> [B, F*(H/ph)*(W/pw), C*ph*pw]; frame-major, then row-major
// over the patch grid. Feature order inside a token is (c, ph, pw).
Tensor patchify_raw(const Tensor& video, const PatchConfig& cfg);
Tensor patchify_video(const Tensor& video, const PatchConfig& cfg, const Linear& proj);
// Inverse of patchify_raw.
Tensor unpatchify_video(const Tensor& tokens, const PatchConfig& cfg,
                        std::int64_t frames, std::int64_t height, std::int64_t width);

struct AudioEmbedConfig {
    std::int64_t audio_dim = 8;  // d_a
    std::int64_t dim = 32;       // D
    int conv_layers = 2;
    int conv_kernel = 3;         // odd; "same" padding keeps L_a
};

struct DepthwiseConv1d {
    Tensor weight;  // [kernel, D]
    Tensor bias;    // [D]

    // x: [B, L, D] -> [B, L, D], zero padded.
    Tensor operator()(const Tensor& x) const;
};

// a W_a + b_a followed by a residual depthwise-conv positional encoder.
struct AudioEmbed {
    Linear proj;
    std::vector<DepthwiseConv1d> pos;

    // The last conv layer starts at zero so the encoder begins as the pure projection.
    static AudioEmbed init(const AudioEmbedConfig& cfg, RngStream& rng);

    Tensor operator()(const Tensor& audio) const;
    void collect(const std::string& prefix, NamedParams& out) const;
};

struct RopeLayout {
    std::int64_t d_head = 8;
    std::int64_t d_t = 4;
    std::int64_t d_h = 2;
    std::int64_t d_w = 2;
    double base = 10000.0;

    // Splits d_head in proportion to the ratios. Each share is floored to an
    // even width; whatever is left over goes to the temporal axis.
    static RopeLayout from_ratios(std::int64_t d_head, double ratio_t, double ratio_h, double ratio_w,
                                  double base = 10000.0);
    void validate() const;
};

// Rotation angles for a contiguous run of tokens, one row per token, one
// column per rotated feature pair.
struct RopeTable {
    std::int64_t positions = 0;
    std::int64_t pairs = 0;
    std::vector<double> angles;
    std::vector<double> cos;
    std::vector<double> sin;

    double angle(std::int64_t pos, std::int64_t pair) const { return angles[pos * pairs + pair]; }
};

// 3D table over an (F, Hp, Wp) token grid: per token [theta_t(f); theta_h(i); theta_w(j)].
RopeTable video_rope_table(std::int64_t frames, std::int64_t grid_h, std::int64_t grid_w, const RopeLayout& layout);
// 1D table over l = 0..length-1 using the full head width.
RopeTable audio_rope_table(std::int64_t length, const RopeLayout& layout);

// Rotates tokens [begin, end) of x: [B, H, L, d_head]; all other tokens pass
// through untouched. end - begin must equal table.positions.
Tensor apply_rope(const Tensor& x, const RopeTable& table, std::int64_t begin, std::int64_t end);

}  // namespace tmdit
