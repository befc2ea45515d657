#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tmdit/layers.hpp"
#include "tmdit/modulation.hpp"
#include "tmdit/tokenize.hpp"

namespace tmdit {

// Softmax temperature: 1/sqrt(d_head) (standard multi-head) or 1/sqrt(D) as
// written for the single-matrix form.
enum class AttnScale { per_head, full_width };

struct AttentionWeights {
    Linear q, k, v, o;  // all [D, D], no bias
    int heads = 1;

    static AttentionWeights init(std::int64_t dim, int heads, RngStream& rng);
    std::int64_t dim() const { return q.in_features(); }
    std::int64_t head_dim() const { return dim() / heads; }
    void collect(const std::string& prefix, NamedParams& out) const;
};

// One rotated span of the concatenated sequence.
struct RopeSpan {
    const RopeTable* table = nullptr;
    std::int64_t begin = 0;
};
using RopePlan = std::vector<RopeSpan>;

struct AttentionOptions {
    AttnScale scale = AttnScale::per_head;
    // One flag per key position; empty means every key is visible.
    std::vector<bool> key_visible;
    // When set, each attention call appends its [B, H, Lq, Lk] probabilities.
    std::vector<Tensor>* probe = nullptr;
};

// softmax(rope(zWq) rope(zWk)^T * scale) zWv, per head, merged, then W_O.
// Throws std::invalid_argument if the mask hides every key.
Tensor joint_attention(const Tensor& z, const AttentionWeights& w, const RopePlan& rope,
                       const AttentionOptions& opts = {});

// Queries from `x`, keys/values from `context`, no rotation; the Wan text path.
// Queries and keys are LayerNormed (no affine) before projection.
Tensor cross_attention(const Tensor& x, const Tensor& context, const AttentionWeights& w,
                       const AttentionOptions& opts = {});

struct BlockOptions {
    AttnScale scale = AttnScale::per_head;
    std::vector<Tensor>* probe = nullptr;
};

// ---------------------------------------------------------------------------
// SD3-style dual stream: joint attention over [x; y], both streams updated.

struct DualStreamBlock {
    SlotMlp mod_x;
    SlotMlp mod_y;
    AttentionWeights attn;
    Mlp mlp_x;
    Mlp mlp_y;

    static DualStreamBlock init(std::int64_t dim, int heads, std::int64_t mlp_hidden, RngStream& rng);
    void collect(const std::string& prefix, NamedParams& out) const;

    // update_text=false returns y untouched and skips the text MLP.
    std::pair<Tensor, Tensor> operator()(const Tensor& x, const Tensor& y, const Tensor& t_emb,
                                         const RopeTable* x_rope, const BlockOptions& opts = {},
                                         bool update_text = true) const;
};

std::pair<Tensor, Tensor> dual_stream_block(const Tensor& x, const Tensor& y,
                                            const ModulationSlots& slots_x, const ModulationSlots& slots_y,
                                            const RopeTable* x_rope, const AttentionWeights& attn,
                                            const Mlp& mlp_x, const Mlp& mlp_y,
                                            const BlockOptions& opts = {}, bool update_text = true);

// ---------------------------------------------------------------------------
// Wan-style: self-attention, ungated cross-attention to read-only text, MLP.

struct WanBlock {
    SlotMlp mod;
    AttentionWeights self_attn;
    AttentionWeights cross_attn;  // cross_attn.o starts at zero
    Mlp mlp;

    static WanBlock init(std::int64_t dim, int heads, std::int64_t mlp_hidden, RngStream& rng);
    void collect(const std::string& prefix, NamedParams& out) const;

    Tensor operator()(const Tensor& x, const Tensor& y, const Tensor& t_emb, const RopeTable* x_rope,
                      const BlockOptions& opts = {}) const;
};

Tensor wan_block(const Tensor& x, const Tensor& y, const ModulationSlots& slots, const RopeTable* x_rope,
                 const AttentionWeights& self_attn, const AttentionWeights& cross_attn, const Mlp& mlp,
                 const BlockOptions& opts = {});

// ---------------------------------------------------------------------------
// Tri-modal omni-block over [v; y; a].

enum class ModalityMode { none, mask, drop };
enum class Modality { video, audio, both };

struct OmniMode {
    ModalityMode mode = ModalityMode::none;
    Modality target = Modality::audio;
};

struct TriStream {
    Tensor v, y, a;
};

struct OmniBlock {
    SlotMlp mod_v, mod_y, mod_a;
    AttentionWeights attn;
    Mlp mlp_v, mlp_y, mlp_a;

    static OmniBlock init(std::int64_t dim, int heads, std::int64_t mlp_hidden, RngStream& rng);
    void collect(const std::string& prefix, NamedParams& out) const;

    TriStream operator()(const TriStream& in, const Tensor& t_emb, const RopeTable* v_rope, const RopeTable* a_rope,
                         const OmniMode& mode = {}, const BlockOptions& opts = {}) const;
};

// mask: the target span stays in the sequence but no query can attend to it.
// drop: the target span is removed from the block and returned unchanged.
TriStream omni_block(const TriStream& in, const ModulationSlots& slots_v, const ModulationSlots& slots_y,
                     const ModulationSlots& slots_a, const RopeTable* v_rope, const RopeTable* a_rope,
                     const AttentionWeights& attn, const Mlp& mlp_v, const Mlp& mlp_y, const Mlp& mlp_a,
                     const OmniMode& mode = {}, const BlockOptions& opts = {});

}  // namespace tmdit
