#include "tmdit/blocks.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tmdit {

AttentionWeights AttentionWeights::init(std::int64_t dim, int heads, RngStream& rng) {
    if (heads <= 0 || dim % heads != 0) throw ShapeError("model width must be divisible by the head count");
    AttentionWeights w;
    w.q = Linear::random(dim, dim, rng, false);
    w.k = Linear::random(dim, dim, rng, false);
    w.v = Linear::random(dim, dim, rng, false);
    w.o = Linear::random(dim, dim, rng, false);
    w.heads = heads;
    return w;
}

void AttentionWeights::collect(const std::string& prefix, NamedParams& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
}

namespace {

// [B, L, D] -> [B, H, L, dh]
Tensor split_heads(const Tensor& x, int heads) {
    const auto b = x.dim(0);
    const auto l = x.dim(1);
    const auto d = x.dim(2);
    return permute(reshape(x, {b, l, heads, d / heads}), {0, 2, 1, 3});
}

// [B, H, L, dh] -> [B, L, D]
Tensor merge_heads(const Tensor& x) {
    const auto b = x.dim(0);
    const auto h = x.dim(1);
    const auto l = x.dim(2);
    const auto dh = x.dim(3);
    return reshape(permute(x, {0, 2, 1, 3}), {b, l, h * dh});
}

Tensor rotate(Tensor x, const RopePlan& rope) {
    for (const auto& span : rope) {
        if (span.table == nullptr) continue;
        x = apply_rope(x, *span.table, span.begin, span.begin + span.table->positions);
    }
    return x;
}

double softmax_scale(AttnScale mode, std::int64_t dim, std::int64_t head_dim) {
    return 1.0 / std::sqrt(static_cast<double>(mode == AttnScale::per_head ? head_dim : dim));
}

// Scaled dot-product attention on already-projected [B, L, D] inputs.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, int heads, const RopePlan& q_rope,
              const RopePlan& k_rope, const AttentionOptions& opts) {
    const auto dim = q.dim(2);
    const auto lk = k.dim(1);
    Tensor qh = rotate(split_heads(q, heads), q_rope);
    Tensor kh = rotate(split_heads(k, heads), k_rope);
    Tensor vh = split_heads(v, heads);
    Tensor scores = scale(matmul_nt(qh, kh), softmax_scale(opts.scale, dim, dim / heads));
    Tensor probs;
    if (opts.key_visible.empty()) {
        probs = softmax_lastdim(scores);
    } else {
        if (static_cast<std::int64_t>(opts.key_visible.size()) != lk) throw ShapeError("attention mask length mismatch");
        std::vector<double> bias(static_cast<std::size_t>(lk), 0.0);
        bool any = false;
        for (std::int64_t j = 0; j < lk; ++j) {
            if (opts.key_visible[j]) {
                any = true;
            } else {
                bias[j] = -std::numeric_limits<double>::infinity();
            }
        }
        if (!any) throw std::invalid_argument("attention mask hides every key");
        probs = softmax_lastdim_biased(scores, bias);
    }
    if (opts.probe) opts.probe->push_back(probs);
    return merge_heads(matmul(probs, vh));
}

}  // namespace

Tensor joint_attention(const Tensor& z, const AttentionWeights& w, const RopePlan& rope, const AttentionOptions& opts) {
    if (z.rank() != 3 || z.dim(2) != w.dim()) throw ShapeError("joint attention input must be [B,L,D]");
    if (z.dim(1) == 0) return z;
    return w.o(attend(w.q(z), w.k(z), w.v(z), w.heads, rope, rope, opts));
}

Tensor cross_attention(const Tensor& x, const Tensor& context, const AttentionWeights& w,
                       const AttentionOptions& opts) {
    if (context.dim(1) == 0) return Tensor::zeros(x.shape());
    Tensor q = w.q(layernorm_noaffine(x));
    Tensor k = w.k(layernorm_noaffine(context));
    Tensor v = w.v(context);
    return w.o(attend(q, k, v, w.heads, {}, {}, opts));
}

// ---------------------------------------------------------------------------

namespace {

Tensor mlp_branch(const Tensor& h, const ModulationSlots& s, const Mlp& mlp) {
    return gated_residual(h, mlp(modulated_ln(h, s.shift_mlp(), s.scale_mlp())), s.gate_mlp());
}

}  // namespace

DualStreamBlock DualStreamBlock::init(std::int64_t dim, int heads, std::int64_t mlp_hidden, RngStream& rng) {
    DualStreamBlock b;
    b.mod_x = SlotMlp::init(dim);
    b.mod_y = SlotMlp::init(dim);
    b.attn = AttentionWeights::init(dim, heads, rng);
    b.mlp_x = Mlp::random(dim, mlp_hidden, rng);
    b.mlp_y = Mlp::random(dim, mlp_hidden, rng);
    return b;
}

void DualStreamBlock::collect(const std::string& prefix, NamedParams& out) const {
    mod_x.collect(prefix + ".mod_x", out);
    mod_y.collect(prefix + ".mod_y", out);
    attn.collect(prefix + ".attn", out);
    mlp_x.collect(prefix + ".mlp_x", out);
    mlp_y.collect(prefix + ".mlp_y", out);
}

std::pair<Tensor, Tensor> DualStreamBlock::operator()(const Tensor& x, const Tensor& y, const Tensor& t_emb,
                                                      const RopeTable* x_rope, const BlockOptions& opts,
                                                      bool update_text) const {
    return dual_stream_block(x, y, mod_x(t_emb), mod_y(t_emb), x_rope, attn, mlp_x, mlp_y, opts, update_text);
}

std::pair<Tensor, Tensor> dual_stream_block(const Tensor& x, const Tensor& y,
                                            const ModulationSlots& slots_x, const ModulationSlots& slots_y,
                                            const RopeTable* x_rope, const AttentionWeights& attn,
                                            const Mlp& mlp_x, const Mlp& mlp_y,
                                            const BlockOptions& opts, bool update_text) {
    if (x.rank() != 3 || y.rank() != 3 || x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2)) {
        throw ShapeError("dual-stream block needs x, y as [B,L,D] with matching B and D");
    }
    const auto lx = x.dim(1);
    const auto ly = y.dim(1);
    Tensor xm = modulated_ln(x, slots_x.shift_msa(), slots_x.scale_msa());
    Tensor ym = modulated_ln(y, slots_y.shift_msa(), slots_y.scale_msa());
    Tensor z = ly > 0 ? concat({xm, ym}, 1) : xm;
    AttentionOptions ao{opts.scale, {}, opts.probe};
    Tensor o = joint_attention(z, attn, {RopeSpan{x_rope, 0}}, ao);

    Tensor x1 = gated_residual(x, narrow(o, 1, 0, lx), slots_x.gate_msa());
    Tensor x_out = mlp_branch(x1, slots_x, mlp_x);
    if (!update_text || ly == 0) return {x_out, y};
    Tensor y1 = gated_residual(y, narrow(o, 1, lx, ly), slots_y.gate_msa());
    return {x_out, mlp_branch(y1, slots_y, mlp_y)};
}

// ---------------------------------------------------------------------------

WanBlock WanBlock::init(std::int64_t dim, int heads, std::int64_t mlp_hidden, RngStream& rng) {
    WanBlock b;
    b.mod = SlotMlp::init(dim);
    b.self_attn = AttentionWeights::init(dim, heads, rng);
    b.cross_attn = AttentionWeights::init(dim, heads, rng);
    b.cross_attn.o = Linear::zeros(dim, dim, false);
    b.mlp = Mlp::random(dim, mlp_hidden, rng);
    return b;
}

void WanBlock::collect(const std::string& prefix, NamedParams& out) const {
    mod.collect(prefix + ".mod", out);
    self_attn.collect(prefix + ".self_attn", out);
    cross_attn.collect(prefix + ".cross_attn", out);
    mlp.collect(prefix + ".mlp", out);
}

Tensor WanBlock::operator()(const Tensor& x, const Tensor& y, const Tensor& t_emb, const RopeTable* x_rope,
                            const BlockOptions& opts) const {
    return wan_block(x, y, mod(t_emb), x_rope, self_attn, cross_attn, mlp, opts);
}

Tensor wan_block(const Tensor& x, const Tensor& y, const ModulationSlots& slots, const RopeTable* x_rope,
                 const AttentionWeights& self_attn, const AttentionWeights& cross_attn, const Mlp& mlp,
                 const BlockOptions& opts) {
    if (x.rank() != 3 || y.rank() != 3 || x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2)) {
        throw ShapeError("wan block needs x, y as [B,L,D] with matching B and D");
    }
    AttentionOptions ao{opts.scale, {}, opts.probe};
    Tensor xm = modulated_ln(x, slots.shift_msa(), slots.scale_msa());
    Tensor x_tilde = gated_residual(x, joint_attention(xm, self_attn, {RopeSpan{x_rope, 0}}, ao), slots.gate_msa());
    Tensor x_hat = add(x_tilde, cross_attention(x_tilde, y, cross_attn, ao));
    return mlp_branch(x_hat, slots, mlp);
}

// ---------------------------------------------------------------------------

OmniBlock OmniBlock::init(std::int64_t dim, int heads, std::int64_t mlp_hidden, RngStream& rng) {
    OmniBlock b;
    b.mod_v = SlotMlp::init(dim);
    b.mod_y = SlotMlp::init(dim);
    b.mod_a = SlotMlp::init(dim);
    b.attn = AttentionWeights::init(dim, heads, rng);
    b.mlp_v = Mlp::random(dim, mlp_hidden, rng);
    b.mlp_y = Mlp::random(dim, mlp_hidden, rng);
    b.mlp_a = Mlp::random(dim, mlp_hidden, rng);
    return b;
}

void OmniBlock::collect(const std::string& prefix, NamedParams& out) const {
    mod_v.collect(prefix + ".mod_v", out);
    mod_y.collect(prefix + ".mod_y", out);
    mod_a.collect(prefix + ".mod_a", out);
    attn.collect(prefix + ".attn", out);
    mlp_v.collect(prefix + ".mlp_v", out);
    mlp_y.collect(prefix + ".mlp_y", out);
    mlp_a.collect(prefix + ".mlp_a", out);
}

TriStream OmniBlock::operator()(const TriStream& in, const Tensor& t_emb, const RopeTable* v_rope,
                                const RopeTable* a_rope, const OmniMode& mode, const BlockOptions& opts) const {
    return omni_block(in, mod_v(t_emb), mod_y(t_emb), mod_a(t_emb), v_rope, a_rope, attn, mlp_v, mlp_y, mlp_a, mode,
                      opts);
}

TriStream omni_block(const TriStream& in, const ModulationSlots& slots_v, const ModulationSlots& slots_y,
                     const ModulationSlots& slots_a, const RopeTable* v_rope, const RopeTable* a_rope,
                     const AttentionWeights& attn, const Mlp& mlp_v, const Mlp& mlp_y, const Mlp& mlp_a,
                     const OmniMode& mode, const BlockOptions& opts) {
    if (mode.mode != ModalityMode::none && mode.target == Modality::both) {
        throw std::invalid_argument("omni-block may mask or drop audio or video, never both");
    }
    const bool drop_v = mode.mode == ModalityMode::drop && mode.target == Modality::video;
    const bool drop_a = mode.mode == ModalityMode::drop && mode.target == Modality::audio;
    const auto lv = drop_v ? 0 : in.v.dim(1);
    const auto ly = in.y.dim(1);
    const auto la = drop_a ? 0 : in.a.dim(1);

    std::vector<Tensor> parts;
    RopePlan rope;
    if (lv > 0) {
        parts.push_back(modulated_ln(in.v, slots_v.shift_msa(), slots_v.scale_msa()));
        rope.push_back({v_rope, 0});
    }
    if (ly > 0) parts.push_back(modulated_ln(in.y, slots_y.shift_msa(), slots_y.scale_msa()));
    if (la > 0) {
        parts.push_back(modulated_ln(in.a, slots_a.shift_msa(), slots_a.scale_msa()));
        rope.push_back({a_rope, lv + ly});
    }
    if (parts.empty()) return in;

    AttentionOptions ao{opts.scale, {}, opts.probe};
    if (mode.mode == ModalityMode::mask) {
        ao.key_visible.assign(static_cast<std::size_t>(lv + ly + la), true);
        const auto begin = mode.target == Modality::video ? 0 : lv + ly;
        const auto len = mode.target == Modality::video ? lv : la;
        for (std::int64_t j = begin; j < begin + len; ++j) ao.key_visible[j] = false;
    }
    Tensor z = parts.size() == 1 ? parts[0] : concat(parts, 1);
    Tensor o = joint_attention(z, attn, rope, ao);

    auto update = [&](const Tensor& h, std::int64_t begin, std::int64_t len, const ModulationSlots& s, const Mlp& mlp) {
        return mlp_branch(gated_residual(h, narrow(o, 1, begin, len), s.gate_msa()), s, mlp);
    };
    TriStream out = in;
    if (lv > 0) out.v = update(in.v, 0, lv, slots_v, mlp_v);
    if (ly > 0) out.y = update(in.y, lv, ly, slots_y, mlp_y);
    if (la > 0) out.a = update(in.a, lv + ly, la, slots_a, mlp_a);
    return out;
}

}  // namespace tmdit
