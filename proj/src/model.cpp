#include "tmdit/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace tmdit {

RopeLayout ModelConfig::rope_layout() const {
    return RopeLayout::from_ratios(dim / heads, rope_ratio_t, rope_ratio_h, rope_ratio_w, rope_base);
}

std::int64_t ModelConfig::video_tokens() const { return video_token_count(patch(), frames, height, width); }

void ModelConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(what);
    };
    require(dim > 0 && heads > 0 && dim % heads == 0, "model.dim must be a positive multiple of model.heads");
    require((dim / heads) % 2 == 0, "head width must be even for rotary embeddings");
    require(mlp_ratio > 0, "model.mlp_ratio must be positive");
    require(video_blocks >= 0 && audio_blocks >= 0 && omni_blocks >= 0, "block counts must be non-negative");
    require(channels > 0 && frames > 0 && height > 0 && width > 0, "video geometry must be positive");
    require(patch_h > 0 && patch_w > 0 && height % patch_h == 0 && width % patch_w == 0,
            "video height/width must be divisible by the patch size");
    require(audio_len > 0 && audio_dim > 0, "audio geometry must be positive");
    require(text_len >= 0 && vocab >= 2, "text geometry invalid");
    require(audio_conv_kernel % 2 == 1 && audio_conv_layers >= 0, "audio conv kernel must be odd");
    require(!(conditioning == Conditioning::dynamic_text && family == BlockFamily::wan),
            "dynamic text conditioning needs sd3_dual towers; wan text is read-only");
    rope_layout().validate();
}

BlockSchedule build_schedule(int video_blocks, int audio_blocks, SchedulePolicy policy, CounterMode counters) {
    if (video_blocks < 0 || audio_blocks < 0) throw std::invalid_argument("block counts must be non-negative");
    BlockSchedule s;
    s.counters = counters;
    int nv = 0;
    int na = 0;
    const int total = video_blocks + audio_blocks;
    for (int l = 0; l < total; ++l) {
        bool video;
        if (nv == video_blocks) {
            video = false;
        } else if (na == audio_blocks) {
            video = true;
        } else if (policy == SchedulePolicy::strict_alternate) {
            video = nv <= na;
        } else {
            // fraction of the video tower done <= fraction of the audio tower done
            video = static_cast<long>(nv) * audio_blocks <= static_cast<long>(na) * video_blocks;
        }
        s.order.push_back(video ? BlockKind::video : BlockKind::audio);
        s.block_index.push_back(video ? nv : na);
        (video ? nv : na) += 1;
        const int offset = counters == CounterMode::literal ? 1 : 0;
        s.video_counter.push_back(nv + offset);
        s.audio_counter.push_back(na + offset);
    }
    return s;
}

// ---------------------------------------------------------------------------

namespace {

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids, std::int64_t batch, std::int64_t len) {
    const auto vocab = table.dim(0);
    const auto d = table.dim(1);
    if (static_cast<std::int64_t>(ids.size()) != batch * len) throw ShapeError("token id count != batch * text_len");
    std::vector<double> out(static_cast<std::size_t>(batch * len * d));
    const auto src = table.data();
    auto idx = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= vocab) throw std::out_of_range("token id outside vocabulary");
        std::copy_n(src.begin() + ids[i] * d, d, out.begin() + static_cast<std::int64_t>(i) * d);
    }
    return make_result({batch, len, d}, std::move(out), {table}, [idx, d](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < idx->size(); ++i) {
            for (std::int64_t j = 0; j < d; ++j) g[(*idx)[i] * d + j] += self.grad[i * d + j];
        }
    }, "embedding");
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    schedule_ = build_schedule(cfg_.video_blocks, cfg_.audio_blocks, cfg_.schedule);
    const auto layout = cfg_.rope_layout();
    video_rope_ = video_rope_table(cfg_.frames, cfg_.height / cfg_.patch_h, cfg_.width / cfg_.patch_w, layout);
    audio_rope_ = audio_rope_table(cfg_.audio_len, layout);

    const auto d = cfg_.dim;
    const auto hidden = d * cfg_.mlp_ratio;
    auto backbone = RngStream::named(seed, "init.video");
    auto branch = RngStream::named(seed, "init.audio");
    auto fusion = RngStream::named(seed, "init.omni");

    time_ = TimeEmbedder::init(d, backbone);
    text_table_ = backbone.normal_tensor({cfg_.vocab, d});
    text_table_.set_requires_grad(true);
    patch_embed_ = Linear::random(cfg_.patch().patch_features(), d, backbone);
    for (int i = 0; i < cfg_.video_blocks; ++i) {
        if (cfg_.family == BlockFamily::sd3_dual) {
            video_dual_.push_back(DualStreamBlock::init(d, cfg_.heads, hidden, backbone));
        } else {
            video_wan_.push_back(WanBlock::init(d, cfg_.heads, hidden, backbone));
        }
    }
    video_head_ = Linear::random(d, cfg_.patch().patch_features(), backbone);

    audio_embed_ = AudioEmbed::init(cfg_.audio_embed(), branch);
    for (int i = 0; i < cfg_.audio_blocks; ++i) {
        if (cfg_.family == BlockFamily::sd3_dual) {
            audio_dual_.push_back(DualStreamBlock::init(d, cfg_.heads, hidden, branch));
        } else {
            audio_wan_.push_back(WanBlock::init(d, cfg_.heads, hidden, branch));
        }
    }
    audio_head_ = Linear::random(d, cfg_.audio_dim, branch);

    for (int i = 0; i < cfg_.omni_blocks; ++i) omni_.push_back(OmniBlock::init(d, cfg_.heads, hidden, fusion));

    if (cfg_.frozen_video) {
        for (auto& [name, t] : parameters()) {
            if (name.starts_with("video.")) const_cast<Tensor&>(t).set_requires_grad(false);
        }
    }
}

Tensor Model::embed_text(std::span<const int> ids, std::int64_t batch) const {
    return embedding_lookup(text_table_, ids, batch, cfg_.text_len);
}

Tensor Model::null_text(std::int64_t batch) const {
    std::vector<int> ids(static_cast<std::size_t>(batch * cfg_.text_len), kNullToken);
    return embed_text(ids, batch);
}

void Model::check_geometry(const Tensor& video, const Tensor& audio, const Tensor& text,
                           std::span<const double> sigma) const {
    const auto b = video.rank() > 0 ? video.dim(0) : 0;
    const Shape vs{b, cfg_.channels, cfg_.frames, cfg_.height, cfg_.width};
    const Shape as{b, cfg_.audio_len, cfg_.audio_dim};
    const Shape ts{b, cfg_.text_len, cfg_.dim};
    if (video.shape() != vs) throw ShapeError("video latent " + shape_str(video.shape()) + ", expected " + shape_str(vs));
    if (audio.shape() != as) throw ShapeError("audio latent " + shape_str(audio.shape()) + ", expected " + shape_str(as));
    if (text.shape() != ts) throw ShapeError("text tokens " + shape_str(text.shape()) + ", expected " + shape_str(ts));
    if (static_cast<std::int64_t>(sigma.size()) != b) throw ShapeError("one flow time per batch element required");
}

Tensor Model::embed_video(const Tensor& video) const { return patchify_video(video, cfg_.patch(), patch_embed_); }

Tensor Model::video_out(const Tensor& tokens) const {
    return unpatchify_video(video_head_(tokens), cfg_.patch(), cfg_.frames, cfg_.height, cfg_.width);
}

Tensor Model::video_tower(const Tensor& video, const Tensor& text, std::span<const double> sigma) const {
    const BlockOptions opts{cfg_.attn_scale, nullptr};
    const Tensor t = time_(sigma);
    Tensor v = embed_video(video);
    for (const auto& blk : video_dual_) v = blk(v, text, t, &video_rope_, opts, false).first;
    for (const auto& blk : video_wan_) v = blk(v, text, t, &video_rope_, opts);
    return video_out(v);
}

Velocity Model::forward(const Tensor& video, const Tensor& audio, const Tensor& text, std::span<const double> sigma,
                        const OmniMode& mode, ScheduleTrace* trace, std::vector<Tensor>* probe) const {
    check_geometry(video, audio, text, sigma);
    const BlockOptions opts{cfg_.attn_scale, probe};
    const Tensor t = time_(sigma);
    Tensor v = embed_video(video);
    Tensor a = audio_embed_(audio);
    Tensor y = text;

    if (cfg_.conditioning == Conditioning::static_text) {
        for (const auto& blk : video_dual_) v = blk(v, text, t, &video_rope_, opts, false).first;
        for (const auto& blk : video_wan_) v = blk(v, text, t, &video_rope_, opts);
        for (const auto& blk : audio_dual_) a = blk(a, text, t, &audio_rope_, opts, false).first;
        for (const auto& blk : audio_wan_) a = blk(a, text, t, &audio_rope_, opts);
    } else {
        for (std::size_t l = 0; l < schedule_.order.size(); ++l) {
            const auto i = static_cast<std::size_t>(schedule_.block_index[l]);
            if (schedule_.order[l] == BlockKind::video) {
                std::tie(v, y) = video_dual_.at(i)(v, y, t, &video_rope_, opts);
            } else {
                std::tie(a, y) = audio_dual_.at(i)(a, y, t, &audio_rope_, opts);
            }
            if (trace) {
                trace->v.push_back(v);
                trace->a.push_back(a);
                trace->y.push_back(y);
            }
        }
    }

    TriStream s{v, y, a};
    for (const auto& blk : omni_) s = blk(s, t, &video_rope_, &audio_rope_, mode, opts);
    return Velocity{video_out(s.v), audio_head_(s.a)};
}

NamedParams Model::parameters() const {
    NamedParams out;
    time_.collect("video.time", out);
    out.emplace_back("video.text.table", text_table_);
    patch_embed_.collect("video.patch", out);
    for (std::size_t i = 0; i < video_dual_.size(); ++i) video_dual_[i].collect("video.blocks." + std::to_string(i), out);
    for (std::size_t i = 0; i < video_wan_.size(); ++i) video_wan_[i].collect("video.blocks." + std::to_string(i), out);
    video_head_.collect("video.head", out);
    audio_embed_.collect("audio.embed", out);
    for (std::size_t i = 0; i < audio_dual_.size(); ++i) audio_dual_[i].collect("audio.blocks." + std::to_string(i), out);
    for (std::size_t i = 0; i < audio_wan_.size(); ++i) audio_wan_[i].collect("audio.blocks." + std::to_string(i), out);
    audio_head_.collect("audio.head", out);
    for (std::size_t i = 0; i < omni_.size(); ++i) omni_[i].collect("omni." + std::to_string(i), out);
    return out;
}

NamedParams Model::trainable_parameters() const {
    NamedParams all = parameters();
    if (!cfg_.frozen_video) return all;
    NamedParams out;
    for (auto& p : all) {
        if (!p.first.starts_with("video.")) out.push_back(p);
    }
    return out;
}

void Model::load_parameters(const NamedParams& values) {
    NamedParams mine = parameters();
    if (mine.size() != values.size()) {
        throw ShapeError("parameter count " + std::to_string(values.size()) + " != expected " +
                         std::to_string(mine.size()));
    }
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].first != values[i].first) {
            throw ShapeError("parameter " + std::to_string(i) + " is '" + values[i].first + "', expected '" +
                             mine[i].first + "'");
        }
        if (mine[i].second.shape() != values[i].second.shape()) {
            throw ShapeError("parameter '" + mine[i].first + "' has shape " + shape_str(values[i].second.shape()) +
                             ", expected " + shape_str(mine[i].second.shape()));
        }
    }
    for (std::size_t i = 0; i < mine.size(); ++i) {
        auto dst = mine[i].second.mutable_data();
        auto src = values[i].second.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

void Model::randomize_all(RngStream& rng, double stddev) {
    for (auto& [name, t] : parameters()) {
        for (auto& v : const_cast<Tensor&>(t).mutable_data()) v = stddev * rng.normal();
    }
}

void Model::zero_gates() {
    const auto d = cfg_.dim;
    for (auto& [name, t] : parameters()) {
        if (name.find(".mod") == std::string::npos || name.find(".proj.") == std::string::npos) continue;
        auto data = const_cast<Tensor&>(t).mutable_data();
        const auto cols = 6 * d;
        const auto rows = static_cast<std::int64_t>(data.size()) / cols;
        for (std::int64_t r = 0; r < rows; ++r) {
            for (int slot : {ModulationSlots::kGateMsa, ModulationSlots::kGateMlp}) {
                for (std::int64_t j = 0; j < d; ++j) data[r * cols + slot * d + j] = 0.0;
            }
        }
    }
}

}  // namespace tmdit
