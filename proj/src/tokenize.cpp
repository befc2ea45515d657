#include "tmdit/tokenize.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace tmdit {

std::int64_t video_token_count(const PatchConfig& cfg, std::int64_t frames, std::int64_t height, std::int64_t width) {
    if (cfg.patch_h <= 0 || cfg.patch_w <= 0) throw ShapeError("patch size must be positive");
    if (height % cfg.patch_h != 0 || width % cfg.patch_w != 0) {
        throw ShapeError("video grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by patch " + std::to_string(cfg.patch_h) + "x" + std::to_string(cfg.patch_w));
    }
    return frames * (height / cfg.patch_h) * (width / cfg.patch_w);
}

Tensor patchify_raw(const Tensor& video, const PatchConfig& cfg) {
    if (video.rank() != 5) throw ShapeError("video latent must be [B,C,F,H,W], got " + shape_str(video.shape()));
    const auto b = video.dim(0);
    const auto c = video.dim(1);
    const auto f = video.dim(2);
    const auto h = video.dim(3);
    const auto w = video.dim(4);
    if (c != cfg.channels) throw ShapeError("video channels " + std::to_string(c) + " != " + std::to_string(cfg.channels));
    const auto tokens = video_token_count(cfg, f, h, w);
    const auto gh = h / cfg.patch_h;
    const auto gw = w / cfg.patch_w;
    Tensor x = reshape(video, {b, c, f, gh, cfg.patch_h, gw, cfg.patch_w});
    x = permute(x, {0, 2, 3, 5, 1, 4, 6});
    return reshape(x, {b, tokens, cfg.patch_features()});
}

Tensor patchify_video(const Tensor& video, const PatchConfig& cfg, const Linear& proj) {
    return proj(patchify_raw(video, cfg));
}

Tensor unpatchify_video(const Tensor& tokens, const PatchConfig& cfg,
                        std::int64_t frames, std::int64_t height, std::int64_t width) {
    if (tokens.rank() != 3) throw ShapeError("tokens must be [B,L,D], got " + shape_str(tokens.shape()));
    const auto expected = video_token_count(cfg, frames, height, width);
    if (tokens.dim(1) != expected || tokens.dim(2) != cfg.patch_features()) {
        throw ShapeError("token geometry " + shape_str(tokens.shape()) + " inconsistent with F=" +
                         std::to_string(frames) + " H=" + std::to_string(height) + " W=" + std::to_string(width));
    }
    const auto b = tokens.dim(0);
    const auto gh = height / cfg.patch_h;
    const auto gw = width / cfg.patch_w;
    Tensor x = reshape(tokens, {b, frames, gh, gw, cfg.channels, cfg.patch_h, cfg.patch_w});
    x = permute(x, {0, 4, 1, 2, 5, 3, 6});
    return reshape(x, {b, cfg.channels, frames, height, width});
}

// ---------------------------------------------------------------------------

Tensor DepthwiseConv1d::operator()(const Tensor& x) const {
    const auto kernel = weight.dim(0);
    const auto pad = kernel / 2;
    const auto b = x.dim(0);
    const auto len = x.dim(1);
    const auto d = x.dim(2);
    Tensor padded = x;
    if (pad > 0) {
        Tensor zeros = Tensor::zeros({b, pad, d});
        padded = concat({zeros, x, zeros}, 1);
    }
    Tensor out = bias;
    for (std::int64_t k = 0; k < kernel; ++k) {
        out = add(out, mul(narrow(padded, 1, k, len), narrow(weight, 0, k, 1)));
    }
    return out;
}

AudioEmbed AudioEmbed::init(const AudioEmbedConfig& cfg, RngStream& rng) {
    if (cfg.conv_kernel % 2 == 0) throw ShapeError("audio conv kernel must be odd");
    AudioEmbed e;
    e.proj = Linear::random(cfg.audio_dim, cfg.dim, rng);
    for (int i = 0; i < cfg.conv_layers; ++i) {
        DepthwiseConv1d conv;
        if (i + 1 == cfg.conv_layers) {
            conv.weight = Tensor::zeros({cfg.conv_kernel, cfg.dim}, true);
        } else {
            conv.weight = rng.normal_tensor({cfg.conv_kernel, cfg.dim}, 1.0 / std::sqrt(double(cfg.conv_kernel)));
            conv.weight.set_requires_grad(true);
        }
        conv.bias = Tensor::zeros({cfg.dim}, true);
        e.pos.push_back(std::move(conv));
    }
    return e;
}

Tensor AudioEmbed::operator()(const Tensor& audio) const {
    if (audio.rank() != 3) throw ShapeError("audio latent must be [B,L,d_a], got " + shape_str(audio.shape()));
    Tensor base = proj(audio);
    if (pos.empty()) return base;
    Tensor h = base;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        h = pos[i](h);
        if (i + 1 < pos.size()) h = silu(h);
    }
    return add(base, h);
}

void AudioEmbed::collect(const std::string& prefix, NamedParams& out) const {
    proj.collect(prefix + ".proj", out);
    for (std::size_t i = 0; i < pos.size(); ++i) {
        out.emplace_back(prefix + ".pos." + std::to_string(i) + ".weight", pos[i].weight);
        out.emplace_back(prefix + ".pos." + std::to_string(i) + ".bias", pos[i].bias);
    }
}

// ---------------------------------------------------------------------------

RopeLayout RopeLayout::from_ratios(std::int64_t d_head, double ratio_t, double ratio_h, double ratio_w, double base) {
    if (d_head <= 0 || d_head % 2 != 0) throw ShapeError("head width must be positive and even");
    if (ratio_t <= 0 || ratio_h <= 0 || ratio_w <= 0) throw std::invalid_argument("rope ratios must be positive");
    const std::int64_t pairs = d_head / 2;
    const double total = ratio_t + ratio_h + ratio_w;
    const auto share = [&](double r) { return static_cast<std::int64_t>(std::floor(pairs * r / total)); };
    RopeLayout l;
    l.d_head = d_head;
    l.d_h = 2 * share(ratio_h);
    l.d_w = 2 * share(ratio_w);
    l.d_t = d_head - l.d_h - l.d_w;
    l.base = base;
    return l;
}

void RopeLayout::validate() const {
    if (d_t % 2 || d_h % 2 || d_w % 2) throw ShapeError("rope sub-dimensions must be even");
    if (d_t < 0 || d_h < 0 || d_w < 0 || d_t + d_h + d_w != d_head) {
        throw ShapeError("rope split does not sum to the head width");
    }
}

namespace {

void fill_axis(std::vector<double>& row, std::int64_t offset, std::int64_t sub_dim, double pos, double base) {
    for (std::int64_t k = 0; k < sub_dim / 2; ++k) {
        row[offset + k] = pos * std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(sub_dim));
    }
}

void finish(RopeTable& t) {
    t.cos.resize(t.angles.size());
    t.sin.resize(t.angles.size());
    for (std::size_t i = 0; i < t.angles.size(); ++i) {
        t.cos[i] = std::cos(t.angles[i]);
        t.sin[i] = std::sin(t.angles[i]);
    }
}

}  // namespace

RopeTable video_rope_table(std::int64_t frames, std::int64_t grid_h, std::int64_t grid_w, const RopeLayout& layout) {
    layout.validate();
    RopeTable t;
    t.positions = frames * grid_h * grid_w;
    t.pairs = layout.d_head / 2;
    t.angles.assign(static_cast<std::size_t>(t.positions * t.pairs), 0.0);
    std::vector<double> row(static_cast<std::size_t>(t.pairs));
    for (std::int64_t f = 0; f < frames; ++f) {
        for (std::int64_t i = 0; i < grid_h; ++i) {
            for (std::int64_t j = 0; j < grid_w; ++j) {
                fill_axis(row, 0, layout.d_t, double(f), layout.base);
                fill_axis(row, layout.d_t / 2, layout.d_h, double(i), layout.base);
                fill_axis(row, (layout.d_t + layout.d_h) / 2, layout.d_w, double(j), layout.base);
                const std::int64_t pos = (f * grid_h + i) * grid_w + j;
                std::copy(row.begin(), row.end(), t.angles.begin() + pos * t.pairs);
            }
        }
    }
    finish(t);
    return t;
}

RopeTable audio_rope_table(std::int64_t length, const RopeLayout& layout) {
    if (layout.d_head % 2) throw ShapeError("rope head width must be even");
    RopeTable t;
    t.positions = length;
    t.pairs = layout.d_head / 2;
    t.angles.assign(static_cast<std::size_t>(t.positions * t.pairs), 0.0);
    std::vector<double> row(static_cast<std::size_t>(t.pairs));
    for (std::int64_t l = 0; l < length; ++l) {
        fill_axis(row, 0, layout.d_head, double(l), layout.base);
        std::copy(row.begin(), row.end(), t.angles.begin() + l * t.pairs);
    }
    finish(t);
    return t;
}

Tensor apply_rope(const Tensor& x, const RopeTable& table, std::int64_t begin, std::int64_t end) {
    if (x.rank() != 4) throw ShapeError("apply_rope expects [B,H,L,d_head], got " + shape_str(x.shape()));
    const auto len = x.dim(2);
    const auto dh = x.dim(3);
    if (begin < 0 || end < begin || end > len) throw ShapeError("rope span outside sequence");
    if (end - begin != table.positions) {
        throw ShapeError("rope span length " + std::to_string(end - begin) + " != table length " +
                         std::to_string(table.positions));
    }
    if (begin == end) return x;
    if (table.pairs * 2 != dh) throw ShapeError("rope table width does not match head width");
    const std::int64_t heads = x.dim(0) * x.dim(1);
    auto cs = std::make_shared<std::vector<double>>(table.cos);
    auto sn = std::make_shared<std::vector<double>>(table.sin);
    const std::int64_t pairs = table.pairs;

    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t p = begin; p < end; ++p) {
            double* row = out.data() + (h * len + p) * dh;
            const double* c = cs->data() + (p - begin) * pairs;
            const double* s = sn->data() + (p - begin) * pairs;
            for (std::int64_t k = 0; k < pairs; ++k) {
                const double x0 = row[2 * k];
                const double x1 = row[2 * k + 1];
                row[2 * k] = x0 * c[k] - x1 * s[k];
                row[2 * k + 1] = x0 * s[k] + x1 * c[k];
            }
        }
    }
    return make_result(x.shape(), std::move(out), {x}, [=](detail::Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::int64_t h = 0; h < heads; ++h) {
            for (std::int64_t p = 0; p < len; ++p) {
                const std::int64_t off = (h * len + p) * dh;
                if (p < begin || p >= end) {
                    for (std::int64_t j = 0; j < dh; ++j) g[off + j] += self.grad[off + j];
                    continue;
                }
                const double* c = cs->data() + (p - begin) * pairs;
                const double* s = sn->data() + (p - begin) * pairs;
                for (std::int64_t k = 0; k < pairs; ++k) {
                    const double g0 = self.grad[off + 2 * k];
                    const double g1 = self.grad[off + 2 * k + 1];
                    g[off + 2 * k] += g0 * c[k] + g1 * s[k];
                    g[off + 2 * k + 1] += -g0 * s[k] + g1 * c[k];
                }
            }
        }
    }, "apply_rope");
}

}  // namespace tmdit
