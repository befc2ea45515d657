#include "tmdit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

namespace tmdit {

namespace {

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> parse;
    std::function<std::string(const ExperimentConfig&)> format;
};

template <class T>
T parse_int(const std::string& s) {
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
    return v;
}

double parse_real(const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::string real_str(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class E>
using Names = std::vector<std::pair<E, const char*>>;

template <class E>
E parse_enum(const std::string& s, const Names<E>& names) {
    std::string options;
    for (const auto& [e, n] : names) {
        if (s == n) return e;
        options += options.empty() ? n : std::string("|") + n;
    }
    throw std::invalid_argument("expected one of " + options + ", got '" + s + "'");
}

template <class E>
std::string enum_str(E v, const Names<E>& names) {
    for (const auto& [e, n] : names) {
        if (e == v) return n;
    }
    return "?";
}

const Names<BlockFamily> kFamily{{BlockFamily::sd3_dual, "sd3_dual"}, {BlockFamily::wan, "wan"}};
const Names<Conditioning> kConditioning{{Conditioning::static_text, "static"}, {Conditioning::dynamic_text, "dynamic"}};
const Names<SchedulePolicy> kSchedule{{SchedulePolicy::strict_alternate, "strict_alternate"},
                                      {SchedulePolicy::video_first_ratio, "video_first_ratio"}};
const Names<AttnScale> kScale{{AttnScale::per_head, "per_head"}, {AttnScale::full_width, "full_width"}};
const Names<Weighting> kWeighting{{Weighting::constant_one, "constant_one"},
                                  {Weighting::sigma_one_minus_sigma, "sigma_one_minus_sigma"}};
const Names<ModalityMode> kModality{{ModalityMode::none, "none"}, {ModalityMode::mask, "mask"}, {ModalityMode::drop, "drop"}};
const Names<Solver> kSolver{{Solver::euler, "euler"}, {Solver::heun, "heun"}};

template <class T, class Get>
Field int_field(std::string key, Get get) {
    return {std::move(key), [get](ExperimentConfig& c, const std::string& s) { get(c) = parse_int<T>(s); },
            [get](const ExperimentConfig& c) { return std::to_string(get(const_cast<ExperimentConfig&>(c))); }};
}

template <class Get>
Field real_field(std::string key, Get get) {
    return {std::move(key), [get](ExperimentConfig& c, const std::string& s) { get(c) = parse_real(s); },
            [get](const ExperimentConfig& c) { return real_str(get(const_cast<ExperimentConfig&>(c))); }};
}

template <class Get>
Field bool_field(std::string key, Get get) {
    return {std::move(key), [get](ExperimentConfig& c, const std::string& s) { get(c) = parse_bool(s); },
            [get](const ExperimentConfig& c) { return std::string(get(const_cast<ExperimentConfig&>(c)) ? "true" : "false"); }};
}

template <class E, class Get>
Field enum_field(std::string key, const Names<E>& names, Get get) {
    return {std::move(key), [get, &names](ExperimentConfig& c, const std::string& s) { get(c) = parse_enum(s, names); },
            [get, &names](const ExperimentConfig& c) { return enum_str(get(const_cast<ExperimentConfig&>(c)), names); }};
}

#define TM_REF(path) [](ExperimentConfig& c) -> auto& { return c.path; }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        int_field<std::uint64_t>("seed", TM_REF(seed)),
        int_field<std::int64_t>("model.dim", TM_REF(model.dim)),
        int_field<int>("model.heads", TM_REF(model.heads)),
        int_field<std::int64_t>("model.mlp_ratio", TM_REF(model.mlp_ratio)),
        int_field<int>("model.video_blocks", TM_REF(model.video_blocks)),
        int_field<int>("model.audio_blocks", TM_REF(model.audio_blocks)),
        int_field<int>("model.omni_blocks", TM_REF(model.omni_blocks)),
        enum_field("model.family", kFamily, TM_REF(model.family)),
        enum_field("model.conditioning", kConditioning, TM_REF(model.conditioning)),
        enum_field("model.schedule", kSchedule, TM_REF(model.schedule)),
        enum_field("model.attn_scale", kScale, TM_REF(model.attn_scale)),
        bool_field("model.frozen_video", TM_REF(model.frozen_video)),
        int_field<std::int64_t>("model.channels", TM_REF(model.channels)),
        int_field<std::int64_t>("model.frames", TM_REF(model.frames)),
        int_field<std::int64_t>("model.height", TM_REF(model.height)),
        int_field<std::int64_t>("model.width", TM_REF(model.width)),
        int_field<std::int64_t>("model.patch_h", TM_REF(model.patch_h)),
        int_field<std::int64_t>("model.patch_w", TM_REF(model.patch_w)),
        int_field<std::int64_t>("model.audio_len", TM_REF(model.audio_len)),
        int_field<std::int64_t>("model.audio_dim", TM_REF(model.audio_dim)),
        int_field<std::int64_t>("model.text_len", TM_REF(model.text_len)),
        int_field<std::int64_t>("model.vocab", TM_REF(model.vocab)),
        real_field("model.rope_ratio_t", TM_REF(model.rope_ratio_t)),
        real_field("model.rope_ratio_h", TM_REF(model.rope_ratio_h)),
        real_field("model.rope_ratio_w", TM_REF(model.rope_ratio_w)),
        real_field("model.rope_base", TM_REF(model.rope_base)),
        int_field<int>("model.audio_conv_layers", TM_REF(model.audio_conv_layers)),
        int_field<int>("model.audio_conv_kernel", TM_REF(model.audio_conv_kernel)),
        enum_field("train.weighting", kWeighting, TM_REF(train.weighting)),
        real_field("train.p_cap", TM_REF(train.p_cap)),
        int_field<std::int64_t>("train.s_max", TM_REF(train.s_max)),
        enum_field("train.modality_mode", kModality, TM_REF(train.modality_mode)),
        real_field("train.lr", TM_REF(train.lr)),
        int_field<std::int64_t>("train.warmup_steps", TM_REF(train.warmup_steps)),
        int_field<std::int64_t>("train.batch", TM_REF(train.batch)),
        int_field<std::int64_t>("train.steps", TM_REF(train.steps)),
        int_field<int>("sampler.steps", TM_REF(sampler.steps)),
        enum_field("sampler.solver", kSolver, TM_REF(sampler.solver)),
        real_field("sampler.guidance", TM_REF(sampler.guidance)),
        int_field<int>("scene.min_events", TM_REF(scene.min_events)),
        int_field<int>("scene.max_events", TM_REF(scene.max_events)),
        int_field<std::int64_t>("scene.min_spacing", TM_REF(scene.min_spacing)),
        real_field("scene.coupling", TM_REF(scene.coupling)),
        real_field("scene.amplitude", TM_REF(scene.amplitude)),
        real_field("scene.noise", TM_REF(scene.noise)),
        real_field("scene.fps", TM_REF(scene.fps)),
        int_field<std::int64_t>("eval.samples", TM_REF(eval.samples)),
        int_field<std::int64_t>("eval.feature_dim", TM_REF(eval.feature_dim)),
        int_field<std::uint64_t>("eval.feature_seed", TM_REF(eval.feature_seed)),
        int_field<std::int64_t>("eval.tolerance", TM_REF(eval.tolerance)),
        real_field("eval.window_s", TM_REF(eval.javis.window_s)),
        real_field("eval.hop_s", TM_REF(eval.javis.hop_s)),
        real_field("eval.bottom_fraction", TM_REF(eval.javis.bottom_fraction)),
        {"out", [](ExperimentConfig& c, const std::string& s) { c.out_dir = s; },
         [](const ExperimentConfig& c) { return c.out_dir; }},
    };
    return f;
}

#undef TM_REF

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void ExperimentConfig::validate() const {
    try {
        model.validate();
        SceneConfig s = scene;
        s.adopt_geometry(model);
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (train.batch < 1) throw ConfigError("train.batch must be positive");
    if (train.steps < 0) throw ConfigError("train.steps must be non-negative");
    if (!(train.lr > 0)) throw ConfigError("train.lr must be positive");
    if (!(train.p_cap >= 0 && train.p_cap <= 1)) throw ConfigError("train.p_cap must lie in [0, 1]");
    if (train.s_max < 1) throw ConfigError("train.s_max must be positive");
    if (sampler.steps < 1) throw ConfigError("sampler.steps must be at least 1");
    if (!(sampler.guidance >= 0)) throw ConfigError("sampler.guidance must be non-negative");
    if (eval.samples < 2) throw ConfigError("eval.samples must be at least 2");
    if (eval.feature_dim < 1) throw ConfigError("eval.feature_dim must be positive");
    if (eval.tolerance < 0) throw ConfigError("eval.tolerance must be non-negative");
    if (!(eval.javis.bottom_fraction > 0 && eval.javis.bottom_fraction <= 1)) {
        throw ConfigError("eval.bottom_fraction must lie in (0, 1]");
    }
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto where = source + ":" + std::to_string(lineno) + ": ";
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        const Field* field = nullptr;
        for (const auto& f : fields()) {
            if (f.key == key) field = &f;
        }
        if (!field) throw ConfigError(where + key + ": unknown key");
        if (!seen.insert(key).second) throw ConfigError(where + key + ": duplicate key");
        if (value.empty()) throw ConfigError(where + key + ": missing value");
        try {
            field->parse(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    cfg.scene.adopt_geometry(cfg.model);
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot read config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

std::string config_echo(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        if (f.key == "out") continue;
        out += f.key + " = " + f.format(cfg) + "\n";
    }
    return out;
}

}  // namespace tmdit
