#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "tmdit/harness.hpp"
#include "tmdit/tensor_io.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kNumerical = 3 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::int64_t> steps;
    std::optional<double> cfg_scale;
};

void common_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "experiment config file")->required();
    cmd->add_option("--seed", o.seed, "overrides the config seed");
    cmd->add_option("--out", o.out, "output directory");
}

tmdit::ExperimentConfig resolve(const Overrides& o) {
    auto cfg = tmdit::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    if (o.steps) {
        if (*o.steps < 0) throw tmdit::ConfigError("--steps must be non-negative");
        cfg.train.steps = *o.steps;
    }
    if (o.cfg_scale) {
        if (!(*o.cfg_scale >= 0)) throw tmdit::ConfigError("--cfg-scale must be non-negative");
        cfg.sampler.guidance = *o.cfg_scale;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tri-modal diffusion transformer toolkit"};
    app.require_subcommand(1);
    Overrides o;

    auto* train = app.add_subcommand("train", "train on synthetic audio-video scenes");
    common_flags(train, o);
    train->add_option("--steps", o.steps, "training steps");

    auto* sample = app.add_subcommand("sample", "generate latent pairs from the trained checkpoint");
    common_flags(sample, o);
    sample->add_option("--cfg-scale", o.cfg_scale, "guidance scale");

    auto* eval = app.add_subcommand("eval", "score generated latents against held-out scenes");
    common_flags(eval, o);

    auto* check = app.add_subcommand("check", "run the property suite");
    common_flags(check, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const auto cfg = resolve(o);
        if (train->parsed()) {
            tmdit::run_train(cfg, &std::cout);
        } else if (sample->parsed()) {
            tmdit::run_sample(cfg);
            std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / tmdit::kSamplesFile).string() << '\n';
        } else if (eval->parsed()) {
            std::cout << tmdit::format_metrics(tmdit::run_eval(cfg));
        } else {
            bool ok = true;
            for (const auto& r : tmdit::run_check(cfg)) {
                std::cout << (r.pass ? "PASS " : "FAIL ") << r.name;
                if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
                std::cout << '\n';
                ok = ok && r.pass;
            }
            return ok ? kOk : kNumerical;
        }
    } catch (const tmdit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const tmdit::IoError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const tmdit::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
    return kOk;
}
