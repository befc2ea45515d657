#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "tmdit/flow.hpp"
#include "tmdit/metrics.hpp"
#include "tmdit/model.hpp"
#include "tmdit/sampler.hpp"
#include "tmdit/synthetic.hpp"

namespace tmdit {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EvalConfig {
    std::int64_t samples = 32;
    std::int64_t feature_dim = 16;        // random-projection width for Frechet features
    std::uint64_t feature_seed = 1234;    // projection matrices are drawn from this seed only
    std::int64_t tolerance = 1;           // AV-Align frames
    JavisConfig javis;
};

struct ExperimentConfig {
    ModelConfig model;
    TrainerConfig train;
    SamplerConfig sampler;
    SceneConfig scene;  // geometry fields follow `model`
    EvalConfig eval;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    // Cross-section checks; throws ConfigError.
    void validate() const;
};

// Flat `key = value` lines, `#` starts a comment. Unknown keys, malformed
// values and duplicates raise ConfigError("<source>:<line>: <key>: <reason>").
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical `key = value` echo of every setting except the output directory.
std::string config_echo(const ExperimentConfig& cfg);

}  // namespace tmdit
