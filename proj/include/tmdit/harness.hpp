#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tmdit/config.hpp"
#include "tmdit/verify.hpp"

namespace tmdit {

// Artifact names inside ExperimentConfig::out_dir.
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kTrainLogFile = "train_log.txt";
inline constexpr const char* kSamplesFile = "samples.bin";
inline constexpr const char* kSamplesSidecar = "samples.txt";
inline constexpr const char* kMetricsFile = "metrics.txt";

using MetricReport = std::vector<std::pair<std::string, double>>;

// Trains from scratch for cfg.train.steps steps on fresh synthetic batches,
// appending one log line per step to the log file and `progress` (if given).
// Zero steps writes the initial checkpoint only.
void run_train(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

// Loads the checkpoint and generates cfg.eval.samples latent pairs captioned
// like the held-out synthetic set.
void run_sample(const ExperimentConfig& cfg);

// Scores the generated latents against the held-out synthetic set and writes
// metrics.txt plus EMB1 feature files.
MetricReport run_eval(const ExperimentConfig& cfg);

std::vector<CheckResult> run_check(const ExperimentConfig& cfg);

// Loads weights from a checkpoint into a model built from `cfg`.
Model load_model(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

// Held-out reference scenes; their captions drive sampling.
SyntheticBatch heldout_set(const ExperimentConfig& cfg);

std::string format_metrics(const MetricReport& r);

}  // namespace tmdit
