// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "invclr/eval/eval.hpp"

namespace invclr::io {

using Json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;
std::string code_version();

struct DataConfig {
  std::size_t n_train = 10000;
  std::size_t n_test = 2000;
  int resolution = 32;
  double extent = 5.0;
  spiro::SpecTable specs = spiro::SpecTable::defaults();
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  train::EncoderConfig encoder;  // input_shape follows data.resolution
  train::HeadConfig head;
  train::TrainConfig train;      // train.seed mirrors seed
  eval::EvalConfig eval;         // eval.seed mirrors seed

  spiro::RenderGrid grid() const { return {data.resolution, data.extent}; }
  /// Dataset seeds: the test split is keyed by the seed with its top bit set.
  std::uint64_t train_data_seed() const { return seed; }
  std::uint64_t test_data_seed() const { return seed ^ (std::uint64_t{1} << 63); }
  void validate() const;
};

/// Raised for malformed or out-of-range configuration; names the key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an artifact on disk cannot be read back faithfully.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// With `data_only`, only the data section is range-checked (for generate).
ExperimentConfig config_from_json(const Json& doc, bool data_only = false);
Json config_to_json(const ExperimentConfig& cfg);
/// Applies "dotted.key=value" to a config document; value is parsed as JSON
/// when possible, otherwise taken as a string.
void apply_override(Json& doc, const std::string& assignment);
ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {},
                             bool data_only = false);

/// Writes via a temporary file in the same directory, then renames.
void write_atomic(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

void write_dataset(const fs::path& path, const spiro::SpiroDataset& data);
spiro::SpiroDataset read_dataset(const fs::path& path);

struct Checkpoint {
  Json config;  // resolved experiment config
  std::uint64_t step = 0;
  ad::ParamStore params;
};
void write_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const fs::path& path);

Json metrics_to_json(const train::MetricsRecord& rec);
train::MetricsRecord metrics_from_json(const Json& j);

/// Appends records to a JSON-lines file whose first line is a header
/// carrying the resolved config.
class MetricsWriter {
 public:
  MetricsWriter(const fs::path& path, const Json& config);
  void write(const train::MetricsRecord& rec);
  /// Publishes the file at its final path.
  void close();

 private:
  fs::path path_;
  fs::path tmp_;
  std::string buffer_;
};

/// Throws FormatError if a line is malformed or steps do not increase.
std::vector<train::MetricsRecord> read_metrics(const fs::path& path);

Json report_to_json(const eval::EvalReport& report);
/// The report file body: report plus the seeds of the datasets it scored.
Json report_artifact(const ExperimentConfig& cfg, const eval::EvalReport& report,
                     const spiro::SpiroDataset& train_set, const spiro::SpiroDataset& test_set);
/// Wraps a payload with version, code version, seed and resolved config.
Json artifact(const std::string& kind, const ExperimentConfig& cfg, Json payload);

/// Paired-ablation summary of a lambda = 0 and a lambda > 0 report.
Json compare_reports(const eval::EvalReport& base, const eval::EvalReport& reg);

/// Raised by run_experiment; `stage` is "generate", "train" or "evaluate".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

struct RunPaths {
  fs::path train_data, test_data, checkpoint, metrics, report;
};
RunPaths run_paths(const fs::path& dir);

/// Loads the dataset at `path` if it matches what `generate_dataset` would
/// produce for these arguments; otherwise generates and writes it.
spiro::SpiroDataset ensure_dataset(const fs::path& path, std::size_t n, std::uint64_t seed,
                                   const spiro::SpecTable& specs, const spiro::RenderGrid& grid);

/// generate (reusing matching dataset files) -> train -> evaluate.
eval::EvalReport run_experiment(const ExperimentConfig& cfg, const RunPaths& paths);

/// Runs lambda = 0 and the configured lambda with shared view streams into
/// dir/lambda0 and dir/lambda, then writes dir/comparison.json.
Json run_paired(const ExperimentConfig& cfg, const fs::path& dir);

}  // namespace invclr::io
