#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "patchage/config.hpp"
#include "patchage/report.hpp"

namespace patchage {

// Layout of a run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path manifest() const { return data_dir() / "manifest.csv"; }
  std::filesystem::path split_file() const { return data_dir() / "split.json"; }
  std::filesystem::path models_dir() const { return root / "models"; }
  std::filesystem::path logs_dir() const { return root / "logs"; }
  std::filesystem::path predictions_dir() const { return root / "predictions"; }
  std::filesystem::path report_dir() const { return root / "report"; }

  // Model stems (without extension).
  std::filesystem::path patch_model(std::size_t index) const;
  std::filesystem::path baseline_model() const;
  std::filesystem::path patch_log(std::size_t index) const;
  std::filesystem::path baseline_log() const;
  std::filesystem::path timings_log() const { return logs_dir() / "timings.jsonl"; }
};

// Generates the phantom dataset under <root>/data. Idempotent for a fixed config.
std::vector<Subject> cmd_gen_data(const PipelineConfig& config);

struct TrainRequest {
  enum class Kind { kPatch, kAllPatches, kBaseline };
  Kind kind = Kind::kAllPatches;
  std::size_t patch = 0;
  // Retrain even when a checkpoint exists, including corrupt or stale ones.
  bool force = false;
  // Called with a one-line status message as each model finishes or is skipped.
  std::function<void(const std::string&)> progress;
};

struct TrainSummary {
  std::vector<long> trained;
  std::vector<long> skipped;  // valid checkpoints from the same config
};

// Trains the requested models, skipping those with a valid checkpoint. A corrupt
// checkpoint (ArtifactError) or one from another config (ConfigError) stops the command
// unless `force` is set.
TrainSummary cmd_train(const PipelineConfig& config, const TrainRequest& request);

// Predicts the validation and test splits with every patch model and the baseline,
// writes prediction CSVs, the report JSON, scatter exports and heatmap rasters, and
// returns the evaluation. Missing checkpoints raise ArtifactError listing them; a
// config hash mismatch raises ConfigError.
EvaluationResult cmd_evaluate(const PipelineConfig& config);

// The split used by train and evaluate.
DatasetSplit run_split(const PipelineConfig& config, const std::vector<Subject>& subjects);

}  // namespace patchage
