#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "patchage/model.hpp"
#include "patchage/patch_grid.hpp"
#include "patchage/phantom.hpp"
#include "patchage/trainer.hpp"

namespace patchage {

enum class FusionMethod { kMean, kLinear };

FusionMethod parse_fusion(const std::string& name);
const char* fusion_name(FusionMethod method);

struct EvalConfig {
  FusionMethod fusion = FusionMethod::kLinear;
  double threshold_years = 3.0;  // +inf selects every patch
  bool bias_correct = false;
  double ridge = 0.0;

  bool operator==(const EvalConfig&) const = default;
};

struct PipelineConfig {
  PhantomParams phantom;
  std::size_t n_subjects = 200;
  std::uint64_t master_seed = 7;
  SplitRatios split;
  GridSpec grid = GridSpec::desk();
  ResNet3DConfig model;
  TrainConfig train;
  EvalConfig eval;
  // Empty means "not set"; see resolve_output_dir.
  std::string output_dir;
  std::size_t gen_jobs = 1;

  // Cross-field checks (grid source extent equals phantom extent, and so on).
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);
void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);
void to_json(nlohmann::json& j, const SplitRatios& s);
void from_json(const nlohmann::json& j, SplitRatios& s);
void to_json(nlohmann::json& j, const EvalConfig& e);
void from_json(const nlohmann::json& j, EvalConfig& e);
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

// Reads a JSON config file; keys left out keep their defaults, unknown keys are errors.
PipelineConfig load_config(const std::filesystem::path& path);

inline constexpr const char* kOutputRootEnv = "PATCHAGE_OUTPUT_ROOT";
inline constexpr const char* kDefaultOutputDir = "patchage_run";

// The config's output_dir if set, else $PATCHAGE_OUTPUT_ROOT if set, else "patchage_run".
std::filesystem::path resolve_output_dir(const PipelineConfig& config);

// Hash of everything that determines the generated dataset.
std::string data_hash(const PipelineConfig& config);
// Hash of everything that determines trained models and their predictions: the dataset,
// split, grid, model and training settings. Job counts, output location and
// evaluation-only settings are excluded.
std::string config_hash(const PipelineConfig& config);

}  // namespace patchage
