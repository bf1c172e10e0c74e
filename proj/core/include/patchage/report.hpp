#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "patchage/bias.hpp"
#include "patchage/config.hpp"
#include "patchage/ensemble.hpp"
#include "patchage/metrics.hpp"
#include "patchage/prediction_table.hpp"

namespace patchage {

inline constexpr const char* kRowBaseline = "Baseline model (uncorrected)";
inline constexpr const char* kRowNull = "Null model";
inline constexpr const char* kRowBestPatch = "Best single-patch network";
inline constexpr const char* kRowWorstPatch = "Worst single-patch network";
inline constexpr const char* kRowMeanSelected = "Averaging (selected patches)";
inline constexpr const char* kRowLinearAll = "Linear Regression (all patches, uncorrected)";
inline constexpr const char* kRowBaselineCorrected = "Baseline model (corrected)";
inline constexpr const char* kRowLinearAllCorrected = "Linear Regression (all patches, corrected)";

struct EvaluationInputs {
  PredictionTable val_patches;
  PredictionTable test_patches;
  PredictionTable val_baseline;
  PredictionTable test_baseline;
  std::vector<double> train_ages;
  GridSpec grid;
  EvalConfig eval;
};

struct PatchScore {
  std::size_t index = 0;
  Extent3 offset{0, 0, 0};
  double val_mae = 0.0;
  double test_mae = 0.0;
  double test_r2 = 0.0;
  HeatBin bin = HeatBin::kBlue;
};

struct EvaluationResult {
  // The eight rows, in table order. All metrics are on the test split.
  std::vector<MetricsReport> rows;
  NullModel null;
  std::vector<PatchScore> patches;
  std::size_t best_patch = 0;   // lowest test MAE
  std::size_t worst_patch = 0;  // highest test MAE
  PatchSelection selection;     // at eval.threshold_years
  LinearFusionModel linear_all;
  BiasModel baseline_bias;
  BiasModel linear_all_bias;

  // Estimate chosen by eval.fusion / threshold / bias_correct.
  MetricsReport primary;
  std::vector<double> primary_test_pred;
  std::optional<LinearFusionModel> primary_linear;
  std::optional<BiasModel> primary_bias;

  PatchHeatmap heatmap;  // per-patch test MAE

  const MetricsReport& row(const std::string& label) const;
};

// Fusion and bias models are fitted on the validation tables and scored on the test tables.
EvaluationResult evaluate_run(const EvaluationInputs& inputs);

nlohmann::json report_json(const EvaluationResult& result, const EvaluationInputs& inputs,
                           const std::string& config_hash);

}  // namespace patchage
