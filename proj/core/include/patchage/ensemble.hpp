#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "patchage/prediction_table.hpp"

namespace patchage {

struct PatchSelection {
  double threshold_years = 0.0;
  std::vector<std::size_t> selected_indices;
  std::vector<double> val_mae;  // one entry per patch
};

// Keeps patches with val_mae < threshold (strict). +inf selects every patch. Throws
// ConfigError when nothing is selected.
PatchSelection select_patches(std::span<const double> val_mae, double threshold_years);

// Per-subject arithmetic mean of the columns labelled by `patches`.
std::vector<double> mean_fuse(const PredictionTable& table, std::span<const std::size_t> patches);

struct LinearFusionModel {
  std::vector<std::size_t> selected_indices;
  double intercept = 0.0;
  std::vector<double> weights;  // aligned with selected_indices
  double threshold_years = 0.0;
  double ridge = 0.0;

  bool operator==(const LinearFusionModel&) const = default;
};

void to_json(nlohmann::json& j, const LinearFusionModel& m);
void from_json(const nlohmann::json& j, LinearFusionModel& m);

// Least squares of `y` on the columns of the row-major n x p `design`, by Householder
// QR. Throws NumericError naming collinear columns (by `names`) when the design is rank
// deficient. A positive `ridge` adds sqrt(ridge) * I rows for the columns flagged in
// `penalized` (all columns when empty).
std::vector<double> solve_least_squares(std::span<const double> design, std::size_t n, std::size_t p,
                                        std::span<const double> y, const std::vector<std::string>& names,
                                        double ridge = 0.0, const std::vector<bool>& penalized = {});

struct LinearFitOptions {
  // Explicit opt-in shrinkage for tables with too few rows or collinear columns. The
  // intercept is never penalized.
  double ridge = 0.0;
};

// Ordinary least squares of age on the selected columns plus an intercept. Requires
// more rows than |selection| + 1 unless ridge > 0.
LinearFusionModel fit_linear_fusion(const PredictionTable& val_table, const PatchSelection& selection,
                                    const LinearFitOptions& options = {});

std::vector<double> apply_linear_fusion(const LinearFusionModel& model, const PredictionTable& table);

}  // namespace patchage
