#include "patchage/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "detail/json_util.hpp"
#include "patchage/error.hpp"

namespace patchage {

PatchSelection select_patches(std::span<const double> val_mae, double threshold_years) {
  if (std::isnan(threshold_years)) throw ConfigError("select_patches: threshold is NaN");
  PatchSelection sel;
  sel.threshold_years = threshold_years;
  sel.val_mae.assign(val_mae.begin(), val_mae.end());
  for (std::size_t i = 0; i < val_mae.size(); ++i) {
    if (std::isnan(val_mae[i])) throw ConfigError("select_patches: validation MAE of patch " + std::to_string(i) + " is NaN");
    if (val_mae[i] < threshold_years) sel.selected_indices.push_back(i);
  }
  if (sel.selected_indices.empty()) {
    const double best = val_mae.empty() ? std::numeric_limits<double>::quiet_NaN()
                                        : *std::min_element(val_mae.begin(), val_mae.end());
    throw ConfigError("select_patches: no patch has validation MAE below " + std::to_string(threshold_years) +
                      " years (best is " + std::to_string(best) + "); use a larger threshold");
  }
  return sel;
}

std::vector<double> mean_fuse(const PredictionTable& table, std::span<const std::size_t> patches) {
  if (patches.empty()) throw ConfigError("mean_fuse: empty patch subset");
  const auto cols = table.require_columns(patches);
  std::vector<double> out(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c : cols) s += table.at(r, c);
    out[r] = s / static_cast<double>(cols.size());
  }
  return out;
}

void to_json(nlohmann::json& j, const LinearFusionModel& m) {
  j = nlohmann::json{{"selected_indices", m.selected_indices},
                     {"intercept", m.intercept},
                     {"weights", m.weights},
                     {"ridge", m.ridge}};
  // JSON has no infinity; the all-patches preset is written as null.
  if (std::isfinite(m.threshold_years)) {
    j["threshold"] = m.threshold_years;
  } else {
    j["threshold"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, LinearFusionModel& m) {
  detail::JsonFields f(j, "linear_fusion");
  f.get("selected_indices", m.selected_indices);
  f.get("intercept", m.intercept);
  f.get("weights", m.weights);
  f.get("ridge", m.ridge);
  nlohmann::json threshold;
  f.get("threshold", threshold);
  m.threshold_years = threshold.is_number() ? threshold.get<double>() : std::numeric_limits<double>::infinity();
  f.finish();
  if (m.weights.size() != m.selected_indices.size()) {
    throw ConfigError("linear_fusion: weight count differs from selected patch count");
  }
}

std::vector<double> solve_least_squares(std::span<const double> design, std::size_t n, std::size_t p,
                                        std::span<const double> y, const std::vector<std::string>& names,
                                        double ridge, const std::vector<bool>& penalized) {
  if (design.size() != n * p || y.size() != n) throw ShapeError("least squares: design/target size mismatch");
  if (p == 0) throw ConfigError("least squares: no columns");
  if (names.size() != p) throw ConfigError("least squares: need one name per column");
  if (ridge < 0.0 || !std::isfinite(ridge)) throw ConfigError("least squares: ridge must be >= 0");
  if (!penalized.empty() && penalized.size() != p) throw ConfigError("least squares: penalized flags size mismatch");

  std::size_t extra = 0;
  if (ridge > 0.0) {
    for (std::size_t k = 0; k < p; ++k) extra += penalized.empty() || penalized[k] ? 1 : 0;
  }
  const std::size_t m = n + extra;
  if (m < p) {
    throw ConfigError("least squares: " + std::to_string(n) + " rows cannot determine " + std::to_string(p) +
                      " coefficients");
  }
  std::vector<double> a(m * p, 0.0);
  std::vector<double> b(m, 0.0);
  std::copy(design.begin(), design.end(), a.begin());
  std::copy(y.begin(), y.end(), b.begin());
  for (std::size_t k = 0, row = n; k < p && ridge > 0.0; ++k) {
    if (penalized.empty() || penalized[k]) a[row++ * p + k] = std::sqrt(ridge);
  }
  for (double v : a) {
    if (!std::isfinite(v)) throw NumericError("least squares: non-finite design entry");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw NumericError("least squares: non-finite target entry");
  }

  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * p + c]; };
  constexpr double kRankTol = 1e-10;
  std::vector<double> v(m);
  for (std::size_t j = 0; j < p; ++j) {
    double full = 0.0;
    for (std::size_t r = 0; r < m; ++r) full += at(r, j) * at(r, j);
    full = std::sqrt(full);
    double alpha = 0.0;
    for (std::size_t r = j; r < m; ++r) alpha += at(r, j) * at(r, j);
    alpha = std::sqrt(alpha);

    if (full == 0.0 || alpha <= kRankTol * full) {
      // Column j lies in the span of columns 0..j-1: solve R[0:j,0:j] c = R[0:j,j].
      std::vector<double> c(j);
      for (std::size_t k = j; k-- > 0;) {
        double s = at(k, j);
        for (std::size_t q = k + 1; q < j; ++q) s -= at(k, q) * c[q];
        c[k] = s / at(k, k);
      }
      double cmax = 0.0;
      for (double x : c) cmax = std::max(cmax, std::abs(x));
      std::string with;
      for (std::size_t k = 0; k < j; ++k) {
        if (std::abs(c[k]) > 1e-8 * cmax) with += (with.empty() ? "'" : ", '") + names[k] + "'";
      }
      throw NumericError("least squares: rank-deficient design; column '" + names[j] + "' is " +
                         (full == 0.0 || with.empty() ? std::string("identically zero")
                                                      : "collinear with " + with));
    }

    const double sign = at(j, j) >= 0.0 ? 1.0 : -1.0;
    double vnorm2 = 0.0;
    for (std::size_t r = j; r < m; ++r) {
      v[r] = at(r, j);
      if (r == j) v[r] += sign * alpha;
      vnorm2 += v[r] * v[r];
    }
    for (std::size_t c = j; c < p; ++c) {
      double dot = 0.0;
      for (std::size_t r = j; r < m; ++r) dot += v[r] * at(r, c);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t r = j; r < m; ++r) at(r, c) -= f * v[r];
    }
    double dot = 0.0;
    for (std::size_t r = j; r < m; ++r) dot += v[r] * b[r];
    const double f = 2.0 * dot / vnorm2;
    for (std::size_t r = j; r < m; ++r) b[r] -= f * v[r];
  }

  std::vector<double> w(p);
  for (std::size_t k = p; k-- > 0;) {
    double s = b[k];
    for (std::size_t q = k + 1; q < p; ++q) s -= at(k, q) * w[q];
    w[k] = s / at(k, k);
  }
  return w;
}

LinearFusionModel fit_linear_fusion(const PredictionTable& val_table, const PatchSelection& selection,
                                    const LinearFitOptions& options) {
  const auto& sel = selection.selected_indices;
  if (sel.empty()) throw ConfigError("fit_linear_fusion: empty selection");
  const auto cols = val_table.require_columns(sel);
  const std::size_t n = val_table.rows();
  const std::size_t p = sel.size() + 1;
  if (options.ridge == 0.0 && n <= p) {
    throw ConfigError("fit_linear_fusion: " + std::to_string(n) + " validation subjects cannot overdetermine " +
                      std::to_string(p) + " coefficients (need more than |P| + 1 rows, or an explicit ridge)");
  }
  std::vector<double> design(n * p);
  std::vector<std::string> names{"intercept"};
  for (std::size_t idx : sel) names.push_back("y_" + std::to_string(idx));
  for (std::size_t r = 0; r < n; ++r) {
    design[r * p] = 1.0;
    for (std::size_t k = 0; k < cols.size(); ++k) design[r * p + k + 1] = val_table.at(r, cols[k]);
  }
  std::vector<bool> penalized(p, true);
  penalized[0] = false;
  const auto w = solve_least_squares(design, n, p, val_table.ages, names, options.ridge, penalized);

  LinearFusionModel model;
  model.selected_indices = sel;
  model.intercept = w[0];
  model.weights.assign(w.begin() + 1, w.end());
  model.threshold_years = selection.threshold_years;
  model.ridge = options.ridge;
  return model;
}

std::vector<double> apply_linear_fusion(const LinearFusionModel& model, const PredictionTable& table) {
  if (model.weights.size() != model.selected_indices.size()) {
    throw ConfigError("apply_linear_fusion: weight count differs from selected patch count");
  }
  const auto cols = table.require_columns(model.selected_indices);
  std::vector<double> out(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    double s = model.intercept;
    for (std::size_t k = 0; k < cols.size(); ++k) s += model.weights[k] * table.at(r, cols[k]);
    out[r] = s;
  }
  return out;
}

}  // namespace patchage
