#include "patchage/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "patchage/error.hpp"

namespace patchage {

const MetricsReport& EvaluationResult::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw ConfigError("report has no row '" + label + "'");
}

namespace {

void check_tables(const EvaluationInputs& in) {
  const std::size_t n = patch_count(in.grid);
  for (const auto* t : {&in.val_patches, &in.test_patches}) {
    t->validate();
    if (t->cols() != n) {
      throw ConfigError("prediction table '" + t->split + "' has " + std::to_string(t->cols()) + " columns, grid has " +
                        std::to_string(n) + " patches");
    }
  }
  for (const auto* t : {&in.val_baseline, &in.test_baseline}) {
    t->validate();
    if (!t->find_column(-1)) throw ConfigError("prediction table '" + t->split + "' lacks the baseline column");
  }
  if (in.val_baseline.subject_ids != in.val_patches.subject_ids ||
      in.test_baseline.subject_ids != in.test_patches.subject_ids) {
    throw ConfigError("baseline and patch tables list different subjects");
  }
}

nlohmann::json metrics_json(const MetricsReport& m) {
  return {{"label", m.label}, {"mae", m.mae_years}, {"r2", m.r2}, {"n", m.n_subjects}};
}

nlohmann::json threshold_json(double t) { return std::isfinite(t) ? nlohmann::json(t) : nlohmann::json("inf"); }

}  // namespace

EvaluationResult evaluate_run(const EvaluationInputs& in) {
  check_tables(in);
  EvaluationResult res;
  const auto& val = in.val_patches;
  const auto& test = in.test_patches;
  const auto& truth = test.ages;

  res.null = null_model(in.train_ages);
  const auto baseline_val = in.val_baseline.column(*in.val_baseline.find_column(-1));
  const auto baseline_test = in.test_baseline.column(*in.test_baseline.find_column(-1));

  const auto refs = enumerate_patches(in.grid);
  std::vector<double> val_mae(refs.size()), test_mae(refs.size());
  for (const auto& ref : refs) {
    const std::size_t c = *val.find_column(static_cast<long>(ref.index));
    const std::size_t tc = *test.find_column(static_cast<long>(ref.index));
    const auto tp = test.column(tc);
    PatchScore s{ref.index, ref.offset, mae(val.column(c), val.ages), mae(tp, truth), r2(tp, truth), HeatBin::kBlue};
    s.bin = heat_bin(s.test_mae);
    val_mae[ref.index] = s.val_mae;
    test_mae[ref.index] = s.test_mae;
    res.patches.push_back(s);
  }
  res.best_patch = static_cast<std::size_t>(std::min_element(test_mae.begin(), test_mae.end()) - test_mae.begin());
  res.worst_patch = static_cast<std::size_t>(std::max_element(test_mae.begin(), test_mae.end()) - test_mae.begin());
  res.heatmap = build_heatmap(in.grid, test_mae);

  res.selection = select_patches(val_mae, in.eval.threshold_years);
  const PatchSelection all = select_patches(val_mae, std::numeric_limits<double>::infinity());
  const LinearFitOptions fit_options{in.eval.ridge};
  res.linear_all = fit_linear_fusion(val, all, fit_options);
  const auto linear_all_val = apply_linear_fusion(res.linear_all, val);
  const auto linear_all_test = apply_linear_fusion(res.linear_all, test);

  res.baseline_bias = fit_bias(baseline_val, in.val_baseline.ages);
  res.linear_all_bias = fit_bias(linear_all_val, val.ages);

  const auto best_col = test.column(*test.find_column(static_cast<long>(res.best_patch)));
  const auto worst_col = test.column(*test.find_column(static_cast<long>(res.worst_patch)));
  res.rows = {
      evaluate(kRowBaseline, baseline_test, truth),
      evaluate(kRowNull, res.null.predict(truth.size()), truth),
      evaluate(kRowBestPatch, best_col, truth),
      evaluate(kRowWorstPatch, worst_col, truth),
      evaluate(kRowMeanSelected, mean_fuse(test, res.selection.selected_indices), truth),
      evaluate(kRowLinearAll, linear_all_test, truth),
      evaluate(kRowBaselineCorrected, apply_bias(res.baseline_bias, baseline_test, truth), truth),
      evaluate(kRowLinearAllCorrected, apply_bias(res.linear_all_bias, linear_all_test, truth), truth),
  };

  std::vector<double> primary_val, primary_test;
  std::string label;
  const bool all_patches = res.selection.selected_indices.size() == refs.size();
  const std::string scope = all_patches ? "all patches" : "selected patches";
  if (in.eval.fusion == FusionMethod::kMean) {
    primary_val = mean_fuse(val, res.selection.selected_indices);
    primary_test = mean_fuse(test, res.selection.selected_indices);
    label = "Averaging (" + scope + ")";
  } else {
    res.primary_linear = fit_linear_fusion(val, res.selection, fit_options);
    primary_val = apply_linear_fusion(*res.primary_linear, val);
    primary_test = apply_linear_fusion(*res.primary_linear, test);
    label = "Linear Regression (" + scope;
  }
  if (in.eval.bias_correct) {
    res.primary_bias = fit_bias(primary_val, val.ages);
    primary_test = apply_bias(*res.primary_bias, primary_test, truth);
  }
  if (in.eval.fusion == FusionMethod::kLinear) label += in.eval.bias_correct ? ", corrected)" : ", uncorrected)";
  else if (in.eval.bias_correct) label += " (corrected)";
  res.primary = evaluate(label, primary_test, truth);
  res.primary_test_pred = std::move(primary_test);
  return res;
}

nlohmann::json report_json(const EvaluationResult& r, const EvaluationInputs& in, const std::string& config_hash) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) rows.push_back(metrics_json(row));
  nlohmann::json patches = nlohmann::json::array();
  for (const auto& p : r.patches) {
    patches.push_back({{"index", p.index},
                       {"offset", p.offset},
                       {"val_mae", p.val_mae},
                       {"test_mae", p.test_mae},
                       {"test_r2", p.test_r2},
                       {"bin", heat_bin_name(p.bin)}});
  }
  nlohmann::json primary{{"metrics", metrics_json(r.primary)},
                         {"fusion", fusion_name(in.eval.fusion)},
                         {"threshold", threshold_json(in.eval.threshold_years)},
                         {"selected_indices", r.selection.selected_indices},
                         {"bias_correct", in.eval.bias_correct}};
  if (r.primary_linear) primary["linear_fusion"] = *r.primary_linear;
  if (r.primary_bias) primary["bias"] = *r.primary_bias;

  return nlohmann::json{
      {"format", "patchage-report"},
      {"version", 1},
      {"config_hash", config_hash},
      {"subjects", {{"train", in.train_ages.size()}, {"val", in.val_patches.rows()}, {"test", in.test_patches.rows()}}},
      {"fit_sets", {{"fusion", "validation"}, {"bias", "validation"}, {"scored_on", "test"}}},
      {"null_model", {{"mean_age", r.null.mean_age}}},
      {"rows", std::move(rows)},
      {"patches", std::move(patches)},
      {"best_patch", r.best_patch},
      {"worst_patch", r.worst_patch},
      {"selection",
       {{"threshold", threshold_json(r.selection.threshold_years)}, {"selected_indices", r.selection.selected_indices}}},
      {"linear_fusion_all", r.linear_all},
      {"bias", {{"baseline", r.baseline_bias}, {"linear_fusion_all", r.linear_all_bias}}},
      {"primary", std::move(primary)},
  };
}

}  // namespace patchage
