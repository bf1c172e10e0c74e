#include <gtest/gtest.h>

#include <limits>

#include <nlohmann/json.hpp>

#include "ols_oracle.hpp"
#include "patchage/ensemble.hpp"
#include "patchage/error.hpp"
#include "patchage/report.hpp"

using namespace patchage;
using namespace patchage::testing;

namespace {

GridSpec two_patch_grid() {
  GridSpec g;
  g.source_dims = g.crop_dims = {6, 4, 2};
  g.patch_size = {4, 4, 2};
  g.stride = {2, 1, 1};
  return g;
}

// Patch 0 tracks age closely, patch 1 is noisy, the baseline sits in between.
EvaluationInputs synthetic_inputs(Rng& rng) {
  auto make = [&](const std::string& split, std::size_t n, std::vector<double> noise) {
    PredictionTable t;
    t.split = split;
    t.columns = {0, 1};
    PredictionTable b;
    b.split = split;
    b.columns = {-1};
    for (std::size_t r = 0; r < n; ++r) {
      const double age = rng.uniform(44, 73);
      t.subject_ids.push_back(split + std::to_string(r));
      t.ages.push_back(age);
      t.values.push_back(age + noise[0] * rng.normal());
      t.values.push_back(0.3 * age + 40 + noise[1] * rng.normal());
      b.subject_ids.push_back(t.subject_ids.back());
      b.ages.push_back(age);
      b.values.push_back(0.7 * age + 17 + noise[2] * rng.normal());
    }
    return std::pair{t, b};
  };
  EvaluationInputs in;
  std::tie(in.val_patches, in.val_baseline) = make("val", 30, {1.0, 5.0, 2.0});
  std::tie(in.test_patches, in.test_baseline) = make("test", 12, {1.0, 5.0, 2.0});
  for (int i = 0; i < 160; ++i) in.train_ages.push_back(rng.uniform(44, 73));
  in.grid = two_patch_grid();
  in.eval.threshold_years = std::numeric_limits<double>::infinity();
  return in;
}

}  // namespace

TEST(Report, EightRowsInTableOrder) {
  Rng rng(1);
  const auto in = synthetic_inputs(rng);
  const auto r = evaluate_run(in);
  const std::vector<std::string> labels{kRowBaseline,    kRowNull,      kRowBestPatch,         kRowWorstPatch,
                                        kRowMeanSelected, kRowLinearAll, kRowBaselineCorrected, kRowLinearAllCorrected};
  ASSERT_EQ(r.rows.size(), labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_EQ(r.rows[i].label, labels[i]);
    EXPECT_EQ(r.rows[i].n_subjects, 12u);
  }
  EXPECT_EQ(r.best_patch, 0u);
  EXPECT_EQ(r.worst_patch, 1u);
  EXPECT_THROW(r.row("nonexistent"), ConfigError);
}

TEST(Report, RowsMatchIndependentRecomputation) {
  Rng rng(2);
  const auto in = synthetic_inputs(rng);
  const auto r = evaluate_run(in);
  const auto& truth = in.test_patches.ages;

  double train_mean = 0.0;
  for (double a : in.train_ages) train_mean += a / in.train_ages.size();
  EXPECT_NEAR(r.row(kRowNull).mae_years, mae(std::vector<double>(truth.size(), train_mean), truth), 1e-12);
  EXPECT_NEAR(r.row(kRowBaseline).mae_years, mae(in.test_baseline.column(0), truth), 1e-12);
  EXPECT_NEAR(r.row(kRowBestPatch).mae_years, mae(in.test_patches.column(0), truth), 1e-12);
  EXPECT_NEAR(r.row(kRowWorstPatch).mae_years, mae(in.test_patches.column(1), truth), 1e-12);
  EXPECT_NEAR(r.patches[1].test_mae, mae(in.test_patches.column(1), truth), 1e-12);
  EXPECT_NEAR(r.patches[0].val_mae, mae(in.val_patches.column(0), in.val_patches.ages), 1e-12);

  std::vector<double> mean_pred(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) mean_pred[i] = 0.5 * (in.test_patches.at(i, 0) + in.test_patches.at(i, 1));
  EXPECT_NEAR(r.row(kRowMeanSelected).mae_years, mae(mean_pred, truth), 1e-12);

  // Linear fusion weights from an independent normal-equations solve on the validation table.
  std::vector<double> x;
  for (std::size_t i = 0; i < in.val_patches.rows(); ++i) {
    x.insert(x.end(), {1.0, in.val_patches.at(i, 0), in.val_patches.at(i, 1)});
  }
  const auto w = normal_equations(x, in.val_patches.rows(), 3, in.val_patches.ages);
  std::vector<double> lin(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    lin[i] = w[0] + w[1] * in.test_patches.at(i, 0) + w[2] * in.test_patches.at(i, 1);
  }
  EXPECT_NEAR(r.row(kRowLinearAll).mae_years, mae(lin, truth), 1e-8);

  // Bias model of the baseline fitted on validation, applied on test.
  const auto bias = fit_bias(in.val_baseline.column(0), in.val_baseline.ages);
  EXPECT_NEAR(r.baseline_bias.alpha, bias.alpha, 1e-12);
  const auto corrected = apply_bias(bias, in.test_baseline.column(0), truth);
  EXPECT_NEAR(r.row(kRowBaselineCorrected).mae_years, mae(corrected, truth), 1e-12);
}

TEST(Report, PrimaryFollowsEvalFlags) {
  Rng rng(3);
  auto in = synthetic_inputs(rng);
  in.eval.fusion = FusionMethod::kMean;
  in.eval.threshold_years = 3.0;
  auto r = evaluate_run(in);
  EXPECT_EQ(r.selection.selected_indices, (std::vector<std::size_t>{0}));
  EXPECT_NEAR(r.primary.mae_years, r.row(kRowBestPatch).mae_years, 1e-12);
  EXPECT_FALSE(r.primary_linear.has_value());

  in.eval.fusion = FusionMethod::kLinear;
  in.eval.threshold_years = std::numeric_limits<double>::infinity();
  in.eval.bias_correct = true;
  r = evaluate_run(in);
  EXPECT_NEAR(r.primary.mae_years, r.row(kRowLinearAllCorrected).mae_years, 1e-12);
  ASSERT_TRUE(r.primary_bias.has_value());
  EXPECT_EQ(r.primary_test_pred.size(), 12u);
}

TEST(Report, JsonCarriesHashAndRows) {
  Rng rng(4);
  const auto in = synthetic_inputs(rng);
  const auto r = evaluate_run(in);
  const auto j = report_json(r, in, "feedfacecafebeef");
  EXPECT_EQ(j["config_hash"], "feedfacecafebeef");
  EXPECT_EQ(j["rows"].size(), 8u);
  EXPECT_EQ(j["rows"][1]["label"], kRowNull);
  EXPECT_EQ(j["patches"].size(), 2u);
  EXPECT_EQ(j["fit_sets"]["fusion"], "validation");
  EXPECT_TRUE(j["selection"]["threshold"].is_string() || j["selection"]["threshold"].is_null());
}
