#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "patchage/config.hpp"
#include "patchage/error.hpp"
#include "patchage/pipeline.hpp"

namespace {

using patchage::ConfigError;
using patchage::PipelineConfig;

double parse_threshold(const std::string& text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || std::isnan(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("--threshold expects a number or 'inf', got '" + text + "'");
  }
}

void print_report(const patchage::EvaluationResult& r) {
  std::cout << "test-split results (MAE years, R2):\n";
  for (const auto& row : r.rows) {
    std::printf("  %-46s %7.3f  %6.3f\n", row.label.c_str(), row.mae_years, row.r2);
  }
  std::printf("  %-46s %7.3f  %6.3f\n", ("[selected] " + r.primary.label).c_str(), r.primary.mae_years, r.primary.r2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch-based brain-age estimation on synthetic phantoms"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> output_dir;
  app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-o,--output-dir", output_dir,
                 std::string("Run directory (default: $") + patchage::kOutputRootEnv + " or " +
                     patchage::kDefaultOutputDir + ")");

  auto* gen = app.add_subcommand("gen-data", "Generate the phantom dataset");
  std::optional<std::size_t> n_subjects, gen_jobs;
  std::optional<std::uint64_t> master_seed;
  gen->add_option("--n", n_subjects, "Number of subjects (>= 20)");
  gen->add_option("--seed", master_seed, "Master seed for ages, voxels and the split");
  gen->add_option("--jobs", gen_jobs, "Parallel generation jobs");

  auto* train = app.add_subcommand("train", "Train patch networks or the baseline");
  std::optional<std::size_t> patch, epochs, batch_size, train_jobs;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> train_seed;
  bool all_patches = false, baseline = false, force = false;
  auto* patch_opt = train->add_option("--patch", patch, "Train a single patch index");
  auto* all_opt = train->add_flag("--all-patches", all_patches, "Train every patch of the grid");
  auto* base_opt = train->add_flag("--baseline", baseline, "Train the whole-volume baseline");
  patch_opt->excludes(all_opt)->excludes(base_opt);
  all_opt->excludes(base_opt);
  train->add_flag("--force", force, "Retrain even when a checkpoint exists");
  train->add_option("--epochs", epochs, "Epochs per model");
  train->add_option("--batch-size", batch_size, "Mini-batch size");
  train->add_option("--lr", learning_rate, "Adam learning rate");
  train->add_option("--seed", train_seed, "Training seed (initialization and shuffling)");
  train->add_option("--jobs", train_jobs, "Concurrent patch jobs");

  auto* evaluate = app.add_subcommand("evaluate", "Predict, fuse, correct and write the report");
  std::optional<std::string> fusion, threshold;
  std::optional<double> ridge;
  bool bias_correct = false;
  evaluate->add_option("--fusion", fusion, "mean or linear")->check(CLI::IsMember({"mean", "linear"}));
  evaluate->add_option("--threshold", threshold, "Validation-MAE threshold in years, or 'inf' for all patches");
  evaluate->add_flag("--bias-correct", bias_correct, "Apply bias correction to the selected estimate");
  evaluate->add_option("--ridge", ridge, "Ridge penalty for linear fusion (0 = ordinary least squares)");

  auto* show = app.add_subcommand("config", "Print the resolved config and its hashes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(patchage::ExitCode::kConfig);
  }

  try {
    // Precedence: flags > config file > environment > built-in defaults.
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : patchage::load_config(config_path);
    if (output_dir) config.output_dir = *output_dir;
    if (n_subjects) config.n_subjects = *n_subjects;
    if (master_seed) config.master_seed = *master_seed;
    if (gen_jobs) config.gen_jobs = *gen_jobs;
    if (epochs) config.train.epochs = *epochs;
    if (batch_size) config.train.batch_size = *batch_size;
    if (learning_rate) config.train.learning_rate = *learning_rate;
    if (train_seed) config.train.seed = *train_seed;
    if (train_jobs) config.train.parallel_patch_jobs = *train_jobs;
    if (fusion) config.eval.fusion = patchage::parse_fusion(*fusion);
    if (threshold) config.eval.threshold_years = parse_threshold(*threshold);
    if (bias_correct) config.eval.bias_correct = true;
    if (ridge) config.eval.ridge = *ridge;
    config.validate();
    const auto root = patchage::resolve_output_dir(config);

    if (*gen) {
      const auto subjects = patchage::cmd_gen_data(config);
      std::cout << "wrote " << subjects.size() << " subjects to " << (root / "data").string() << "\n";
    } else if (*train) {
      patchage::TrainRequest request;
      if (patch) {
        request.kind = patchage::TrainRequest::Kind::kPatch;
        request.patch = *patch;
      } else if (baseline) {
        request.kind = patchage::TrainRequest::Kind::kBaseline;
      } else if (all_patches) {
        request.kind = patchage::TrainRequest::Kind::kAllPatches;
      } else {
        throw ConfigError("train: choose one of --patch <i>, --all-patches, --baseline");
      }
      request.force = force;
      request.progress = [](const std::string& line) { std::cerr << line << std::endl; };
      const auto summary = patchage::cmd_train(config, request);
      std::cout << "trained " << summary.trained.size() << ", skipped " << summary.skipped.size() << "\n";
    } else if (*evaluate) {
      const auto result = patchage::cmd_evaluate(config);
      print_report(result);
      std::cout << "report: " << (root / "report" / "report.json").string() << "\n";
    } else if (*show) {
      nlohmann::json j = config;
      j["resolved_output_dir"] = root.string();
      j["data_hash"] = patchage::data_hash(config);
      j["config_hash"] = patchage::config_hash(config);
      std::cout << j.dump(2) << "\n";
    }
    return 0;
  } catch (const patchage::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(patchage::ExitCode::kUnexpected);
  }
}
