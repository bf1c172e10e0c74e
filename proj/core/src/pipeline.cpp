#include "patchage/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

#include "detail/file_io.hpp"
#include "patchage/error.hpp"

namespace patchage {

namespace {

std::string two_digits(std::size_t index) { return (index < 10 ? "0" : "") + std::to_string(index); }

bool stem_exists(const std::filesystem::path& stem) {
  auto pga = stem, sidecar = stem;
  pga += ".pga";
  sidecar += ".json";
  return std::filesystem::exists(pga) || std::filesystem::exists(sidecar);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_line(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw ArtifactError(path.string() + ": cannot open for append");
  out << j.dump() << '\n';
}

// Sink writing one JSON object per line to a fresh file.
TrainLogSink file_sink(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  auto out = std::make_shared<std::ofstream>(path, std::ios::trunc);
  if (!*out) throw ArtifactError(path.string() + ": cannot open for writing");
  return [out](const nlohmann::json& j) {
    *out << j.dump() << '\n';
    if (j.value("event", "") == "epoch") out->flush();
  };
}

std::vector<Subject> load_dataset(const PipelineConfig& config, const RunPaths& paths) {
  if (!std::filesystem::exists(paths.manifest())) {
    throw ArtifactError(paths.manifest().string() + " not found; run gen-data first");
  }
  const std::string expected = data_hash(config);
  const std::string found = read_manifest_hash(paths.manifest());
  if (found != expected) {
    throw ConfigError(paths.manifest().string() + " was generated under data hash '" + found + "', current config is '" +
                      expected + "'; rerun gen-data");
  }
  auto subjects = read_manifest(paths.manifest());
  if (subjects.size() != config.n_subjects) {
    throw ConfigError("manifest lists " + std::to_string(subjects.size()) + " subjects, config expects " +
                      std::to_string(config.n_subjects));
  }
  return subjects;
}

std::string label_name(long label) { return label < 0 ? "baseline" : "patch " + std::to_string(label); }

// True when a valid checkpoint from this config exists and may be reused.
bool reusable_checkpoint(const std::filesystem::path& stem, long label, const std::string& hash, bool force) {
  if (force || !stem_exists(stem)) return false;
  PatchModel model = [&] {
    try {
      return load_model(stem);
    } catch (const Error& e) {
      throw ArtifactError(std::string(e.what()) + "; rerun with --force to retrain " + label_name(label));
    }
  }();
  if (model.config_hash != hash) {
    throw ConfigError(stem.string() + " was trained under config '" + model.config_hash + "', current is '" + hash +
                      "'; rerun with --force to retrain " + label_name(label));
  }
  if (model.patch_index != label) throw ArtifactError(stem.string() + ": checkpoint is for " + label_name(model.patch_index));
  return true;
}

}  // namespace

std::filesystem::path RunPaths::patch_model(std::size_t index) const {
  return models_dir() / ("patch_" + two_digits(index));
}
std::filesystem::path RunPaths::baseline_model() const { return models_dir() / "baseline"; }
std::filesystem::path RunPaths::patch_log(std::size_t index) const {
  return logs_dir() / ("train_patch_" + two_digits(index) + ".jsonl");
}
std::filesystem::path RunPaths::baseline_log() const { return logs_dir() / "train_baseline.jsonl"; }

DatasetSplit run_split(const PipelineConfig& config, const std::vector<Subject>& subjects) {
  return split_dataset(subjects, config.split, config.master_seed);
}

std::vector<Subject> cmd_gen_data(const PipelineConfig& config) {
  config.validate();
  const RunPaths paths{resolve_output_dir(config)};
  auto subjects = generate_dataset(config.n_subjects, config.phantom, config.master_seed, paths.data_dir(),
                                   config.gen_jobs, data_hash(config));
  detail::write_file_atomic(paths.root / "config.json", nlohmann::json(config).dump(2) + "\n");
  return subjects;
}

TrainSummary cmd_train(const PipelineConfig& config, const TrainRequest& request) {
  config.validate();
  const RunPaths paths{resolve_output_dir(config)};
  const auto subjects = load_dataset(config, paths);
  const DatasetSplit split = run_split(config, subjects);
  const SplitSubjects data = resolve_split(subjects, split);
  const std::string hash = config_hash(config);
  detail::write_file_atomic(paths.split_file(), nlohmann::json{{"config_hash", hash},
                                                               {"train", split.train_ids},
                                                               {"val", split.val_ids},
                                                               {"test", split.test_ids}}
                                                        .dump(2) + "\n");
  const FileScanSource source(paths.data_dir(), config.grid);
  const auto refs = enumerate_patches(config.grid);

  TrainSummary summary;
  auto finish = [&](PatchModel&& model) {
    model.config_hash = hash;
    const long label = model.patch_index;
    save_model(label < 0 ? paths.baseline_model() : paths.patch_model(static_cast<std::size_t>(label)), model);
    append_line(paths.timings_log(), {{"model", label_name(label)},
                                      {"finished_at", utc_now()},
                                      {"epochs", model.metadata.epochs_run},
                                      {"final_val_mae", model.metadata.final_val_mae}});
    summary.trained.push_back(label);
    if (request.progress) {
      request.progress("trained " + label_name(label) + ": final val MAE " +
                       std::to_string(model.metadata.final_val_mae) + " years");
    }
  };
  auto skip = [&](long label) {
    summary.skipped.push_back(label);
    if (request.progress) request.progress("skipped " + label_name(label) + ": valid checkpoint present");
  };

  if (request.kind == TrainRequest::Kind::kBaseline) {
    if (reusable_checkpoint(paths.baseline_model(), PatchModel::kBaselineIndex, hash, request.force)) {
      skip(PatchModel::kBaselineIndex);
      return summary;
    }
    finish(train_baseline(data, source, config.grid, config.train, config.model, file_sink(paths.baseline_log())));
    return summary;
  }

  std::vector<PatchRef> todo;
  if (request.kind == TrainRequest::Kind::kPatch) {
    if (request.patch >= refs.size()) {
      throw ConfigError("--patch " + std::to_string(request.patch) + " out of range; the grid has " +
                        std::to_string(refs.size()) + " patches");
    }
    todo.push_back(refs[request.patch]);
  } else {
    todo = refs;
  }
  std::vector<PatchRef> pending;
  for (const auto& ref : todo) {
    if (reusable_checkpoint(paths.patch_model(ref.index), static_cast<long>(ref.index), hash, request.force)) {
      skip(static_cast<long>(ref.index));
    } else {
      pending.push_back(ref);
    }
  }
  train_patch_models(pending, data, source, config.grid, config.train, config.model, finish,
                     [&](const PatchRef& ref) { return file_sink(paths.patch_log(ref.index)); });
  return summary;
}

EvaluationResult cmd_evaluate(const PipelineConfig& config) {
  config.validate();
  const RunPaths paths{resolve_output_dir(config)};
  const auto subjects = load_dataset(config, paths);
  const SplitSubjects data = resolve_split(subjects, run_split(config, subjects));
  const std::string hash = config_hash(config);
  const std::size_t n_patches = patch_count(config.grid);

  std::vector<PatchModel> models;
  std::string missing, stale;
  auto take = [&](const std::filesystem::path& stem, long label) {
    if (!stem_exists(stem)) {
      missing += (missing.empty() ? "" : ", ") + (label < 0 ? std::string("baseline") : std::to_string(label));
      return;
    }
    PatchModel model = load_model(stem);
    if (model.config_hash != hash) {
      stale += (stale.empty() ? "" : ", ") + label_name(label) + " (" + model.config_hash + ")";
    }
    if (model.patch_index != label) throw ArtifactError(stem.string() + ": checkpoint is for " + label_name(model.patch_index));
    models.push_back(std::move(model));
  };
  for (std::size_t i = 0; i < n_patches; ++i) take(paths.patch_model(i), static_cast<long>(i));
  take(paths.baseline_model(), PatchModel::kBaselineIndex);
  if (!missing.empty()) throw ArtifactError("missing checkpoints for patches: " + missing + "; run train first");
  if (!stale.empty()) throw ConfigError("checkpoints from a different config (current " + hash + "): " + stale);

  std::vector<PatchModel*> ptrs;
  for (auto& m : models) ptrs.push_back(&m);
  std::vector<long> patch_cols(n_patches);
  for (std::size_t i = 0; i < n_patches; ++i) patch_cols[i] = static_cast<long>(i);
  const std::vector<long> baseline_col{PatchModel::kBaselineIndex};
  const FileScanSource source(paths.data_dir(), config.grid);

  EvaluationInputs in;
  in.val_patches = predict_split(ptrs, patch_cols, data.val, "val", source, config.grid);
  in.test_patches = predict_split(ptrs, patch_cols, data.test, "test", source, config.grid);
  in.val_baseline = predict_split(ptrs, baseline_col, data.val, "val", source, config.grid);
  in.test_baseline = predict_split(ptrs, baseline_col, data.test, "test", source, config.grid);
  for (const auto& s : data.train) in.train_ages.push_back(s.age_years);
  in.grid = config.grid;
  in.eval = config.eval;

  const auto pred_dir = paths.predictions_dir();
  write_prediction_csv(pred_dir / "val_patches.csv", in.val_patches, hash);
  write_prediction_csv(pred_dir / "test_patches.csv", in.test_patches, hash);
  write_prediction_csv(pred_dir / "val_baseline.csv", in.val_baseline, hash);
  write_prediction_csv(pred_dir / "test_baseline.csv", in.test_baseline, hash);

  EvaluationResult result = evaluate_run(in);
  nlohmann::json report = report_json(result, in, hash);
  report["config"] = config;
  report["config"].erase("output_dir");
  report["config"].erase("gen_jobs");
  report["config"]["train"].erase("parallel_patch_jobs");

  const auto out = paths.report_dir();
  detail::write_file_atomic(out / "report.json", report.dump(2) + "\n");
  export_scatter(out / "scatter.csv", out / "scatter.svg", result.primary_test_pred, in.test_patches.ages,
                 result.primary.label);
  const Volume overlay = heatmap_overlay(result.heatmap);
  write_volume(out / "heatmap_overlay.pgv", overlay);
  const Volume background = source.load(data.test.front());
  write_ppm(out / "heatmap_transverse.ppm", render_overlay_slice(overlay, SliceAxis::kTransverse, &background));
  write_ppm(out / "heatmap_sagittal.ppm", render_overlay_slice(overlay, SliceAxis::kSagittal, &background));
  return result;
}

}  // namespace patchage
