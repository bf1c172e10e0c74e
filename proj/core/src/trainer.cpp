#include "patchage/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "detail/json_util.hpp"
#include "patchage/adam.hpp"
#include "patchage/error.hpp"
#include "patchage/random.hpp"

namespace patchage {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be positive and finite");
  }
  if (parallel_patch_jobs < 1) throw ConfigError("train: parallel_patch_jobs must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"loss", "mse"},
                     {"seed", c.seed},
                     {"parallel_patch_jobs", c.parallel_patch_jobs}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::JsonFields f(j, "train");
  f.get("batch_size", c.batch_size);
  f.get("epochs", c.epochs);
  f.get("learning_rate", c.learning_rate);
  std::string loss = "mse";
  f.get("loss", loss);
  if (loss != "mse") throw ConfigError("train.loss: only 'mse' is supported");
  f.get("seed", c.seed);
  f.get("parallel_patch_jobs", c.parallel_patch_jobs);
  f.finish();
}

FileScanSource::FileScanSource(std::filesystem::path base_dir, GridSpec grid)
    : base_dir_(std::move(base_dir)), grid_(grid) {
  grid_.validate();
}

Volume FileScanSource::load(const Subject& subject) const {
  const auto path = subject.volume_path.is_absolute() ? subject.volume_path : base_dir_ / subject.volume_path;
  const Volume raw = read_volume(path);
  if (raw.dims() != grid_.source_dims) {
    throw ConfigError(path.string() + ": volume extent " + extent_str(raw.dims()) + " differs from grid source " +
                      extent_str(grid_.source_dims));
  }
  return center_crop(normalize_volume(raw), grid_.crop_dims);
}

SplitSubjects resolve_split(const std::vector<Subject>& subjects, const DatasetSplit& split) {
  std::map<std::string, const Subject*> by_id;
  for (const auto& s : subjects) by_id[s.id] = &s;
  auto pick = [&](const std::vector<std::string>& ids) {
    std::vector<Subject> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ConfigError("split references unknown subject '" + id + "'");
      out.push_back(*it->second);
    }
    return out;
  };
  return {pick(split.train_ids), pick(split.val_ids), pick(split.test_ids)};
}

namespace {

constexpr std::uint64_t kPatchStream = 1;
constexpr std::uint64_t kBaselineStream = 2;
constexpr std::uint64_t kInitTag = 0x1417;

// Model inputs for one location, extracted once before training starts.
struct Samples {
  std::vector<std::string> ids;
  std::vector<double> ages;
  std::vector<std::vector<double>> voxels;
};

using Extractor = std::function<std::vector<double>(const Volume&)>;

Samples gather(const std::vector<Subject>& subjects, const ScanSource& source, const Extractor& extract) {
  Samples s;
  for (const auto& subject : subjects) {
    s.ids.push_back(subject.id);
    s.ages.push_back(subject.age_years);
    s.voxels.push_back(extract(source.load(subject)));
  }
  return s;
}

Shape input_shape(std::size_t n, const Extent3& dims) { return {n, 1, dims[2], dims[1], dims[0]}; }

Tensor make_batch(const Samples& s, std::span<const std::size_t> rows, const Extent3& dims) {
  const std::size_t per = dims[0] * dims[1] * dims[2];
  std::vector<double> data(rows.size() * per);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(s.voxels[rows[i]].begin(), s.voxels[rows[i]].end(), data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return Tensor(input_shape(rows.size(), dims), std::move(data));
}

double evaluate_mae(PatchModel& model, const Samples& s, const Extent3& dims, std::size_t batch_size) {
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < s.ids.size(); start += batch_size) {
    rows.clear();
    for (std::size_t r = start; r < std::min(start + batch_size, s.ids.size()); ++r) rows.push_back(r);
    const auto ages = model.predict_ages(make_batch(s, rows, dims));
    for (std::size_t i = 0; i < rows.size(); ++i) total += std::abs(ages[i] - s.ages[rows[i]]);
  }
  return total / static_cast<double>(s.ids.size());
}

PatchModel train_on(long label, const std::string& name, std::uint64_t stream, const Extent3& dims,
                    const Extractor& extract, const SplitSubjects& data, const ScanSource& source,
                    const TrainConfig& tcfg, const ResNet3DConfig& mcfg, const TrainLogSink& log) {
  tcfg.validate();
  if (data.train.empty()) throw ConfigError(name + ": training split is empty");
  if (data.val.empty()) throw ConfigError(name + ": validation split is empty");

  ResNet3DConfig config = mcfg;
  config.input_dims = dims;
  config.seed = derive_seed({mcfg.seed, tcfg.seed, stream, static_cast<std::uint64_t>(label + 1), kInitTag});
  config.validate();
  PatchModel model = build_model(config, label);

  // Extraction happens here, before the loop; training never sees other voxels.
  const Samples train = gather(data.train, source, extract);
  const Samples val = gather(data.val, source, extract);

  double mean = 0.0;
  for (double a : train.ages) mean += a;
  mean /= static_cast<double>(train.ages.size());
  double var = 0.0;
  for (double a : train.ages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(train.ages.size());
  model.metadata.target_mean = mean;
  model.metadata.target_scale = var > 0.0 ? std::sqrt(var) : 1.0;

  Adam adam(AdamOptions{.learning_rate = tcfg.learning_rate});
  auto& params = model.network.parameters();
  std::vector<std::size_t> order(train.ids.size());
  std::vector<std::size_t> rows;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed({tcfg.seed, stream, static_cast<std::uint64_t>(label + 1), epoch}));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(start + tcfg.batch_size, order.size());
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<double> targets(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        targets[i] = (train.ages[rows[i]] - mean) / model.metadata.target_scale;
      }
      const Tensor batch = make_batch(train, rows, dims);
      const Tensor target({rows.size(), 1}, std::move(targets));

      Tape tape;
      double loss_value;
      {
        TapeScope scope(tape);
        const Tensor pred = model.network.forward(batch, ops::NormMode::kTrain);
        const Tensor loss = ops::mse_loss(pred, target);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw NumericError(name + ": non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step + 1));
        }
        for (auto& p : params) p.tensor.zero_grad();
        tape.backward(loss);
      }
      ++step;
      try {
        adam.step(params);
      } catch (const NumericError& e) {
        throw NumericError(name + ": epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " +
                           e.what());
      }
      loss_sum += loss_value;
      ++batches;
      if (log) {
        nlohmann::json ids = nlohmann::json::array();
        for (std::size_t r : rows) ids.push_back(train.ids[r]);
        log({{"event", "batch"}, {"model", name}, {"epoch", epoch}, {"step", step}, {"loss", loss_value},
             {"subjects", std::move(ids)}});
      }
    }

    const double val_mae = evaluate_mae(model, val, dims, tcfg.batch_size);
    model.metadata.val_mae_curve.push_back(val_mae);
    if (log) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      log({{"event", "epoch"}, {"model", name}, {"epoch", epoch}, {"train_loss", loss_sum / batches},
           {"val_mae", val_mae}, {"seconds", elapsed.count()}});
    }
  }
  model.metadata.epochs_run = tcfg.epochs;
  model.metadata.optimizer_steps = step;
  model.metadata.final_val_mae = model.metadata.val_mae_curve.back();
  return model;
}

Extractor patch_extractor(const PatchRef& patch, const GridSpec& grid) {
  return [patch, grid](const Volume& cropped) {
    std::vector<double> out(grid.patch_size[0] * grid.patch_size[1] * grid.patch_size[2]);
    extract_patch_into(cropped, patch, grid, out);
    return out;
  };
}

Extractor whole_extractor(const GridSpec& grid) {
  return [grid](const Volume& cropped) {
    if (cropped.dims() != grid.crop_dims) {
      throw ShapeError("baseline: scan extent " + extent_str(cropped.dims()) + " differs from crop " +
                       extent_str(grid.crop_dims));
    }
    return std::vector<double>(cropped.values().begin(), cropped.values().end());
  };
}

std::string patch_name(std::size_t index) { return "patch_" + std::to_string(index); }

}  // namespace

PatchModel train_patch_model(const PatchRef& patch, const SplitSubjects& data, const ScanSource& source,
                             const GridSpec& grid, const TrainConfig& tcfg, const ResNet3DConfig& mcfg,
                             const TrainLogSink& log) {
  grid.validate();
  if (patch.index >= patch_count(grid)) {
    throw ConfigError("patch index " + std::to_string(patch.index) + " out of range (grid has " +
                      std::to_string(patch_count(grid)) + " patches)");
  }
  return train_on(static_cast<long>(patch.index), patch_name(patch.index), kPatchStream, grid.patch_size,
                  patch_extractor(patch, grid), data, source, tcfg, mcfg, log);
}

PatchModel train_baseline(const SplitSubjects& data, const ScanSource& source, const GridSpec& grid,
                          const TrainConfig& tcfg, const ResNet3DConfig& mcfg, const TrainLogSink& log) {
  grid.validate();
  return train_on(PatchModel::kBaselineIndex, "baseline", kBaselineStream, grid.crop_dims, whole_extractor(grid),
                  data, source, tcfg, mcfg, log);
}

void train_patch_models(std::span<const PatchRef> patches, const SplitSubjects& data, const ScanSource& source,
                        const GridSpec& grid, const TrainConfig& tcfg, const ResNet3DConfig& mcfg,
                        const std::function<void(PatchModel&&)>& on_done,
                        const std::function<TrainLogSink(const PatchRef&)>& log_for) {
  tcfg.validate();
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex done_mutex;
  std::vector<std::exception_ptr> errors(patches.size());

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= patches.size()) return;
      try {
        const TrainLogSink log = log_for ? log_for(patches[i]) : TrainLogSink{};
        PatchModel model = train_patch_model(patches[i], data, source, grid, tcfg, mcfg, log);
        std::lock_guard lock(done_mutex);
        on_done(std::move(model));
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };

  const std::size_t jobs = std::min(tcfg.parallel_patch_jobs, patches.size());
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

PredictionTable predict_split(std::span<PatchModel* const> models, std::span<const long> columns,
                              const std::vector<Subject>& subjects, const std::string& split_name,
                              const ScanSource& source, const GridSpec& grid) {
  grid.validate();
  std::vector<PatchModel*> ordered;
  std::string missing;
  for (long label : columns) {
    PatchModel* found = nullptr;
    for (PatchModel* m : models) {
      if (m && m->patch_index == label) found = m;
    }
    if (!found) missing += (missing.empty() ? "" : ", ") + (label < 0 ? std::string("baseline") : std::to_string(label));
    ordered.push_back(found);
  }
  if (!missing.empty()) throw ArtifactError("no trained model for: " + missing);

  const auto refs = enumerate_patches(grid);
  PredictionTable table;
  table.split = split_name;
  table.columns.assign(columns.begin(), columns.end());
  table.values.reserve(subjects.size() * columns.size());
  for (const auto& subject : subjects) {
    table.subject_ids.push_back(subject.id);
    table.ages.push_back(subject.age_years);
    const Volume cropped = source.load(subject);
    for (PatchModel* model : ordered) {
      std::vector<double> input;
      Extent3 dims;
      if (model->patch_index < 0) {
        input = whole_extractor(grid)(cropped);
        dims = grid.crop_dims;
      } else {
        const auto index = static_cast<std::size_t>(model->patch_index);
        if (index >= refs.size()) throw ConfigError("model patch index " + std::to_string(index) + " outside grid");
        input = patch_extractor(refs[index], grid)(cropped);
        dims = grid.patch_size;
      }
      const auto ages = model->predict_ages(Tensor(input_shape(1, dims), std::move(input)));
      table.values.push_back(ages[0]);
    }
  }
  return table;
}

}  // namespace patchage
