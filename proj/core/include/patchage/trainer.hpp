#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "patchage/model.hpp"
#include "patchage/patch_grid.hpp"
#include "patchage/phantom.hpp"
#include "patchage/prediction_table.hpp"

namespace patchage {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double learning_rate = 1e-4;
  std::uint64_t seed = 17;
  std::size_t parallel_patch_jobs = 1;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Supplies scans already normalized per scan and center-cropped to the grid's crop
// extent. Implementations must be safe to call concurrently.
class ScanSource {
 public:
  virtual ~ScanSource() = default;
  virtual Volume load(const Subject& subject) const = 0;
};

// Reads volumes referenced by a manifest; relative paths resolve against `base_dir`.
class FileScanSource : public ScanSource {
 public:
  FileScanSource(std::filesystem::path base_dir, GridSpec grid);
  Volume load(const Subject& subject) const override;

 private:
  std::filesystem::path base_dir_;
  GridSpec grid_;
};

struct SplitSubjects {
  std::vector<Subject> train;
  std::vector<Subject> val;
  std::vector<Subject> test;
};

// Looks up every split id in `subjects`; throws ConfigError on unknown ids.
SplitSubjects resolve_split(const std::vector<Subject>& subjects, const DatasetSplit& split);

// Receives one JSON object per training event ("batch" or "epoch"). Batch events list
// the subject ids that formed the batch.
using TrainLogSink = std::function<void(const nlohmann::json&)>;

// Trains one network on a single patch location across all training subjects and
// records the validation MAE (years) after every epoch. Final-epoch weights are kept.
// Throws NumericError with epoch/step context on a non-finite loss.
PatchModel train_patch_model(const PatchRef& patch, const SplitSubjects& data, const ScanSource& source,
                             const GridSpec& grid, const TrainConfig& tcfg, const ResNet3DConfig& mcfg,
                             const TrainLogSink& log = {});

// Same as train_patch_model on the whole cropped volume.
PatchModel train_baseline(const SplitSubjects& data, const ScanSource& source, const GridSpec& grid,
                          const TrainConfig& tcfg, const ResNet3DConfig& mcfg, const TrainLogSink& log = {});

// Trains each patch as an independent job, running up to tcfg.parallel_patch_jobs at
// once. `on_done` is called (serialized) as each model finishes. Results do not depend
// on the job count. The first failure by patch order is rethrown after all jobs stop.
void train_patch_models(std::span<const PatchRef> patches, const SplitSubjects& data, const ScanSource& source,
                        const GridSpec& grid, const TrainConfig& tcfg, const ResNet3DConfig& mcfg,
                        const std::function<void(PatchModel&&)>& on_done,
                        const std::function<TrainLogSink(const PatchRef&)>& log_for = {});

// Eval-mode predictions of every model for every subject. `columns` lists the model
// labels (patch index, or -1 for the baseline) to include, in output order; throws
// ArtifactError naming any label without a model.
PredictionTable predict_split(std::span<PatchModel* const> models, std::span<const long> columns,
                              const std::vector<Subject>& subjects, const std::string& split_name,
                              const ScanSource& source, const GridSpec& grid);

}  // namespace patchage
