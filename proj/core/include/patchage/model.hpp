#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "patchage/adam.hpp"
#include "patchage/checkpoint.hpp"
#include "patchage/ops.hpp"
#include "patchage/random.hpp"
#include "patchage/volume.hpp"

namespace patchage {

// 3D residual regressor. With the default stage layout (2,2,2,2) this is the 18-layer
// ResNet topology at reduced width.
struct ResNet3DConfig {
  Extent3 input_dims{32, 32, 32};  // (x, y, z); the input tensor is [N,1,z,y,x]
  std::size_t stem_channels = 8;
  int stem_stride = 2;
  std::vector<std::size_t> stage_channels{8, 16, 32, 64};
  std::vector<std::size_t> blocks_per_stage{2, 2, 2, 2};
  double norm_eps = 1e-5;
  double norm_momentum = 0.1;
  std::uint64_t seed = 0;

  // Throws ConfigError; a stage whose input is too small to downsample is named.
  void validate() const;

  bool operator==(const ResNet3DConfig&) const = default;
};

void to_json(nlohmann::json& j, const ResNet3DConfig& c);
void from_json(const nlohmann::json& j, ResNet3DConfig& c);

class ResNet3D {
 public:
  explicit ResNet3D(const ResNet3DConfig& config);
  // Parameters are shared-storage tensors, so copies would alias; move only.
  ResNet3D(ResNet3D&&) noexcept = default;
  ResNet3D& operator=(ResNet3D&&) noexcept = default;
  ResNet3D(const ResNet3D&) = delete;
  ResNet3D& operator=(const ResNet3D&) = delete;

  // batch [N,1,z,y,x] -> [N,1]. Train mode normalizes with batch statistics and updates
  // the running statistics; eval mode only reads them.
  Tensor forward(const Tensor& batch, ops::NormMode mode);

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  // Parameters followed by running statistics, in a fixed order.
  std::vector<NamedTensor> state() const;
  // Replaces parameters and running statistics; names and shapes must match exactly.
  void load_state(const std::vector<NamedTensor>& state);

  const ResNet3DConfig& config() const noexcept { return config_; }

  // Head layer, exposed for tests and inspection.
  Parameter& head_weight() { return params_[head_weight_]; }
  Parameter& head_bias() { return params_[head_bias_]; }

 private:
  struct Conv {
    std::size_t weight, bias;
    int stride, padding;
  };
  struct Norm {
    std::size_t gamma, beta;
    std::string name;
    ops::RunningStats stats;
  };
  struct Block {
    Conv conv1;
    Norm norm1;
    Conv conv2;
    Norm norm2;
    std::optional<Conv> proj;
    std::optional<Norm> proj_norm;
  };

  Conv make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, int stride,
                 Rng& rng);
  Norm make_norm(const std::string& name, std::size_t channels);
  Tensor apply(const Conv& c, const Tensor& x) const;
  Tensor apply(Norm& n, const Tensor& x, ops::NormMode mode);

  ResNet3DConfig config_;
  std::vector<Parameter> params_;
  Conv stem_{};
  std::optional<Norm> stem_norm_;
  std::vector<Block> blocks_;
  std::size_t head_weight_ = 0, head_bias_ = 0;
};

struct TrainingMetadata {
  std::size_t epochs_run = 0;
  std::size_t optimizer_steps = 0;
  double final_val_mae = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> val_mae_curve;
  // The network regresses (age - target_mean) / target_scale.
  double target_mean = 0.0;
  double target_scale = 1.0;
};

void to_json(nlohmann::json& j, const TrainingMetadata& m);
void from_json(const nlohmann::json& j, TrainingMetadata& m);

// A network bound to one patch location (or the whole cropped volume for the baseline).
struct PatchModel {
  static constexpr long kBaselineIndex = -1;

  long patch_index = kBaselineIndex;
  ResNet3DConfig config;
  ResNet3D network;
  TrainingMetadata metadata;
  std::string config_hash;

  // Eval-mode predictions in years for batch [N,1,z,y,x].
  std::vector<double> predict_ages(const Tensor& batch);
};

PatchModel build_model(const ResNet3DConfig& config, long patch_index = PatchModel::kBaselineIndex);

// Eval or train forward pass of the raw network output [N,1].
Tensor forward(PatchModel& model, const Tensor& batch, ops::NormMode mode = ops::NormMode::kEval);

// Writes <stem>.pga (parameters and running statistics) and <stem>.json (config,
// patch index, metadata, config hash).
void save_model(const std::filesystem::path& stem, const PatchModel& model);
// `stem` is the path without extension. Throws ArtifactError when either file is missing
// or corrupt.
PatchModel load_model(const std::filesystem::path& stem);

}  // namespace patchage
