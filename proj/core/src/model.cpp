#include "patchage/model.hpp"

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "detail/file_io.hpp"
#include "detail/json_util.hpp"
#include "patchage/error.hpp"

namespace patchage {

namespace {

std::size_t conv_extent(std::size_t extent, int stride) {
  // kernel 3 with padding 1, or kernel 1 with padding 0: both give ceil(extent / stride).
  return (extent + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

}  // namespace

void ResNet3DConfig::validate() const {
  for (auto d : input_dims) {
    if (d == 0) throw ConfigError("model: input_dims must be positive, got " + extent_str(input_dims));
  }
  if (stem_channels == 0) throw ConfigError("model: stem_channels must be positive");
  if (stem_stride < 1) throw ConfigError("model: stem_stride must be >= 1");
  if (stage_channels.empty()) throw ConfigError("model: at least one stage is required");
  if (stage_channels.size() != blocks_per_stage.size()) {
    throw ConfigError("model: stage_channels has " + std::to_string(stage_channels.size()) +
                      " entries but blocks_per_stage has " + std::to_string(blocks_per_stage.size()));
  }
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    if (stage_channels[s] == 0 || blocks_per_stage[s] == 0) {
      throw ConfigError("model: stage " + std::to_string(s) + " needs positive channels and blocks");
    }
  }
  if (!(norm_eps > 0.0)) throw ConfigError("model: norm_eps must be positive");
  if (!(norm_momentum > 0.0 && norm_momentum <= 1.0)) throw ConfigError("model: norm_momentum must be in (0, 1]");

  Extent3 extent = input_dims;
  auto downsample = [&](int stride, const std::string& where) {
    if (stride == 1) return;
    for (auto& e : extent) {
      if (e < 2) {
        throw ConfigError("model: " + where + " receives spatial extent " + extent_str(extent) +
                          " from input " + extent_str(input_dims) + "; too small to downsample");
      }
      e = conv_extent(e, stride);
    }
  };
  downsample(stem_stride, "stem");
  for (std::size_t s = 1; s < stage_channels.size(); ++s) downsample(2, "stage " + std::to_string(s));
}

void to_json(nlohmann::json& j, const ResNet3DConfig& c) {
  j = nlohmann::json{{"input_dims", c.input_dims},
                     {"stem_channels", c.stem_channels},
                     {"stem_stride", c.stem_stride},
                     {"stage_channels", c.stage_channels},
                     {"blocks_per_stage", c.blocks_per_stage},
                     {"norm_eps", c.norm_eps},
                     {"norm_momentum", c.norm_momentum},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ResNet3DConfig& c) {
  detail::JsonFields f(j, "model");
  f.get("input_dims", c.input_dims);
  f.get("stem_channels", c.stem_channels);
  f.get("stem_stride", c.stem_stride);
  f.get("stage_channels", c.stage_channels);
  f.get("blocks_per_stage", c.blocks_per_stage);
  f.get("norm_eps", c.norm_eps);
  f.get("norm_momentum", c.norm_momentum);
  f.get("seed", c.seed);
  f.finish();
}

ResNet3D::Conv ResNet3D::make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                                   int stride, Rng& rng) {
  const std::size_t fan_in = in * kernel * kernel * kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor w({out, in, kernel, kernel, kernel}, true);
  for (double& v : w.mutable_values()) v = rng.uniform(-bound, bound);
  Tensor b({out}, true);
  for (double& v : b.mutable_values()) v = rng.uniform(-bound, bound);
  Conv c{params_.size(), params_.size() + 1, stride, static_cast<int>(kernel / 2)};
  params_.push_back({name + ".weight", w});
  params_.push_back({name + ".bias", b});
  return c;
}

ResNet3D::Norm ResNet3D::make_norm(const std::string& name, std::size_t channels) {
  Norm n{params_.size(), params_.size() + 1, name, {}};
  params_.push_back({name + ".gamma", Tensor::filled({channels}, 1.0, true)});
  params_.push_back({name + ".beta", Tensor({channels}, true)});
  return n;
}

ResNet3D::ResNet3D(const ResNet3DConfig& config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed({config_.seed, 0x12e5}));

  stem_ = make_conv("stem.conv", 1, config_.stem_channels, 3, config_.stem_stride, rng);
  stem_norm_ = make_norm("stem.norm", config_.stem_channels);

  std::size_t channels = config_.stem_channels;
  for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
    const std::size_t out = config_.stage_channels[s];
    for (std::size_t b = 0; b < config_.blocks_per_stage[s]; ++b) {
      const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      Block block{make_conv(name + ".conv1", channels, out, 3, stride, rng), make_norm(name + ".norm1", out),
                  make_conv(name + ".conv2", out, out, 3, 1, rng), make_norm(name + ".norm2", out),
                  std::nullopt, std::nullopt};
      if (stride != 1 || channels != out) {
        block.proj = make_conv(name + ".proj", channels, out, 1, stride, rng);
        block.proj_norm = make_norm(name + ".proj_norm", out);
      }
      blocks_.push_back(std::move(block));
      channels = out;
    }
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  Tensor hw({1, channels}, true);
  for (double& v : hw.mutable_values()) v = rng.uniform(-bound, bound);
  Tensor hb({1}, true);
  hb.mutable_values()[0] = rng.uniform(-bound, bound);
  head_weight_ = params_.size();
  params_.push_back({"head.weight", hw});
  head_bias_ = params_.size();
  params_.push_back({"head.bias", hb});
}

Tensor ResNet3D::apply(const Conv& c, const Tensor& x) const {
  return ops::conv3d(x, params_[c.weight].tensor, params_[c.bias].tensor, c.stride, c.padding);
}

Tensor ResNet3D::apply(Norm& n, const Tensor& x, ops::NormMode mode) {
  return ops::batch_norm(x, params_[n.gamma].tensor, params_[n.beta].tensor, mode, n.stats,
                         {config_.norm_momentum, config_.norm_eps});
}

Tensor ResNet3D::forward(const Tensor& batch, ops::NormMode mode) {
  const auto& d = config_.input_dims;
  if (batch.rank() != 5 || batch.dim(1) != 1 || batch.dim(2) != d[2] || batch.dim(3) != d[1] ||
      batch.dim(4) != d[0]) {
    throw ShapeError("model: expected input [N,1," + std::to_string(d[2]) + "," + std::to_string(d[1]) + "," +
                     std::to_string(d[0]) + "], got " + shape_str(batch.shape()));
  }
  Tensor x = ops::relu(apply(*stem_norm_, apply(stem_, batch), mode));
  for (auto& block : blocks_) {
    Tensor h = ops::relu(apply(block.norm1, apply(block.conv1, x), mode));
    h = apply(block.norm2, apply(block.conv2, h), mode);
    Tensor skip = block.proj ? apply(*block.proj_norm, apply(*block.proj, x), mode) : x;
    x = ops::relu(ops::add(h, skip));
  }
  return ops::linear(ops::global_avg_pool(x), params_[head_weight_].tensor, params_[head_bias_].tensor);
}

std::size_t ResNet3D::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::vector<NamedTensor> ResNet3D::state() const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) out.push_back({p.name, p.tensor});
  auto add_stats = [&](const Norm& n) {
    const std::size_t channels = params_[n.gamma].tensor.numel();
    if (!n.stats.initialized()) return;
    out.push_back({n.name + ".running_mean", Tensor({channels}, n.stats.mean)});
    out.push_back({n.name + ".running_var", Tensor({channels}, n.stats.var)});
  };
  add_stats(*stem_norm_);
  for (const auto& b : blocks_) {
    add_stats(b.norm1);
    add_stats(b.norm2);
    if (b.proj_norm) add_stats(*b.proj_norm);
  }
  return out;
}

void ResNet3D::load_state(const std::vector<NamedTensor>& state) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : state) by_name[t.name] = &t.tensor;
  auto take = [&](const std::string& name) -> const Tensor* {
    auto it = by_name.find(name);
    if (it == by_name.end()) return nullptr;
    const Tensor* t = it->second;
    by_name.erase(it);
    return t;
  };
  for (auto& p : params_) {
    const Tensor* t = take(p.name);
    if (!t) throw ArtifactError("model state is missing parameter '" + p.name + "'");
    if (t->shape() != p.tensor.shape()) {
      throw ArtifactError("model state has shape " + shape_str(t->shape()) + " for '" + p.name + "', expected " +
                          shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    std::copy(t->values().begin(), t->values().end(), dst.begin());
  }
  auto load_stats = [&](Norm& n) {
    const Tensor* mean = take(n.name + ".running_mean");
    const Tensor* var = take(n.name + ".running_var");
    if (!mean && !var) {
      n.stats = {};
      return;
    }
    const std::size_t channels = params_[n.gamma].tensor.numel();
    if (!mean || !var || mean->numel() != channels || var->numel() != channels) {
      throw ArtifactError("model state has incomplete running statistics for '" + n.name + "'");
    }
    n.stats.mean.assign(mean->values().begin(), mean->values().end());
    n.stats.var.assign(var->values().begin(), var->values().end());
  };
  load_stats(*stem_norm_);
  for (auto& b : blocks_) {
    load_stats(b.norm1);
    load_stats(b.norm2);
    if (b.proj_norm) load_stats(*b.proj_norm);
  }
  if (!by_name.empty()) throw ArtifactError("model state has unexpected tensor '" + by_name.begin()->first + "'");
}

void to_json(nlohmann::json& j, const TrainingMetadata& m) {
  j = nlohmann::json{{"epochs_run", m.epochs_run},
                     {"optimizer_steps", m.optimizer_steps},
                     {"final_val_mae", m.final_val_mae},
                     {"val_mae_curve", m.val_mae_curve},
                     {"target_mean", m.target_mean},
                     {"target_scale", m.target_scale}};
}

void from_json(const nlohmann::json& j, TrainingMetadata& m) {
  detail::JsonFields f(j, "metadata");
  f.get("epochs_run", m.epochs_run);
  f.get("optimizer_steps", m.optimizer_steps);
  nlohmann::json mae = nullptr;
  f.get("final_val_mae", mae);
  m.final_val_mae = mae.is_null() ? std::numeric_limits<double>::quiet_NaN() : mae.get<double>();
  f.get("val_mae_curve", m.val_mae_curve);
  f.get("target_mean", m.target_mean);
  f.get("target_scale", m.target_scale);
  f.finish();
}

std::vector<double> PatchModel::predict_ages(const Tensor& batch) {
  const Tensor out = network.forward(batch, ops::NormMode::kEval);
  std::vector<double> ages(out.numel());
  for (std::size_t i = 0; i < ages.size(); ++i) {
    ages[i] = metadata.target_mean + metadata.target_scale * out.values()[i];
  }
  return ages;
}

PatchModel build_model(const ResNet3DConfig& config, long patch_index) {
  return PatchModel{patch_index, config, ResNet3D(config), {}, {}};
}

Tensor forward(PatchModel& model, const Tensor& batch, ops::NormMode mode) {
  return model.network.forward(batch, mode);
}

void save_model(const std::filesystem::path& stem, const PatchModel& model) {
  auto pga = stem;
  pga += ".pga";
  auto sidecar = stem;
  sidecar += ".json";
  nlohmann::json j{{"format", "patchage-model"},
                   {"version", 1},
                   {"patch_index", model.patch_index},
                   {"config", model.config},
                   {"metadata", model.metadata},
                   {"config_hash", model.config_hash}};
  save_checkpoint(pga, model.network.state());
  detail::write_file_atomic(sidecar, j.dump(2) + "\n");
}

PatchModel load_model(const std::filesystem::path& stem) {
  auto pga = stem;
  pga += ".pga";
  auto sidecar = stem;
  sidecar += ".json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_text(sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(sidecar.string() + ": invalid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "patchage-model" || j.at("version") != 1) {
      throw ArtifactError(sidecar.string() + ": not a patchage model sidecar");
    }
    const auto config = j.at("config").get<ResNet3DConfig>();
    PatchModel model = build_model(config, j.at("patch_index").get<long>());
    model.metadata = j.at("metadata").get<TrainingMetadata>();
    model.config_hash = j.at("config_hash").get<std::string>();
    model.network.load_state(load_checkpoint(pga));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(sidecar.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ArtifactError(sidecar.string() + ": " + e.what());
  }
}

}  // namespace patchage
