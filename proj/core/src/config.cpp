#include "patchage/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include <nlohmann/json.hpp>

#include "detail/binary_io.hpp"
#include "detail/file_io.hpp"
#include "detail/json_util.hpp"
#include "patchage/error.hpp"

namespace patchage {

FusionMethod parse_fusion(const std::string& name) {
  if (name == "mean") return FusionMethod::kMean;
  if (name == "linear") return FusionMethod::kLinear;
  throw ConfigError("fusion must be 'mean' or 'linear', got '" + name + "'");
}

const char* fusion_name(FusionMethod method) { return method == FusionMethod::kMean ? "mean" : "linear"; }

void PipelineConfig::validate() const {
  phantom.validate();
  grid.validate();
  model.validate();
  train.validate();
  if (grid.source_dims != phantom.dims) {
    throw ConfigError("grid.source_dims " + extent_str(grid.source_dims) + " differs from phantom.dims " +
                      extent_str(phantom.dims));
  }
  if (n_subjects < 20) throw ConfigError("n_subjects must be at least 20");
  for (double r : {split.train, split.val, split.test}) {
    if (!(r > 0.0) || r >= 1.0) throw ConfigError("split ratios must lie in (0, 1)");
  }
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (std::isnan(eval.threshold_years)) throw ConfigError("eval.threshold is NaN");
  if (eval.ridge < 0.0 || !std::isfinite(eval.ridge)) throw ConfigError("eval.ridge must be >= 0");
  if (gen_jobs < 1) throw ConfigError("gen_jobs must be >= 1");
}

void to_json(nlohmann::json& j, const PhantomParams& p) {
  j = nlohmann::json{{"dims", p.dims},
                     {"spacing", p.spacing},
                     {"age_min", p.age_min},
                     {"age_max", p.age_max},
                     {"brain_semi_axes_at_min_age", p.brain_semi_axes_at_min_age},
                     {"brain_shrink_per_year", p.brain_shrink_per_year},
                     {"ventricle_semi_axes_at_min_age", p.ventricle_semi_axes_at_min_age},
                     {"ventricle_growth_per_year", p.ventricle_growth_per_year},
                     {"head_size_jitter", p.head_size_jitter},
                     {"tissue_intensity", p.tissue_intensity},
                     {"ventricle_intensity", p.ventricle_intensity},
                     {"background_intensity", p.background_intensity},
                     {"noise_sigma", p.noise_sigma},
                     {"seed", p.seed},
                     {"supersampling", p.supersampling}};
}

void from_json(const nlohmann::json& j, PhantomParams& p) {
  detail::JsonFields f(j, "phantom");
  f.get("dims", p.dims);
  f.get("spacing", p.spacing);
  f.get("age_min", p.age_min);
  f.get("age_max", p.age_max);
  f.get("brain_semi_axes_at_min_age", p.brain_semi_axes_at_min_age);
  f.get("brain_shrink_per_year", p.brain_shrink_per_year);
  f.get("ventricle_semi_axes_at_min_age", p.ventricle_semi_axes_at_min_age);
  f.get("ventricle_growth_per_year", p.ventricle_growth_per_year);
  f.get("head_size_jitter", p.head_size_jitter);
  f.get("tissue_intensity", p.tissue_intensity);
  f.get("ventricle_intensity", p.ventricle_intensity);
  f.get("background_intensity", p.background_intensity);
  f.get("noise_sigma", p.noise_sigma);
  f.get("seed", p.seed);
  f.get("supersampling", p.supersampling);
  f.finish();
}

void to_json(nlohmann::json& j, const GridSpec& g) {
  j = nlohmann::json{{"source_dims", g.source_dims},
                     {"crop_dims", g.crop_dims},
                     {"patch_size", g.patch_size},
                     {"stride", g.stride},
                     {"mode", g.mode == TilingMode::kExact ? "exact" : "clamp_last"}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
  detail::JsonFields f(j, "grid");
  f.get("source_dims", g.source_dims);
  f.get("crop_dims", g.crop_dims);
  f.get("patch_size", g.patch_size);
  f.get("stride", g.stride);
  std::string mode = g.mode == TilingMode::kExact ? "exact" : "clamp_last";
  f.get("mode", mode);
  if (mode == "exact") {
    g.mode = TilingMode::kExact;
  } else if (mode == "clamp_last") {
    g.mode = TilingMode::kClampLast;
  } else {
    throw ConfigError("grid.mode must be 'exact' or 'clamp_last'");
  }
  f.finish();
}

void to_json(nlohmann::json& j, const SplitRatios& s) {
  j = nlohmann::json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

void from_json(const nlohmann::json& j, SplitRatios& s) {
  detail::JsonFields f(j, "split");
  f.get("train", s.train);
  f.get("val", s.val);
  f.get("test", s.test);
  f.finish();
}

void to_json(nlohmann::json& j, const EvalConfig& e) {
  j = nlohmann::json{{"fusion", fusion_name(e.fusion)}, {"bias_correct", e.bias_correct}, {"ridge", e.ridge}};
  if (std::isfinite(e.threshold_years)) {
    j["threshold"] = e.threshold_years;
  } else {
    j["threshold"] = "inf";
  }
}

void from_json(const nlohmann::json& j, EvalConfig& e) {
  detail::JsonFields f(j, "eval");
  std::string fusion = fusion_name(e.fusion);
  f.get("fusion", fusion);
  e.fusion = parse_fusion(fusion);
  nlohmann::json threshold;
  f.get("threshold", threshold);
  if (threshold.is_number()) {
    e.threshold_years = threshold.get<double>();
  } else if (threshold.is_string() && threshold.get<std::string>() == "inf") {
    e.threshold_years = std::numeric_limits<double>::infinity();
  } else if (!threshold.is_null()) {
    throw ConfigError("eval.threshold must be a number or \"inf\"");
  }
  f.get("bias_correct", e.bias_correct);
  f.get("ridge", e.ridge);
  f.finish();
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"phantom", c.phantom}, {"n_subjects", c.n_subjects}, {"master_seed", c.master_seed},
                     {"split", c.split},     {"grid", c.grid},             {"model", c.model},
                     {"train", c.train},     {"eval", c.eval},             {"gen_jobs", c.gen_jobs}};
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  detail::JsonFields f(j, "config");
  f.get("phantom", c.phantom);
  f.get("n_subjects", c.n_subjects);
  f.get("master_seed", c.master_seed);
  f.get("split", c.split);
  f.get("grid", c.grid);
  f.get("model", c.model);
  f.get("train", c.train);
  f.get("eval", c.eval);
  f.get("gen_jobs", c.gen_jobs);
  f.get("output_dir", c.output_dir);
  f.finish();
}

PipelineConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ArtifactError& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  return j.get<PipelineConfig>();
}

std::filesystem::path resolve_output_dir(const PipelineConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return kDefaultOutputDir;
}

namespace {

std::string hash_json(const nlohmann::json& j) {
  const std::string text = j.dump();
  const auto h = detail::fnv1a64(reinterpret_cast<const unsigned char*>(text.data()), text.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json data_fields(const PipelineConfig& c) {
  return {{"phantom", c.phantom}, {"n_subjects", c.n_subjects}, {"master_seed", c.master_seed}};
}

}  // namespace

std::string data_hash(const PipelineConfig& config) { return hash_json(data_fields(config)); }

std::string config_hash(const PipelineConfig& config) {
  nlohmann::json train = config.train;
  train.erase("parallel_patch_jobs");
  nlohmann::json j = data_fields(config);
  j["split"] = config.split;
  j["grid"] = config.grid;
  j["model"] = config.model;
  j["train"] = train;
  return hash_json(j);
}

}  // namespace patchage
