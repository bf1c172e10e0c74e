#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "patchage/config.hpp"
#include "patchage/error.hpp"
#include "support.hpp"

using namespace patchage;
using patchage::testing::TempDir;

namespace {

// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value) {
      setenv(name, value, 1);
    } else {
      unsetenv(name);
    }
  }
  ~EnvGuard() {
    if (old_) {
      setenv(name_, old_->c_str(), 1);
    } else {
      unsetenv(name_);
    }
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(PipelineConfig{}.validate()); }

TEST(Config, JsonRoundTrip) {
  PipelineConfig c = patchage::testing::small_config("/tmp/x");
  c.eval.fusion = FusionMethod::kMean;
  c.eval.bias_correct = true;
  c.grid.mode = TilingMode::kClampLast;
  const nlohmann::json j = c;
  const auto back = j.get<PipelineConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.phantom, c.phantom);
  EXPECT_EQ(back.grid, c.grid);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.eval, c.eval);
  EXPECT_EQ(j["eval"]["threshold"], "inf");
}

TEST(Config, PartialFileKeepsDefaults) {
  TempDir dir;
  write_text(dir / "c.json", R"({"n_subjects": 40, "train": {"epochs": 3}})");
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.n_subjects, 40u);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.train.batch_size, 8u);
  EXPECT_EQ(c.grid, GridSpec::desk());
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  TempDir dir;
  write_text(dir / "a.json", R"({"n_subject": 40})");
  try {
    load_config(dir / "a.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("n_subject"), std::string::npos) << e.what();
  }
  write_text(dir / "b.json", R"({"train": {"epochs": "ten"}})");
  EXPECT_THROW(load_config(dir / "b.json"), ConfigError);
  write_text(dir / "c.json", R"({"eval": {"fusion": "median"}})");
  EXPECT_THROW(load_config(dir / "c.json"), ConfigError);
  write_text(dir / "d.json", "{not json");
  EXPECT_THROW(load_config(dir / "d.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, CrossFieldValidation) {
  PipelineConfig c;
  c.grid.source_dims = {71, 88, 70};
  EXPECT_THROW(c.validate(), ConfigError);
  PipelineConfig d;
  d.n_subjects = 10;
  EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Config, HashesAreStableAndScoped) {
  const PipelineConfig base;
  EXPECT_EQ(config_hash(base), config_hash(PipelineConfig{}));
  EXPECT_EQ(config_hash(base).size(), 16u);

  PipelineConfig jobs = base;
  jobs.train.parallel_patch_jobs = 4;
  jobs.gen_jobs = 3;
  jobs.output_dir = "/elsewhere";
  jobs.eval.threshold_years = 1.0;
  EXPECT_EQ(config_hash(jobs), config_hash(base));
  EXPECT_EQ(data_hash(jobs), data_hash(base));

  PipelineConfig epochs = base;
  epochs.train.epochs = 11;
  EXPECT_NE(config_hash(epochs), config_hash(base));
  EXPECT_EQ(data_hash(epochs), data_hash(base));

  PipelineConfig seed = base;
  seed.master_seed = 8;
  EXPECT_NE(data_hash(seed), data_hash(base));
  EXPECT_NE(config_hash(seed), config_hash(base));
}

TEST(Config, OutputDirPrecedence) {
  PipelineConfig c;
  {
    EnvGuard env(kOutputRootEnv, nullptr);
    EXPECT_EQ(resolve_output_dir(c), std::filesystem::path(kDefaultOutputDir));
  }
  {
    EnvGuard env(kOutputRootEnv, "/from/env");
    EXPECT_EQ(resolve_output_dir(c), std::filesystem::path("/from/env"));
    c.output_dir = "/from/config";
    EXPECT_EQ(resolve_output_dir(c), std::filesystem::path("/from/config"));
  }
}

TEST(Config, FusionNames) {
  EXPECT_EQ(parse_fusion("mean"), FusionMethod::kMean);
  EXPECT_EQ(parse_fusion("linear"), FusionMethod::kLinear);
  EXPECT_STREQ(fusion_name(FusionMethod::kMean), "mean");
  EXPECT_THROW(parse_fusion("max"), ConfigError);
}
