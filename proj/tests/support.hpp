#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "patchage/config.hpp"
#include "patchage/patch_grid.hpp"
#include "patchage/phantom.hpp"
#include "patchage/random.hpp"
#include "patchage/tensor.hpp"
#include "patchage/trainer.hpp"

namespace patchage::testing {

// Directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "patchage") {
    std::string pattern = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

inline Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Compares tape gradients of `loss_fn` against central differences for every input.
// Returns the worst norm-wise relative error ||analytic - numeric|| / (||analytic|| + ||numeric||).
inline double gradient_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& inputs,
                             double step = 1e-6) {
  for (const auto& t : inputs) t.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  double worst = 0.0;
  for (const auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss_fn().item();
      values[i] = saved - step;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    worst = std::max(worst, denom > 0.0 ? std::sqrt(diff2) / denom : std::sqrt(diff2));
  }
  return worst;
}

// Renders phantoms on demand instead of reading files. Subject i of make_subjects uses
// subject seed i.
class PhantomSource : public ScanSource {
 public:
  PhantomSource(PhantomParams params, GridSpec grid) : params_(std::move(params)), grid_(std::move(grid)) {}
  Volume load(const Subject& subject) const override {
    const auto seed = static_cast<std::uint64_t>(std::stoul(subject.id.substr(4)));
    return center_crop(normalize_volume(generate_phantom(subject.age_years, params_, seed)), grid_.crop_dims);
  }

 private:
  PhantomParams params_;
  GridSpec grid_;
};

// Replaces every voxel outside one patch block with NaN.
class PoisonedSource : public ScanSource {
 public:
  PoisonedSource(const ScanSource& inner, PatchRef keep, GridSpec grid)
      : inner_(inner), keep_(keep), grid_(std::move(grid)) {}
  Volume load(const Subject& s) const override {
    Volume v = inner_.load(s);
    const auto& d = v.dims();
    for (std::size_t z = 0; z < d[2]; ++z) {
      for (std::size_t y = 0; y < d[1]; ++y) {
        for (std::size_t x = 0; x < d[0]; ++x) {
          const Extent3 p{x, y, z};
          bool inside = true;
          for (int a = 0; a < 3; ++a) inside &= p[a] >= keep_.offset[a] && p[a] < keep_.offset[a] + grid_.patch_size[a];
          if (!inside) v.at(x, y, z) = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
    return v;
  }

 private:
  const ScanSource& inner_;
  PatchRef keep_;
  GridSpec grid_;
};

inline std::vector<Subject> make_subjects(std::size_t n, const PhantomParams& params, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Subject> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = "sub-" + std::to_string(i);
    out[i].age_years = rng.uniform(params.age_min, params.age_max);
  }
  return out;
}

// A pipeline small enough to run end to end in seconds: 24x28x24 phantoms, 16^3
// patches on a 2x2x2 grid, a two-stage network, one epoch.
inline PipelineConfig small_config(const std::filesystem::path& root) {
  PipelineConfig c;
  c.phantom.dims = {24, 28, 24};
  c.phantom.brain_semi_axes_at_min_age = {9.0, 11.0, 9.0};
  c.phantom.ventricle_semi_axes_at_min_age = {2.5, 3.0, 2.5};
  c.phantom.supersampling = 2;
  c.n_subjects = 80;
  c.grid.source_dims = {24, 28, 24};
  c.grid.crop_dims = {24, 28, 24};
  c.grid.patch_size = {16, 16, 16};
  c.grid.stride = {8, 12, 8};
  c.model.input_dims = {16, 16, 16};
  c.model.stem_channels = 4;
  c.model.stage_channels = {4, 8};
  c.model.blocks_per_stage = {1, 1};
  c.train.batch_size = 4;
  c.train.epochs = 1;
  c.eval.threshold_years = std::numeric_limits<double>::infinity();
  c.output_dir = root.string();
  return c;
}

}  // namespace patchage::testing
