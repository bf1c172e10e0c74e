#include "patchage/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "detail/file_io.hpp"
#include "detail/text.hpp"
#include "patchage/error.hpp"
#include "patchage/random.hpp"

namespace patchage {

namespace {

std::string fmt_axes(const std::array<double, 3>& a) {
  std::ostringstream s;
  s << '(' << a[0] << ", " << a[1] << ", " << a[2] << ')';
  return s.str();
}

// Fraction of the voxel at integer coordinates (x,y,z) inside the axis-aligned ellipsoid.
double ellipsoid_fraction(double x, double y, double z, const std::array<double, 3>& center,
                          const std::array<double, 3>& axes, int samples) {
  const double dx = (x - center[0]) / axes[0];
  const double dy = (y - center[1]) / axes[1];
  const double dz = (z - center[2]) / axes[2];
  const double rho = std::sqrt(dx * dx + dy * dy + dz * dz);
  // |grad rho| <= 1 / min(axes) per voxel unit; half a voxel diagonal is sqrt(3)/2.
  const double margin = 0.9 / std::min({axes[0], axes[1], axes[2]});
  if (rho < 1.0 - margin) return 1.0;
  if (rho > 1.0 + margin) return 0.0;
  int inside = 0;
  for (int i = 0; i < samples; ++i) {
    const double sz = z + (i + 0.5) / samples - 0.5;
    for (int j = 0; j < samples; ++j) {
      const double sy = y + (j + 0.5) / samples - 0.5;
      for (int k = 0; k < samples; ++k) {
        const double sx = x + (k + 0.5) / samples - 0.5;
        const double ex = (sx - center[0]) / axes[0];
        const double ey = (sy - center[1]) / axes[1];
        const double ez = (sz - center[2]) / axes[2];
        if (ex * ex + ey * ey + ez * ez <= 1.0) ++inside;
      }
    }
  }
  return static_cast<double>(inside) / (samples * samples * samples);
}

std::string subject_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sub-%04zu", i);
  return buf;
}

}  // namespace

void PhantomParams::validate() const {
  if (!(age_max > age_min)) throw ConfigError("phantom: age_max must exceed age_min");
  if (brain_shrink_per_year < 0.0) throw ConfigError("phantom: brain_shrink_per_year must be >= 0");
  if (ventricle_growth_per_year < 0.0) throw ConfigError("phantom: ventricle_growth_per_year must be >= 0");
  if (head_size_jitter < 0.0 || head_size_jitter >= 0.5) {
    throw ConfigError("phantom: head_size_jitter must lie in [0, 0.5)");
  }
  if (noise_sigma < 0.0) throw ConfigError("phantom: noise_sigma must be >= 0");
  if (supersampling < 1) throw ConfigError("phantom: supersampling must be >= 1");
  for (auto d : dims) {
    if (d == 0) throw ConfigError("phantom: dims must be positive");
  }
  const double span = age_max - age_min;
  if (brain_shrink_per_year * span >= 1.0) throw ConfigError("phantom: brain shrinks to nothing within the age range");

  const auto brain_small = brain_semi_axes(*this, age_max, 1.0 - head_size_jitter);
  const auto brain_large = brain_semi_axes(*this, age_min, 1.0 + head_size_jitter);
  const auto vent_large = ventricle_semi_axes(*this, age_max);
  for (std::size_t a = 0; a < 3; ++a) {
    if (ventricle_semi_axes_at_min_age[a] <= 0.0 || brain_semi_axes_at_min_age[a] <= 0.0) {
      throw ConfigError("phantom: semi-axes must be positive");
    }
    if (vent_large[a] >= brain_small[a]) {
      throw ConfigError("phantom: ventricle " + fmt_axes(vent_large) + " is not strictly inside brain " +
                        fmt_axes(brain_small) + " at age " + detail::format_double(age_max));
    }
    if (brain_large[a] >= 0.5 * static_cast<double>(dims[a]) - 0.5) {
      throw ConfigError("phantom: brain " + fmt_axes(brain_large) + " does not fit in " + extent_str(dims));
    }
  }
  const double gap = 3.0 * noise_sigma;
  const double a = tissue_intensity, b = ventricle_intensity, c = background_intensity;
  if (std::abs(a - b) < gap || std::abs(a - c) < gap || std::abs(b - c) < gap) {
    throw ConfigError("phantom: tissue/ventricle/background intensities must differ by >= 3 * noise_sigma");
  }
}

std::array<double, 3> brain_semi_axes(const PhantomParams& p, double age, double size_factor) {
  const double scale = (1.0 - p.brain_shrink_per_year * (age - p.age_min)) * size_factor;
  return {p.brain_semi_axes_at_min_age[0] * scale, p.brain_semi_axes_at_min_age[1] * scale,
          p.brain_semi_axes_at_min_age[2] * scale};
}

std::array<double, 3> ventricle_semi_axes(const PhantomParams& p, double age) {
  const double scale = 1.0 + p.ventricle_growth_per_year * (age - p.age_min);
  return {p.ventricle_semi_axes_at_min_age[0] * scale, p.ventricle_semi_axes_at_min_age[1] * scale,
          p.ventricle_semi_axes_at_min_age[2] * scale};
}

std::array<double, 3> phantom_center(const PhantomParams& p) {
  return {0.5 * (static_cast<double>(p.dims[0]) - 1.0), 0.5 * (static_cast<double>(p.dims[1]) - 1.0),
          0.5 * (static_cast<double>(p.dims[2]) - 1.0)};
}

Volume generate_phantom(double age, const PhantomParams& params, std::uint64_t subject_seed) {
  params.validate();
  if (age < params.age_min || age > params.age_max) {
    throw ConfigError("phantom: age " + detail::format_double(age) + " outside [" +
                      detail::format_double(params.age_min) + ", " + detail::format_double(params.age_max) + "]");
  }
  Rng rng(derive_seed({params.seed, subject_seed}));
  const double size_factor = 1.0 + rng.uniform(-params.head_size_jitter, params.head_size_jitter);
  const auto brain = brain_semi_axes(params, age, size_factor);
  const auto vent = ventricle_semi_axes(params, age);
  const auto center = phantom_center(params);

  Volume v(params.dims, params.spacing);
  const auto& d = params.dims;
  for (std::size_t z = 0; z < d[2]; ++z) {
    for (std::size_t y = 0; y < d[1]; ++y) {
      for (std::size_t x = 0; x < d[0]; ++x) {
        const double fb = ellipsoid_fraction(x, y, z, center, brain, params.supersampling);
        const double fv = fb > 0.0 ? ellipsoid_fraction(x, y, z, center, vent, params.supersampling) : 0.0;
        // The ventricle lies inside the brain, so fv <= fb.
        v.at(x, y, z) = params.background_intensity * (1.0 - fb) + params.tissue_intensity * (fb - fv) +
                        params.ventricle_intensity * fv;
      }
    }
  }
  if (params.noise_sigma > 0.0) {
    for (double& value : v.values()) value += params.noise_sigma * rng.normal();
  }
  return v;
}

std::vector<std::size_t> ventricle_patches(const PhantomParams& params, const GridSpec& grid) {
  if (grid.source_dims != params.dims) {
    throw ConfigError("ventricle_patches: grid source " + extent_str(grid.source_dims) +
                      " differs from phantom dims " + extent_str(params.dims));
  }
  const auto vent = ventricle_semi_axes(params, params.age_max);
  const auto center = phantom_center(params);
  const Extent3 start = center_crop_start(grid.source_dims, grid.crop_dims);
  std::vector<std::size_t> out;
  for (const auto& ref : enumerate_patches(grid)) {
    // Squared normalized distance from the center to the nearest point of the patch box
    // (voxel extents [o - 0.5, o + p - 0.5] in source coordinates).
    double dist = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double lo = static_cast<double>(start[a] + ref.offset[a]) - 0.5;
      const double hi = lo + static_cast<double>(grid.patch_size[a]);
      const double nearest = std::clamp(center[a], lo, hi);
      const double t = (nearest - center[a]) / vent[a];
      dist += t * t;
    }
    if (dist < 1.0) out.push_back(ref.index);
  }
  return out;
}

std::vector<Subject> generate_dataset(std::size_t n, const PhantomParams& params, std::uint64_t master_seed,
                                      const std::filesystem::path& out_dir, std::size_t jobs,
                                      const std::string& config_hash) {
  if (n < 20) throw ConfigError("generate_dataset: need at least 20 subjects, got " + std::to_string(n));
  params.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "volumes", ec);
  if (ec) throw ArtifactError("cannot create '" + (out_dir / "volumes").string() + "': " + ec.message());

  std::vector<Subject> subjects(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng age_rng(derive_seed({master_seed, i, 0xa9e}));
    subjects[i].id = subject_id(i);
    subjects[i].age_years = age_rng.uniform(params.age_min, params.age_max);
    subjects[i].volume_path = std::filesystem::path("volumes") / (subjects[i].id + ".pgv");
  }

  auto worker = [&](std::size_t first, std::size_t step) {
    for (std::size_t i = first; i < n; i += step) {
      const auto& s = subjects[i];
      write_volume(out_dir / s.volume_path,
                   generate_phantom(s.age_years, params, derive_seed({master_seed, i})));
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, n);
  if (jobs == 1) {
    worker(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    {
      std::vector<std::jthread> threads;
      for (std::size_t j = 0; j < jobs; ++j) {
        threads.emplace_back([&, j] {
          try {
            worker(j, jobs);
          } catch (...) {
            errors[j] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  write_manifest(out_dir / "manifest.csv", subjects, config_hash);
  return subjects;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Subject>& subjects,
                    const std::string& config_hash) {
  std::string text;
  if (!config_hash.empty()) text += "# config_hash: " + config_hash + "\n";
  text += "id,age_years,path\n";
  for (const auto& s : subjects) {
    text += s.id + "," + detail::format_double(s.age_years) + "," + s.volume_path.generic_string() + "\n";
  }
  detail::write_file_atomic(path, text);
}

std::vector<Subject> read_manifest(const std::filesystem::path& path) {
  const std::string text = detail::read_file_text(path);
  std::istringstream in(text);
  std::string line;
  std::vector<Subject> subjects;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = detail::trim_cr(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = detail::split_csv_line(view);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"id", "age_years", "path"}) {
        throw ArtifactError(where + ": expected header 'id,age_years,path'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) throw ArtifactError(where + ": expected 3 columns");
    subjects.push_back({fields[0], detail::parse_double(fields[1], where), fields[2]});
  }
  if (!header_seen) throw ArtifactError(path.string() + ": empty manifest");
  return subjects;
}

std::string read_manifest_hash(const std::filesystem::path& path) {
  const std::string text = detail::read_file_text(path);
  const std::string key = "# config_hash: ";
  if (text.rfind(key, 0) != 0) return {};
  const auto end = text.find('\n');
  return text.substr(key.size(), end - key.size());
}

DatasetSplit split_dataset(const std::vector<Subject>& subjects, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split: ratios must be non-negative and sum to 1");
  }
  const std::size_t n = subjects.size();
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= n) {
    throw ConfigError("split: " + std::to_string(n) + " subjects with ratios (" + detail::format_double(ratios.train) +
                      ", " + detail::format_double(ratios.val) + ", " + detail::format_double(ratios.test) +
                      ") leave an empty split");
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& s : subjects) ids.push_back(s.id);
  Rng rng(derive_seed({seed, 0x5b117}));
  rng.shuffle(ids);

  DatasetSplit split;
  split.ratios = ratios;
  split.val_ids.assign(ids.begin(), ids.begin() + static_cast<long>(n_val));
  split.test_ids.assign(ids.begin() + static_cast<long>(n_val), ids.begin() + static_cast<long>(n_val + n_test));
  split.train_ids.assign(ids.begin() + static_cast<long>(n_val + n_test), ids.end());
  return split;
}

Volume normalize_volume(const Volume& volume) {
  const auto values = volume.values();
  if (values.empty()) throw NumericError("normalize_volume: empty volume");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw NumericError("normalize_volume: volume has zero variance (constant intensity)");
  }
  const double inv = 1.0 / std::sqrt(var);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) * inv;
  return Volume(volume.dims(), std::move(out), volume.spacing());
}

}  // namespace patchage
