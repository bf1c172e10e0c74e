#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchage/patch_grid.hpp"
#include "patchage/volume.hpp"

namespace patchage {

// Generative model of an age-encoding synthetic scan: a centered "brain" ellipsoid whose
// semi-axes shrink linearly with age and a centered "ventricle" ellipsoid whose
// semi-axes grow linearly with age, plus additive Gaussian noise. Boundary voxels carry
// partial-volume intensities.
struct PhantomParams {
  Extent3 dims{70, 88, 70};
  Spacing3 spacing{2.0, 2.0, 2.0};
  double age_min = 44.0;
  double age_max = 73.0;

  std::array<double, 3> brain_semi_axes_at_min_age{30.0, 38.0, 30.0};  // voxels
  double brain_shrink_per_year = 0.002;  // fraction of the min-age semi-axes
  std::array<double, 3> ventricle_semi_axes_at_min_age{11.0, 7.5, 11.0};  // voxels
  double ventricle_growth_per_year = 0.015;  // fraction of the min-age semi-axes
  // Per-subject uniform scale factor in [1 - j, 1 + j] applied to the brain only;
  // independent of age.
  double head_size_jitter = 0.05;

  double tissue_intensity = 1.0;
  double ventricle_intensity = 0.2;
  double background_intensity = 0.0;
  double noise_sigma = 0.05;

  std::uint64_t seed = 1234;
  int supersampling = 3;  // partial-volume samples per axis for boundary voxels

  // Throws ConfigError when the ventricle can leave the brain, the brain can leave the
  // field of view, or intensities are closer than 3 * noise_sigma.
  void validate() const;

  bool operator==(const PhantomParams&) const = default;
};

std::array<double, 3> brain_semi_axes(const PhantomParams& params, double age, double size_factor = 1.0);
std::array<double, 3> ventricle_semi_axes(const PhantomParams& params, double age);
std::array<double, 3> phantom_center(const PhantomParams& params);

Volume generate_phantom(double age, const PhantomParams& params, std::uint64_t subject_seed);

// Patches whose block intersects the ventricle at age_max, when the phantom is cropped
// by `grid`. These are the patches carrying the direct age signal.
std::vector<std::size_t> ventricle_patches(const PhantomParams& params, const GridSpec& grid);

struct Subject {
  std::string id;
  double age_years = 0.0;
  std::filesystem::path volume_path;  // relative to the manifest directory unless absolute

  bool operator==(const Subject&) const = default;
};

// Writes volumes/<id>.pgv and manifest.csv under out_dir. Subject i draws its age and
// voxels from a stream seeded by (master_seed, i), so `jobs` does not change the output.
std::vector<Subject> generate_dataset(std::size_t n, const PhantomParams& params,
                                      std::uint64_t master_seed, const std::filesystem::path& out_dir,
                                      std::size_t jobs = 1, const std::string& config_hash = "");

// Manifest CSV: header "id,age_years,path", optional leading "# key: value" comment lines.
void write_manifest(const std::filesystem::path& path, const std::vector<Subject>& subjects,
                    const std::string& config_hash = "");
std::vector<Subject> read_manifest(const std::filesystem::path& path);
// Value of the "# config_hash:" comment, or empty.
std::string read_manifest_hash(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.80;
  double val = 0.15;
  double test = 0.05;
};

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  SplitRatios ratios;
};

// Deterministic shuffled partition. Validation and test sizes are floor(n * ratio); the
// remainder goes to training. Throws ConfigError when a part would be empty.
DatasetSplit split_dataset(const std::vector<Subject>& subjects, const SplitRatios& ratios,
                           std::uint64_t seed);

// Zero mean, unit (population) variance over all voxels. Throws NumericError on a
// constant volume.
Volume normalize_volume(const Volume& volume);

}  // namespace patchage
