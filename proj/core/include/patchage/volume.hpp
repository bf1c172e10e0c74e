#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace patchage {

// Extents or coordinates ordered (x, y, z). Storage is x-fastest, z-slowest.
using Extent3 = std::array<std::size_t, 3>;
using Spacing3 = std::array<double, 3>;

std::string extent_str(const Extent3& e);

// Dense 3D scalar field.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Extent3 dims, Spacing3 spacing = {1.0, 1.0, 1.0});
  Volume(Extent3 dims, std::vector<double> values, Spacing3 spacing = {1.0, 1.0, 1.0});

  const Extent3& dims() const noexcept { return dims_; }
  const Spacing3& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return (z * dims_[1] + y) * dims_[0] + x;
  }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return values_[index(x, y, z)]; }
  double& at(std::size_t x, std::size_t y, std::size_t z) { return values_[index(x, y, z)]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool operator==(const Volume&) const = default;

 private:
  Extent3 dims_{0, 0, 0};
  Spacing3 spacing_{1.0, 1.0, 1.0};
  std::vector<double> values_;
};

// "PGV1" volume file (little-endian):
//   magic "PGV1" | u32 nx | u32 ny | u32 nz | u32 dtype (1 = float32)
//   | f64 spacing_x | f64 spacing_y | f64 spacing_z | nx*ny*nz float32, x fastest
// Values are stored as float32, so a round trip rounds to single precision.
void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_pgv(const std::filesystem::path& path);

// Single-file NIfTI-1 (.nii), little-endian, float32 datatype, 3D (or 4D with one frame),
// uncompressed. A non-zero scl_slope is applied.
Volume read_nifti(const std::filesystem::path& path);

// Dispatches on the file magic: PGV1 or NIfTI-1.
Volume read_volume(const std::filesystem::path& path);

}  // namespace patchage
