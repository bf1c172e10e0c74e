#include "patchage/patch_grid.hpp"

#include <algorithm>

#include "patchage/error.hpp"

namespace patchage {

namespace {
constexpr const char* kAxisNames[3] = {"x", "y", "z"};
}

void GridSpec::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    const std::string axis = kAxisNames[a];
    if (source_dims[a] == 0 || crop_dims[a] == 0 || patch_size[a] == 0) {
      throw ConfigError("grid: extents must be positive on axis " + axis);
    }
    if (stride[a] == 0) throw ConfigError("grid: stride must be positive on axis " + axis);
    if (crop_dims[a] > source_dims[a]) {
      throw ConfigError("grid: crop " + extent_str(crop_dims) + " exceeds source " +
                        extent_str(source_dims) + " on axis " + axis);
    }
    if (patch_size[a] > crop_dims[a]) {
      throw ConfigError("grid: patch " + extent_str(patch_size) + " exceeds crop " +
                        extent_str(crop_dims) + " on axis " + axis);
    }
    if (mode == TilingMode::kExact && (crop_dims[a] - patch_size[a]) % stride[a] != 0) {
      throw ConfigError("grid: (crop - patch) = " + std::to_string(crop_dims[a] - patch_size[a]) +
                        " is not a multiple of stride " + std::to_string(stride[a]) + " on axis " +
                        axis + " (exact tiling)");
    }
  }
}

GridSpec GridSpec::full_scale() {
  return GridSpec{{182, 218, 182}, {140, 176, 140}, {64, 64, 64}, {38, 56, 38}, TilingMode::kExact};
}

GridSpec GridSpec::desk() { return GridSpec{}; }

Extent3 center_crop_start(const Extent3& source_dims, const Extent3& crop_dims) {
  Extent3 start{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (crop_dims[a] > source_dims[a] || crop_dims[a] == 0) {
      throw ConfigError("center_crop: crop " + extent_str(crop_dims) + " does not fit in " +
                        extent_str(source_dims));
    }
    start[a] = (source_dims[a] - crop_dims[a]) / 2;
  }
  return start;
}

Volume center_crop(const Volume& volume, const Extent3& crop_dims) {
  const Extent3 start = center_crop_start(volume.dims(), crop_dims);
  Volume out(crop_dims, volume.spacing());
  for (std::size_t z = 0; z < crop_dims[2]; ++z) {
    for (std::size_t y = 0; y < crop_dims[1]; ++y) {
      const double* src = &volume.values()[volume.index(start[0], start[1] + y, start[2] + z)];
      std::copy(src, src + crop_dims[0], &out.values()[out.index(0, y, z)]);
    }
  }
  return out;
}

std::vector<std::size_t> axis_offsets(std::size_t crop, std::size_t patch, std::size_t stride,
                                      TilingMode mode) {
  std::vector<std::size_t> offsets;
  const std::size_t last = crop - patch;
  for (std::size_t o = 0; o <= last; o += stride) offsets.push_back(o);
  if (mode == TilingMode::kClampLast && offsets.back() != last) offsets.push_back(last);
  return offsets;
}

std::vector<PatchRef> enumerate_patches(const GridSpec& spec) {
  spec.validate();
  std::array<std::vector<std::size_t>, 3> per_axis;
  for (std::size_t a = 0; a < 3; ++a) {
    per_axis[a] = axis_offsets(spec.crop_dims[a], spec.patch_size[a], spec.stride[a], spec.mode);
  }
  std::vector<PatchRef> refs;
  refs.reserve(per_axis[0].size() * per_axis[1].size() * per_axis[2].size());
  for (auto z : per_axis[2]) {
    for (auto y : per_axis[1]) {
      for (auto x : per_axis[0]) refs.push_back({refs.size(), {x, y, z}});
    }
  }
  return refs;
}

std::size_t patch_count(const GridSpec& spec) { return enumerate_patches(spec).size(); }

void extract_patch_into(const Volume& cropped, const PatchRef& ref, const GridSpec& spec,
                        std::span<double> out) {
  if (cropped.dims() != spec.crop_dims) {
    throw ShapeError("extract_patch: volume is " + extent_str(cropped.dims()) + " but grid crop is " +
                     extent_str(spec.crop_dims));
  }
  const Extent3& p = spec.patch_size;
  for (std::size_t a = 0; a < 3; ++a) {
    if (ref.offset[a] + p[a] > spec.crop_dims[a]) {
      throw ConfigError("extract_patch: patch " + std::to_string(ref.index) + " at offset " +
                        extent_str(ref.offset) + " leaves the crop on axis " + kAxisNames[a]);
    }
  }
  if (out.size() != p[0] * p[1] * p[2]) {
    throw ShapeError("extract_patch: output buffer has " + std::to_string(out.size()) + " voxels");
  }
  for (std::size_t z = 0; z < p[2]; ++z) {
    for (std::size_t y = 0; y < p[1]; ++y) {
      const double* src =
          &cropped.values()[cropped.index(ref.offset[0], ref.offset[1] + y, ref.offset[2] + z)];
      std::copy(src, src + p[0], out.data() + (z * p[1] + y) * p[0]);
    }
  }
}

Volume extract_patch(const Volume& cropped, const PatchRef& ref, const GridSpec& spec) {
  Volume out(spec.patch_size, cropped.spacing());
  extract_patch_into(cropped, ref, spec, out.values());
  return out;
}

}  // namespace patchage
