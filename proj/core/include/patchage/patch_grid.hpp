#pragma once

#include <vector>

#include "patchage/volume.hpp"

namespace patchage {

enum class TilingMode {
  // (crop - patch) must be a multiple of stride on every axis.
  kExact,
  // Non-divisible axes get one extra position clamped to crop - patch.
  kClampLast,
};

struct GridSpec {
  Extent3 source_dims{70, 88, 70};
  Extent3 crop_dims{70, 88, 70};
  Extent3 patch_size{32, 32, 32};
  Extent3 stride{19, 28, 19};
  TilingMode mode = TilingMode::kExact;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const GridSpec&) const = default;

  // Crop 182x218x182 -> 140x176x140, 64^3 patches, stride 38x56x38.
  static GridSpec full_scale();
  // Half the full-scale cropped extents per axis: 70x88x70, 32^3 patches, stride 19x28x19.
  static GridSpec desk();
};

struct PatchRef {
  std::size_t index = 0;
  Extent3 offset{0, 0, 0};  // within the cropped volume

  bool operator==(const PatchRef&) const = default;
};

// Start of a centered crop per axis: floor((source - crop) / 2).
Extent3 center_crop_start(const Extent3& source_dims, const Extent3& crop_dims);

Volume center_crop(const Volume& volume, const Extent3& crop_dims);

// Axis positions {0, stride, ..., crop - patch} (plus the clamped last position in
// kClampLast mode).
std::vector<std::size_t> axis_offsets(std::size_t crop, std::size_t patch, std::size_t stride,
                                      TilingMode mode);

// Patch refs ordered z slowest, x fastest; index i is the position in that order.
std::vector<PatchRef> enumerate_patches(const GridSpec& spec);

std::size_t patch_count(const GridSpec& spec);

// Copies the patch block out of a volume of extent spec.crop_dims.
Volume extract_patch(const Volume& cropped, const PatchRef& ref, const GridSpec& spec);

// Same as extract_patch but writes into a caller-provided buffer of patch_size voxels.
void extract_patch_into(const Volume& cropped, const PatchRef& ref, const GridSpec& spec,
                        std::span<double> out);

}  // namespace patchage
