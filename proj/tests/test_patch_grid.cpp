#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "patchage/error.hpp"
#include "patchage/patch_grid.hpp"
#include "patchage/random.hpp"

using namespace patchage;

namespace {

Volume ramp(const Extent3& dims) {
  Volume v(dims);
  std::iota(v.values().begin(), v.values().end(), 0.0);
  return v;
}

std::vector<int> coverage(const GridSpec& g) {
  const auto& c = g.crop_dims;
  std::vector<int> cover(c[0] * c[1] * c[2], 0);
  for (const auto& ref : enumerate_patches(g)) {
    for (std::size_t z = 0; z < g.patch_size[2]; ++z) {
      for (std::size_t y = 0; y < g.patch_size[1]; ++y) {
        for (std::size_t x = 0; x < g.patch_size[0]; ++x) {
          ++cover[((ref.offset[2] + z) * c[1] + ref.offset[1] + y) * c[0] + ref.offset[0] + x];
        }
      }
    }
  }
  return cover;
}

}  // namespace

TEST(PatchGrid, FullScaleConfigurationHas27Patches) {
  const GridSpec g = GridSpec::full_scale();
  EXPECT_EQ(g.source_dims, (Extent3{182, 218, 182}));
  EXPECT_EQ(g.crop_dims, (Extent3{140, 176, 140}));
  const auto refs = enumerate_patches(g);
  ASSERT_EQ(refs.size(), 27u);
  EXPECT_EQ(axis_offsets(140, 64, 38, TilingMode::kExact), (std::vector<std::size_t>{0, 38, 76}));
  EXPECT_EQ(axis_offsets(176, 64, 56, TilingMode::kExact), (std::vector<std::size_t>{0, 56, 112}));
  std::set<Extent3> offsets;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    EXPECT_EQ(refs[i].index, i);
    offsets.insert(refs[i].offset);
  }
  EXPECT_EQ(offsets.size(), 27u);
  // z slowest, x fastest.
  EXPECT_EQ(refs[1].offset, (Extent3{38, 0, 0}));
  EXPECT_EQ(refs[3].offset, (Extent3{0, 56, 0}));
  EXPECT_EQ(refs[9].offset, (Extent3{0, 0, 38}));
  EXPECT_EQ(refs[26].offset, (Extent3{76, 112, 76}));
}

TEST(PatchGrid, FullScaleCropStartsAt21) {
  EXPECT_EQ(center_crop_start({182, 218, 182}, {140, 176, 140}), (Extent3{21, 21, 21}));
}

TEST(PatchGrid, DeskConfigurationHas27Patches) {
  EXPECT_EQ(patch_count(GridSpec::desk()), 27u);
  EXPECT_EQ(axis_offsets(88, 32, 28, TilingMode::kExact), (std::vector<std::size_t>{0, 28, 56}));
}

TEST(PatchGrid, PatchEqualToCropGivesOneRef) {
  GridSpec g;
  g.source_dims = g.crop_dims = g.patch_size = {5, 6, 7};
  g.stride = {1, 1, 1};
  const auto refs = enumerate_patches(g);
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(refs[0].offset, (Extent3{0, 0, 0}));
  const Volume v = ramp({5, 6, 7});
  EXPECT_EQ(extract_patch(v, refs[0], g), v);
}

TEST(PatchGrid, FullScaleGridCoversEveryVoxel) {
  for (int c : coverage(GridSpec::full_scale())) ASSERT_GE(c, 1);
}

TEST(PatchGrid, CountFormulaMatchesBruteForceOnRandomSpecs) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    GridSpec g;
    for (std::size_t a = 0; a < 3; ++a) {
      g.patch_size[a] = 1 + rng.below(5);
      g.stride[a] = 1 + rng.below(4);
      g.crop_dims[a] = g.patch_size[a] + g.stride[a] * rng.below(4);
      g.source_dims[a] = g.crop_dims[a] + rng.below(3);
    }
    std::size_t brute = 1;
    for (std::size_t a = 0; a < 3; ++a) {
      std::size_t n = 0;
      for (std::size_t o = 0; o + g.patch_size[a] <= g.crop_dims[a]; ++o) n += (o % g.stride[a] == 0);
      brute *= n;
    }
    EXPECT_EQ(patch_count(g), brute);
    EXPECT_EQ(enumerate_patches(g).size(), brute);
    bool gapless = true;
    for (std::size_t a = 0; a < 3; ++a) gapless &= g.stride[a] <= g.patch_size[a];
    if (gapless) {
      for (int c : coverage(g)) ASSERT_GE(c, 1);
    }
  }
}

TEST(PatchGrid, ExtractMatchesDirectIndexing) {
  GridSpec g = GridSpec::desk();
  const Volume v = ramp(g.crop_dims);
  Rng rng(12);
  const auto refs = enumerate_patches(g);
  for (int t = 0; t < 10; ++t) {
    const auto& ref = refs[rng.below(refs.size())];
    const Volume p = extract_patch(v, ref, g);
    for (int k = 0; k < 50; ++k) {
      const std::size_t x = rng.below(32), y = rng.below(32), z = rng.below(32);
      EXPECT_EQ(p.at(x, y, z), v.at(ref.offset[0] + x, ref.offset[1] + y, ref.offset[2] + z));
    }
  }
  EXPECT_NE(extract_patch(v, refs[0], g), extract_patch(v, refs[1], g));
}

TEST(PatchGrid, CenterCropIdentityAndOddDifferenceFloors) {
  const Volume v = ramp({70, 88, 70});
  EXPECT_EQ(center_crop(v, {70, 88, 70}), v);
  EXPECT_EQ(center_crop_start({9, 8, 7}, {4, 4, 4}), (Extent3{2, 2, 1}));
  const Volume c = center_crop(ramp({9, 8, 7}), {4, 4, 4});
  EXPECT_EQ(c.at(0, 0, 0), ramp({9, 8, 7}).at(2, 2, 1));
  EXPECT_THROW(center_crop(v, {71, 88, 70}), ConfigError);
}

TEST(PatchGrid, ValidationRejectsBadSpecs) {
  GridSpec g = GridSpec::desk();
  g.stride = {20, 28, 19};  // 70 - 32 = 38 is not a multiple of 20
  EXPECT_THROW(g.validate(), ConfigError);
  g.mode = TilingMode::kClampLast;
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(axis_offsets(70, 32, 20, TilingMode::kClampLast), (std::vector<std::size_t>{0, 20, 38}));
  GridSpec big = GridSpec::desk();
  big.patch_size = {71, 32, 32};
  EXPECT_THROW(big.validate(), ConfigError);
  GridSpec zero = GridSpec::desk();
  zero.stride = {0, 28, 19};
  EXPECT_THROW(zero.validate(), ConfigError);
}

TEST(PatchGrid, OutOfBoundsRefRejected) {
  const GridSpec g = GridSpec::desk();
  const Volume v = ramp(g.crop_dims);
  EXPECT_THROW(extract_patch(v, PatchRef{0, {39, 0, 0}}, g), ConfigError);
  EXPECT_THROW(extract_patch(ramp({10, 10, 10}), PatchRef{0, {0, 0, 0}}, g), ConfigError);
}
