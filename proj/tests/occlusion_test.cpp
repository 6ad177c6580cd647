#include <gtest/gtest.h>

#include <cmath>

#include "msdgr/occlusion.hpp"

namespace msdgr {
namespace {

Image ramp(int H, int W) {
  Image img(H, W);
  for (std::size_t p = 0; p < img.size(); ++p) img.pixels[p] = static_cast<double>(p % 251) / 250.0;
  return img;
}

OcclusionSpec region_spec(OcclusionRegion r, double f) {
  OcclusionSpec s;
  s.kind = OcclusionKind::RectangleRegion;
  s.region = r;
  s.area_fraction = f;
  return s;
}

TEST(Occlude, UpperThirtyPercentMasksTopThirtyNineRows) {
  const auto rec = occlude(ramp(128, 256), region_spec(OcclusionRegion::Upper, 0.30));
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 256; ++x) ASSERT_EQ(rec.mask[y * 256 + x], y < 39 ? 1 : 0) << y << "," << x;
  EXPECT_EQ(rec.realized_fraction, 39.0 / 128.0);
}

TEST(Occlude, RegionsCoverTheNamedSide) {
  const int H = 64, W = 96;
  auto col_covered = [&](const OcclusionRecord& r, int x) {
    for (int y = 0; y < H; ++y)
      if (!r.mask[y * W + x]) return false;
    return true;
  };
  auto row_covered = [&](const OcclusionRecord& r, int y) {
    for (int x = 0; x < W; ++x)
      if (!r.mask[y * W + x]) return false;
    return true;
  };
  const Image img = ramp(H, W);
  const auto right = occlude(img, region_spec(OcclusionRegion::Right, 0.2));
  EXPECT_TRUE(col_covered(right, W - 1));
  EXPECT_FALSE(col_covered(right, 0));
  const auto left = occlude(img, region_spec(OcclusionRegion::Left, 0.2));
  EXPECT_TRUE(col_covered(left, 0));
  EXPECT_FALSE(col_covered(left, W - 1));
  const auto bottom = occlude(img, region_spec(OcclusionRegion::Bottom, 0.2));
  EXPECT_TRUE(row_covered(bottom, H - 1));
  EXPECT_FALSE(row_covered(bottom, 0));
  const auto both = occlude(img, region_spec(OcclusionRegion::Bilateral, 0.2));
  EXPECT_TRUE(col_covered(both, 0));
  EXPECT_TRUE(col_covered(both, W - 1));
  EXPECT_FALSE(col_covered(both, W / 2));
}

TEST(Occlude, RealizedFractionWithinTolerance) {
  const std::vector<std::pair<int, int>> sizes = {{128, 256}, {64, 64}, {37, 53}, {20, 30}};
  for (auto [H, W] : sizes) {
    const Image img = ramp(H, W);
    for (double f : {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.77}) {
      for (auto r : {OcclusionRegion::Right, OcclusionRegion::Left, OcclusionRegion::Upper, OcclusionRegion::Bottom,
                     OcclusionRegion::Bilateral}) {
        const auto rec = occlude(img, region_spec(r, f));
        EXPECT_NEAR(rec.realized_fraction, f, kOcclusionTolerance);
        EXPECT_EQ(rec.realized_fraction, double(rec.occluded_count()) / rec.mask.size());
      }
      for (auto kind : {OcclusionKind::RandomRectangle, OcclusionKind::RandomShape}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
          OcclusionSpec s;
          s.kind = kind;
          s.area_fraction = f;
          s.seed = seed;
          const auto rec = occlude(img, s);
          EXPECT_NEAR(rec.realized_fraction, f, kOcclusionTolerance) << H << "x" << W << " seed " << seed;
        }
      }
    }
  }
}

TEST(Occlude, ZeroFractionLeavesImageUntouched) {
  const Image img = ramp(32, 40);
  for (auto kind : {OcclusionKind::RectangleRegion, OcclusionKind::RandomRectangle, OcclusionKind::RandomShape}) {
    OcclusionSpec s;
    s.kind = kind;
    s.area_fraction = 0.0;
    const auto rec = occlude(img, s);
    EXPECT_EQ(rec.image, img);
    EXPECT_EQ(rec.occluded_count(), 0u);
  }
}

TEST(Occlude, RejectsUnachievableFractions) {
  const Image img = ramp(16, 16);
  for (double f : {1.0, 1.5, -0.1, std::nan("")}) {
    EXPECT_THROW(occlude(img, region_spec(OcclusionRegion::Upper, f)), ParameterError);
  }
  EXPECT_THROW(occlude(Image(1, 1), region_spec(OcclusionRegion::Upper, 0.3)), ParameterError);
  OcclusionSpec s;
  s.fill = OcclusionFill::Constant;
  s.fill_value = std::nan("");
  EXPECT_THROW(occlude(img, s), ParameterError);
}

TEST(Occlude, SeededDeterminism) {
  const Image img = ramp(48, 64);
  for (auto kind : {OcclusionKind::RectangleRegion, OcclusionKind::RandomRectangle, OcclusionKind::RandomShape}) {
    OcclusionSpec s;
    s.kind = kind;
    s.seed = 11;
    const auto a = occlude(img, s);
    const auto b = occlude(img, s);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, b.mask);
    s.seed = 12;
    const auto c = occlude(img, s);
    EXPECT_NE(a.image, c.image);
  }
}

TEST(Occlude, MaskIsExactlyTheModifiedPixels) {
  // Out-of-range sentinel: noise fill lies in [0, 1], so every masked pixel changes.
  const Image img(40, 60, -1.0);
  for (auto kind : {OcclusionKind::RectangleRegion, OcclusionKind::RandomRectangle, OcclusionKind::RandomShape}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      OcclusionSpec s;
      s.kind = kind;
      s.seed = seed;
      s.area_fraction = 0.35;
      const auto rec = occlude(img, s);
      for (std::size_t p = 0; p < img.size(); ++p) {
        ASSERT_EQ(rec.image.pixels[p] != img.pixels[p], rec.mask[p] == 1);
      }
    }
  }
}

TEST(Occlude, ConstantFill) {
  OcclusionSpec s = region_spec(OcclusionRegion::Left, 0.25);
  s.fill = OcclusionFill::Constant;
  s.fill_value = 0.5;
  const auto rec = occlude(ramp(10, 20), s);
  for (std::size_t p = 0; p < rec.mask.size(); ++p) {
    if (!rec.mask[p]) continue;
    EXPECT_EQ(rec.image.pixels[p], 0.5);
  }
  EXPECT_EQ(rec.mask_image().pixels[0], 1.0);
}

TEST(UsableArea, Formula) {
  EXPECT_EQ(usable_area(0, 1000), 100.0);
  EXPECT_EQ(usable_area(500, 1000), 50.0);
  EXPECT_DOUBLE_EQ(usable_area(std::vector<std::uint8_t>{1, 0, 0, 0}, 4), 75.0);
  EXPECT_THROW(usable_area(1, 0), ParameterError);
  EXPECT_THROW(usable_area(11, 10), ParameterError);
}

TEST(UsableArea, ReportingBins) {
  EXPECT_EQ(usable_area_bin(75), "70-80");
  EXPECT_EQ(usable_area_bin(70), "70-80");
  EXPECT_EQ(usable_area_bin(69.99), "60-70");
  EXPECT_EQ(usable_area_bin(50), "50-60");
  EXPECT_EQ(usable_area_bin(80), "");
  EXPECT_EQ(usable_area_bin(42), "");
}

}  // namespace
}  // namespace msdgr
