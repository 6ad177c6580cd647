#include <gtest/gtest.h>

#include "msdgr/random.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {
namespace {

TEST(Tensor3, RejectsMismatchedData) {
  EXPECT_THROW(Tensor3(2, 2, 2, std::vector<double>(7)), ShapeError);
  EXPECT_THROW(Tensor3(0, 2, 2), ShapeError);
}

TEST(BilinearSample, IntegerCoordinateIsDirectIndexing) {
  Tensor3 map(5, 4, 6);
  for (int c = 0; c < 5; ++c) map(c, 2, 3) = c;
  const Vector v = bilinear_sample(map, 2.0, 3.0);
  for (int c = 0; c < 5; ++c) EXPECT_EQ(v(c), c);
}

TEST(BilinearSample, IntegerCoordinatesMatchExactlyOnRandomMaps) {
  Rng rng(3);
  Tensor3 map(3, 5, 7);
  for (double& v : map.data()) v = normal(rng);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) {
      const Vector v = bilinear_sample(map, i, j);
      for (int c = 0; c < 3; ++c) EXPECT_EQ(v(c), map(c, i, j));
    }
}

TEST(BilinearSample, ConstantMap) {
  Tensor3 map(3, 4, 4, 2.5);
  const Vector v = bilinear_sample(map, 1.37, 2.91);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(v(c), 2.5);
}

TEST(BilinearSample, HandEvaluatedCenter) {
  Tensor3 map(1, 2, 2, {0.0, 1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(bilinear_sample(map, 0.5, 0.5)(0), 1.5);
}

TEST(BilinearSample, OutOfBounds) {
  Tensor3 map(1, 3, 3);
  EXPECT_THROW(bilinear_sample(map, -0.01, 1.0), OutOfBoundsError);
  EXPECT_THROW(bilinear_sample(map, 1.0, 2.0001), OutOfBoundsError);
  EXPECT_NO_THROW(bilinear_sample(map, 2.0, 2.0));
}

TEST(BilinearSample, LipschitzAlongEachAxis) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor3 map(2, 6, 5);
    double peak = 0.0;
    for (double& v : map.data()) {
      v = uniform(rng, -3, 3);
      peak = std::max(peak, std::abs(v));
    }
    const double i = uniform(rng, 0, 4.9), j = uniform(rng, 0, 3.9);
    const double eps = uniform(rng, 0, 0.1);
    const Vector base = bilinear_sample(map, i, j);
    const Vector di = bilinear_sample(map, i + eps, j);
    const Vector dj = bilinear_sample(map, i, j + eps);
    for (int c = 0; c < 2; ++c) {
      EXPECT_LE(std::abs(di(c) - base(c)), eps * 2 * peak + 1e-12);
      EXPECT_LE(std::abs(dj(c) - base(c)), eps * 2 * peak + 1e-12);
    }
  }
}

}  // namespace
}  // namespace msdgr
