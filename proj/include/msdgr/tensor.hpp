#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "msdgr/error.hpp"

namespace msdgr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Dense C x H x W feature map, row-major in (c, h, w).
class Tensor3 {
 public:
  Tensor3() = default;

  Tensor3(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0) {
      std::ostringstream os;
      os << "tensor dims must be positive, got " << channels << "x" << height << "x" << width;
      throw ShapeError(os.str());
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  Tensor3(int channels, int height, int width, std::vector<double> data)
      : Tensor3(channels, height, width) {
    if (data.size() != data_.size()) {
      throw ShapeError("tensor data length does not match C*H*W");
    }
    data_ = std::move(data);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int c, int h, int w) { return data_[index(c, h, w)]; }
  const double& operator()(int c, int h, int w) const { return data_[index(c, h, w)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(int c, int h, int w) const {
    return (static_cast<std::size_t>(c) * height_ + h) * width_ + w;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Channel vector at fractional position (i, j), bilinear between the four
// surrounding pixels. Integer positions reproduce direct indexing exactly.
inline Vector bilinear_sample(const Tensor3& map, double i, double j) {
  const int H = map.height();
  const int W = map.width();
  if (!(i >= 0.0 && i <= H - 1 && j >= 0.0 && j <= W - 1)) {
    std::ostringstream os;
    os << "sample coordinate (" << i << ", " << j << ") outside [0, " << H - 1 << "]x[0, " << W - 1
       << "]";
    throw OutOfBoundsError(os.str());
  }
  const int i0 = static_cast<int>(std::floor(i));
  const int j0 = static_cast<int>(std::floor(j));
  const int i1 = std::min(i0 + 1, H - 1);
  const int j1 = std::min(j0 + 1, W - 1);
  const double di = i - i0;
  const double dj = j - j0;
  const double w00 = (1.0 - di) * (1.0 - dj);
  const double w01 = (1.0 - di) * dj;
  const double w10 = di * (1.0 - dj);
  const double w11 = di * dj;

  Vector out(map.channels());
  for (int c = 0; c < map.channels(); ++c) {
    out(c) = w00 * map(c, i0, j0) + w01 * map(c, i0, j1) + w10 * map(c, i1, j0) +
             w11 * map(c, i1, j1);
  }
  return out;
}

}  // namespace msdgr
