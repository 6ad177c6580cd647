#pragma once

// Gabor filter bank frontend: binary real/imaginary sign channels plus an
// energy channel per filter, and patch-based feature graphs over them.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/graph.hpp"
#include "msdgr/image.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

struct GaborFilterParams {
  double orientation = 0.0;  // radians, direction of the carrier
  double wavelength = 4.0;   // pixels
  double sigma = 2.0;        // envelope std-dev, pixels
  double aspect = 1.0;       // envelope y/x aspect (gamma)
  double phase = 0.0;        // radians

  friend bool operator==(const GaborFilterParams&, const GaborFilterParams&) = default;
};

struct GaborKernel {
  GaborFilterParams params;
  int half = 0;  // kernel is (2 half + 1)^2
  Matrix re;
  Matrix im;

  int size() const { return 2 * half + 1; }
};

class GaborBank {
 public:
  static constexpr int kChannelsPerFilter = 3;

  GaborBank() = default;
  explicit GaborBank(const std::vector<GaborFilterParams>& params);

  const std::vector<GaborKernel>& kernels() const { return kernels_; }
  int filter_count() const { return static_cast<int>(kernels_.size()); }
  int channels() const { return kChannelsPerFilter * filter_count(); }
  int max_half() const { return max_half_; }
  int kernel_size() const { return 2 * max_half_ + 1; }

 private:
  std::vector<GaborKernel> kernels_;
  int max_half_ = 0;
};

inline constexpr int kGaborOrientations = 8;
inline constexpr int kGaborWavelengths = 5;
inline constexpr double kGaborMinWavelength = 3.0;
inline constexpr double kGaborMaxWavelength = 12.0;
inline constexpr int kDefaultPatchScale = 9;

// 8 orientations x 5 wavelengths log-spaced over [3, 12], sigma = wavelength / 2.
// Filter index = wavelength_index * 8 + orientation_index.
inline std::vector<GaborFilterParams> default_gabor_params() {
  std::vector<GaborFilterParams> out;
  for (int m = 0; m < kGaborWavelengths; ++m) {
    const double t = static_cast<double>(m) / (kGaborWavelengths - 1);
    const double lambda = kGaborMinWavelength * std::pow(kGaborMaxWavelength / kGaborMinWavelength, t);
    for (int k = 0; k < kGaborOrientations; ++k) {
      out.push_back({k * std::numbers::pi / kGaborOrientations, lambda, 0.5 * lambda, 1.0, 0.0});
    }
  }
  return out;
}

inline GaborKernel make_gabor_kernel(const GaborFilterParams& p) {
  if (!(p.wavelength > 0.0) || !(p.sigma > 0.0) || !(p.aspect > 0.0)) {
    std::ostringstream os;
    os << "gabor filter needs positive wavelength, sigma and aspect (got " << p.wavelength << ", " << p.sigma
       << ", " << p.aspect << ")";
    throw ParameterError(os.str());
  }
  if (!std::isfinite(p.orientation) || !std::isfinite(p.phase)) throw ParameterError("gabor angle is not finite");
  GaborKernel k;
  k.params = p;
  k.half = static_cast<int>(std::ceil(3.0 * p.sigma * std::max(1.0, 1.0 / p.aspect)));
  const int n = k.size();
  k.re.resize(n, n);
  k.im.resize(n, n);
  Matrix env(n, n);
  const double c = std::cos(p.orientation), s = std::sin(p.orientation);
  for (int y = -k.half; y <= k.half; ++y) {
    for (int x = -k.half; x <= k.half; ++x) {
      const double xr = x * c + y * s;
      const double yr = -x * s + y * c;
      const double e = std::exp(-(xr * xr + p.aspect * p.aspect * yr * yr) / (2.0 * p.sigma * p.sigma));
      const double arg = 2.0 * std::numbers::pi * xr / p.wavelength + p.phase;
      env(y + k.half, x + k.half) = e;
      k.re(y + k.half, x + k.half) = e * std::cos(arg);
      k.im(y + k.half, x + k.half) = e * std::sin(arg);
    }
  }
  // Remove the DC component with the envelope shape, then normalise by the
  // envelope mass so filters of different size respond on the same scale.
  const double mass = env.sum();
  k.re -= (k.re.sum() / mass) * env;
  k.im -= (k.im.sum() / mass) * env;
  k.re /= mass;
  k.im /= mass;
  return k;
}

inline GaborBank::GaborBank(const std::vector<GaborFilterParams>& params) {
  if (params.empty()) throw ParameterError("gabor bank needs at least one filter");
  for (const auto& p : params) {
    kernels_.push_back(make_gabor_kernel(p));
    max_half_ = std::max(max_half_, kernels_.back().half);
  }
}

inline GaborBank default_gabor_bank() { return GaborBank(default_gabor_params()); }

// Bank config: one filter per line, "orientation_deg wavelength sigma aspect
// phase_deg", separated by whitespace or commas. '#' starts a comment.
inline std::vector<GaborFilterParams> parse_gabor_config(std::istream& in, const std::string& origin = "bank") {
  std::vector<GaborFilterParams> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(origin + ":" + std::to_string(lineno) + ": not a number '" + tok + "'");
      }
    }
    if (v.empty()) continue;
    if (v.size() != 5) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(v.size()));
    }
    constexpr double deg = std::numbers::pi / 180.0;
    out.push_back({v[0] * deg, v[1], v[2], v[3], v[4] * deg});
  }
  return out;
}

inline GaborBank load_gabor_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open gabor bank config '" + path + "'");
  return GaborBank(parse_gabor_config(in, path));
}

inline void write_gabor_config(std::ostream& out, const std::vector<GaborFilterParams>& params) {
  constexpr double deg = 180.0 / std::numbers::pi;
  out << "# orientation_deg wavelength sigma aspect phase_deg\n";
  out.precision(17);
  for (const auto& p : params) {
    out << p.orientation * deg << " " << p.wavelength << " " << p.sigma << " " << p.aspect << " "
        << p.phase * deg << "\n";
  }
}

namespace detail {

// numpy-style "reflect" index (edge sample not repeated); requires pad < n.
inline int reflect_index(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace detail

// Channel layout: [3f] = sign(real), [3f+1] = sign(imag), [3f+2] = |response|,
// with sign(0) = +1. Responses are correlations of the kernel with the image
// relative to the centre pixel, so uniform regions give exactly zero.
inline Tensor3 extract(const GaborBank& bank, const Image& image) {
  if (bank.filter_count() == 0) throw ParameterError("empty gabor bank");
  const int H = image.height, W = image.width;
  const int pad = bank.max_half();
  if (H < bank.kernel_size() || W < bank.kernel_size()) {
    std::ostringstream os;
    os << "image " << H << "x" << W << " is smaller than the " << bank.kernel_size() << "x"
       << bank.kernel_size() << " gabor kernel";
    throw ShapeError(os.str());
  }
  const int PW = W + 2 * pad;
  std::vector<double> padded(static_cast<std::size_t>(H + 2 * pad) * PW);
  for (int y = 0; y < H + 2 * pad; ++y) {
    const int sy = detail::reflect_index(y - pad, H);
    for (int x = 0; x < PW; ++x) {
      padded[static_cast<std::size_t>(y) * PW + x] = image.at(sy, detail::reflect_index(x - pad, W));
    }
  }

  Tensor3 out(bank.channels(), H, W);
  std::vector<double> re(static_cast<std::size_t>(H) * W), im(re.size());
  for (int f = 0; f < bank.filter_count(); ++f) {
    const GaborKernel& k = bank.kernels()[f];
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int dy = -k.half; dy <= k.half; ++dy) {
      for (int dx = -k.half; dx <= k.half; ++dx) {
        const double kr = k.re(dy + k.half, dx + k.half);
        const double ki = k.im(dy + k.half, dx + k.half);
        for (int y = 0; y < H; ++y) {
          const double* src = &padded[static_cast<std::size_t>(y + dy + pad) * PW + dx + pad];
          const double* ctr = &image.pixels[static_cast<std::size_t>(y) * W];
          double* r = &re[static_cast<std::size_t>(y) * W];
          double* m = &im[static_cast<std::size_t>(y) * W];
          for (int x = 0; x < W; ++x) {
            const double d = src[x] - ctr[x];
            r[x] += kr * d;
            m[x] += ki * d;
          }
        }
      }
    }
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double a = re[static_cast<std::size_t>(y) * W + x];
        const double b = im[static_cast<std::size_t>(y) * W + x];
        out(3 * f, y, x) = a >= 0.0 ? 1.0 : -1.0;
        out(3 * f + 1, y, x) = b >= 0.0 ? 1.0 : -1.0;
        out(3 * f + 2, y, x) = std::sqrt(a * a + b * b);
      }
    }
  }
  return out;
}

// Energy channels only (F x H x W), used for energy-peak node localisation.
inline Tensor3 gabor_energy(const Tensor3& features) {
  if (features.channels() % GaborBank::kChannelsPerFilter != 0) {
    throw ShapeError("gabor tensor channel count is not a multiple of 3");
  }
  const int F = features.channels() / GaborBank::kChannelsPerFilter;
  Tensor3 out(F, features.height(), features.width());
  for (int f = 0; f < F; ++f)
    for (int y = 0; y < features.height(); ++y)
      for (int x = 0; x < features.width(); ++x) out(f, y, x) = features(3 * f + 2, y, x);
  return out;
}

// Nodes are flattened C x S x S patches around each coordinate (rounded to the
// nearest pixel and clamped so the patch stays inside the map). The clamped
// centres are the recorded node coordinates; adjacency uses radius S.
inline FeatureGraph graph_from_gabor(const Tensor3& features, const NodeCoords& coords, int s = kDefaultPatchScale,
                                     ScaleId scale = ScaleId::Medium) {
  if (s < 1 || s % 2 == 0) throw ParameterError("patch scale must be a positive odd number, got " + std::to_string(s));
  const int H = features.height(), W = features.width(), C = features.channels();
  if (H < s || W < s) throw ShapeError("feature map smaller than the patch scale");
  const int h = s / 2;
  FeatureGraph g;
  g.nodes.resize(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(C) * s * s);
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const Point& p = coords[n];
    if (!(p.i >= 0 && p.i <= H - 1 && p.j >= 0 && p.j <= W - 1)) {
      std::ostringstream os;
      os << "patch centre (" << p.i << ", " << p.j << ") outside the " << H << "x" << W << " map";
      throw OutOfBoundsError(os.str());
    }
    const int ci = std::clamp(static_cast<int>(std::lround(p.i)), h, H - 1 - h);
    const int cj = std::clamp(static_cast<int>(std::lround(p.j)), h, W - 1 - h);
    g.coords.push_back({static_cast<double>(ci), static_cast<double>(cj)});
    double* row = g.nodes.row(static_cast<Eigen::Index>(n)).data();
    for (int c = 0; c < C; ++c)
      for (int y = ci - h; y <= ci + h; ++y)
        for (int x = cj - h; x <= cj + h; ++x) *row++ = features(c, y, x);
  }
  g.adjacency = build_adjacency(g.coords, s);
  g.radius = s;
  g.scale = scale;
  return g;
}

}  // namespace msdgr
