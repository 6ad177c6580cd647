#pragma once

// Synthetic occlusion of images and the usable-area quality measure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/image.hpp"
#include "msdgr/random.hpp"

namespace msdgr {

enum class OcclusionKind { RectangleRegion, RandomRectangle, RandomShape };
enum class OcclusionRegion { Right, Left, Upper, Bottom, Bilateral };
enum class OcclusionFill { Noise, Constant };

inline constexpr double kOcclusionTolerance = 0.02;

struct OcclusionSpec {
  OcclusionKind kind = OcclusionKind::RectangleRegion;
  OcclusionRegion region = OcclusionRegion::Right;
  double area_fraction = 0.3;
  OcclusionFill fill = OcclusionFill::Noise;
  double fill_value = 0.0;
  std::uint64_t seed = 0;
};

struct OcclusionRecord {
  Image image;
  std::vector<std::uint8_t> mask;  // 1 = occluded, row-major like the image
  double realized_fraction = 0.0;

  std::size_t occluded_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
  Image mask_image() const {
    Image m(image.height, image.width);
    for (std::size_t p = 0; p < mask.size(); ++p) m.pixels[p] = mask[p];
    return m;
  }
};

inline OcclusionKind parse_occlusion_kind(const std::string& s) {
  if (s == "rectangle-region") return OcclusionKind::RectangleRegion;
  if (s == "random-rectangle") return OcclusionKind::RandomRectangle;
  if (s == "random-shape") return OcclusionKind::RandomShape;
  throw ParameterError("unknown occlusion kind '" + s + "'");
}

inline OcclusionRegion parse_occlusion_region(const std::string& s) {
  if (s == "right") return OcclusionRegion::Right;
  if (s == "left") return OcclusionRegion::Left;
  if (s == "upper") return OcclusionRegion::Upper;
  if (s == "bottom") return OcclusionRegion::Bottom;
  if (s == "bilateral") return OcclusionRegion::Bilateral;
  throw ParameterError("unknown occlusion region '" + s + "'");
}

inline OcclusionFill parse_occlusion_fill(const std::string& s) {
  if (s == "noise") return OcclusionFill::Noise;
  if (s == "constant") return OcclusionFill::Constant;
  throw ParameterError("unknown occlusion fill '" + s + "'");
}

namespace detail {

using Mask = std::vector<std::uint8_t>;

// Whole rows/columns: ceil(f * extent). When that misses the tolerance (small
// images) the band is completed with a partial line to the exact pixel count.
inline Mask region_mask(int H, int W, OcclusionRegion region, double f) {
  Mask m(static_cast<std::size_t>(H) * W, 0);
  const auto total = static_cast<double>(H) * W;
  auto band = [&](bool horizontal, bool from_start, double frac) {
    const int extent = horizontal ? H : W;
    const int other = horizontal ? W : H;
    int lines = static_cast<int>(std::ceil(frac * extent - 1e-9));
    lines = std::clamp(lines, 0, extent);
    long long want = static_cast<long long>(lines) * other;
    const long long exact = std::llround(frac * total);
    if (std::abs(static_cast<double>(want - exact)) / total > kOcclusionTolerance / 2) want = exact;
    // Fill `want` pixels line by line, starting at the named side.
    for (long long k = 0; k < want; ++k) {
      const int line = static_cast<int>(k / other);
      const int pos = static_cast<int>(k % other);
      const int l = from_start ? line : extent - 1 - line;
      const int y = horizontal ? l : pos;
      const int x = horizontal ? pos : l;
      m[static_cast<std::size_t>(y) * W + x] = 1;
    }
  };
  switch (region) {
    case OcclusionRegion::Upper: band(true, true, f); break;
    case OcclusionRegion::Bottom: band(true, false, f); break;
    case OcclusionRegion::Left: band(false, true, f); break;
    case OcclusionRegion::Right: band(false, false, f); break;
    case OcclusionRegion::Bilateral:
      band(false, true, f / 2);
      band(false, false, f / 2);
      break;
  }
  return m;
}

inline Mask random_rectangle_mask(int H, int W, double f, Rng& rng) {
  const double total = static_cast<double>(H) * W;
  const double target = f * total;
  int h = 0, w = 0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double aspect = std::exp(uniform(rng, std::log(0.25), std::log(4.0)));  // h / w
    h = std::clamp(static_cast<int>(std::lround(std::sqrt(target * aspect))), 1, H);
    w = std::clamp(static_cast<int>(std::lround(target / h)), 1, W);
    if (std::abs(h * static_cast<double>(w) - target) / total <= kOcclusionTolerance / 2) break;
    h = 0;
  }
  if (h == 0) {  // extreme aspect ratios failed; full-width strip
    w = W;
    h = std::clamp(static_cast<int>(std::lround(target / W)), 1, H);
  }
  const int y0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(H - h + 1)));
  const int x0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(W - w + 1)));
  Mask m(static_cast<std::size_t>(H) * W, 0);
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) m[static_cast<std::size_t>(y) * W + x] = 1;
  return m;
}

// Union of 1-4 random ellipses scaled by a common factor. Pixels are ranked by
// their smallest normalised ellipse radius and exactly round(f * H * W) of the
// lowest-ranked are taken, i.e. the union grown until it covers the target.
inline Mask random_shape_mask(int H, int W, double f, Rng& rng) {
  struct Ellipse {
    double ci, cj, a, b, c, s;
  };
  const int count = 1 + static_cast<int>(uniform_index(rng, 4));
  std::vector<Ellipse> es;
  for (int k = 0; k < count; ++k) {
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    es.push_back({uniform(rng, 0.0, H - 1.0), uniform(rng, 0.0, W - 1.0), uniform(rng, 0.5, 1.5),
                  uniform(rng, 0.5, 1.5), std::cos(theta), std::sin(theta)});
  }
  const std::size_t n = static_cast<std::size_t>(H) * W;
  std::vector<double> rank(n);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (const Ellipse& e : es) {
        const double dy = y - e.ci, dx = x - e.cj;
        const double u = (dx * e.c + dy * e.s) / e.a;
        const double v = (-dx * e.s + dy * e.c) / e.b;
        best = std::min(best, u * u + v * v);
      }
      rank[static_cast<std::size_t>(y) * W + x] = best;
    }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto take = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  Mask m(n, 0);
  for (std::size_t k = 0; k < take; ++k) m[order[k]] = 1;
  return m;
}

}  // namespace detail

// Noise fill draws i.i.d. uniform values over the nominal [0, 1] pixel range,
// in raster order of the masked pixels, after any geometry draws.
inline OcclusionRecord occlude(const Image& image, const OcclusionSpec& spec) {
  const double f = spec.area_fraction;
  if (!(f >= 0.0 && f < 1.0)) {
    throw ParameterError("occlusion area fraction must lie in [0, 1), got " + std::to_string(f));
  }
  if (spec.fill == OcclusionFill::Constant && !std::isfinite(spec.fill_value)) {
    throw ParameterError("occlusion fill value must be finite");
  }
  const int H = image.height, W = image.width;
  if (H <= 0 || W <= 0) throw ShapeError("cannot occlude an empty image");
  Rng rng(spec.seed);
  detail::Mask mask(static_cast<std::size_t>(H) * W, 0);
  if (f > 0.0) {
    switch (spec.kind) {
      case OcclusionKind::RectangleRegion: mask = detail::region_mask(H, W, spec.region, f); break;
      case OcclusionKind::RandomRectangle: mask = detail::random_rectangle_mask(H, W, f, rng); break;
      case OcclusionKind::RandomShape: mask = detail::random_shape_mask(H, W, f, rng); break;
    }
  }
  OcclusionRecord rec{image, std::move(mask), 0.0};
  const std::size_t count = rec.occluded_count();
  rec.realized_fraction = static_cast<double>(count) / static_cast<double>(rec.mask.size());
  if (std::abs(rec.realized_fraction - f) > kOcclusionTolerance) {
    throw ParameterError("occlusion fraction " + std::to_string(f) + " is not achievable on a " +
                         std::to_string(H) + "x" + std::to_string(W) + " image");
  }
  for (std::size_t p = 0; p < rec.mask.size(); ++p) {
    if (!rec.mask[p]) continue;
    rec.image.pixels[p] = spec.fill == OcclusionFill::Noise ? uniform01(rng) : spec.fill_value;
  }
  return rec;
}

// Percentage of the iris region left visible: (1 - occluded / iris) * 100.
inline double usable_area(std::size_t occluded, std::size_t iris_area) {
  if (iris_area == 0) throw ParameterError("iris area must be positive");
  if (occluded > iris_area) throw ParameterError("occluded pixel count exceeds the iris area");
  return (1.0 - static_cast<double>(occluded) / static_cast<double>(iris_area)) * 100.0;
}

inline double usable_area(const std::vector<std::uint8_t>& mask, std::size_t iris_area) {
  return usable_area(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)), iris_area);
}

// Reporting subsets 70-80, 60-70 and 50-60 percent, each [low, high); empty
// string outside them.
inline std::string usable_area_bin(double percent) {
  for (int lo : {70, 60, 50}) {
    if (percent >= lo && percent < lo + 10) return std::to_string(lo) + "-" + std::to_string(lo + 10);
  }
  return "";
}

}  // namespace msdgr
