#pragma once

// Synthetic texture-identity dataset: every class is a sum of random oriented
// gratings, and its samples perturb phases and amplitudes and add pixel noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/image.hpp"
#include "msdgr/random.hpp"

namespace msdgr {

struct SyntheticSpec {
  int classes = 20;
  int samples = 4;  // per class
  int height = 64;
  int width = 128;
  int components = 6;
  int shared = 0;  // leading components common to every class
  double phase_jitter = 0.3;  // radians, std-dev
  double amplitude_jitter = 0.1;
  double noise = 0.1;  // pixel std-dev
  std::uint64_t seed = 0;
};

struct SyntheticSample {
  std::string label;
  int class_index = 0;
  int sample_index = 0;
  Image image;
};

inline Image synthetic_image(const SyntheticSpec& spec, int class_index, int sample_index) {
  if (spec.height < 1 || spec.width < 1 || spec.components < 1 || spec.shared < 0 ||
      spec.shared > spec.components) {
    throw ParameterError("bad synthetic image spec");
  }
  struct Wave {
    double kx, ky, phase, amp;
  };
  auto draw = [](Rng& rng) {
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    const double lambda = std::exp(uniform(rng, std::log(4.0), std::log(16.0)));
    const double k = 2.0 * std::numbers::pi / lambda;
    return Wave{k * std::cos(theta), k * std::sin(theta), uniform(rng, 0.0, 2.0 * std::numbers::pi),
                uniform(rng, 0.5, 1.0)};
  };
  Rng common(derive_seed(spec.seed, ~std::uint64_t{0}));
  Rng crng(derive_seed(spec.seed, static_cast<std::uint64_t>(class_index)));
  std::vector<Wave> waves;
  for (int c = 0; c < spec.components; ++c) waves.push_back(draw(c < spec.shared ? common : crng));
  Rng srng(derive_seed(spec.seed, static_cast<std::uint64_t>(class_index), static_cast<std::uint64_t>(sample_index) + 1));
  double power = 0.0;
  for (Wave& w : waves) {
    w.phase += spec.phase_jitter * normal(srng);
    w.amp *= 1.0 + spec.amplitude_jitter * normal(srng);
    power += 0.5 * w.amp * w.amp;
  }
  const double scale = 0.5 / (3.0 * std::sqrt(power));  // +-3 std-dev maps to [0, 1]
  Image img(spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      double v = 0.0;
      for (const Wave& w : waves) v += w.amp * std::cos(w.kx * x + w.ky * y + w.phase);
      img.at(y, x) = std::clamp(0.5 + scale * v + spec.noise * normal(srng), 0.0, 1.0);
    }
  return img;
}

inline std::string synthetic_label(int class_index) {
  std::string digits = std::to_string(class_index);
  return "class" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

inline std::vector<SyntheticSample> synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.classes < 1 || spec.samples < 1) throw ParameterError("synthetic dataset needs classes and samples");
  std::vector<SyntheticSample> out;
  for (int c = 0; c < spec.classes; ++c)
    for (int s = 0; s < spec.samples; ++s) out.push_back({synthetic_label(c), c, s, synthetic_image(spec, c, s)});
  return out;
}

}  // namespace msdgr
