#pragma once

// Forward passes for the two fixed architectures used by the pipeline: the
// spatial location network (node localizer) and the lightweight iris backbone.
// Weights come from a WeightStore under "<layer>.weight" / "<layer>.bias".

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "msdgr/container.hpp"
#include "msdgr/error.hpp"
#include "msdgr/random.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

enum class LayerKind { Conv, Pool, FullyConnected };

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << s.channels << "x" << s.height << "x" << s.width;
  return os.str();
}

inline Shape3 shape_of(const Tensor3& t) { return {t.channels(), t.height(), t.width()}; }

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  int in_channels = 0;   // flattened input length for FC layers
  int out_channels = 0;  // output length for FC layers
  bool relu = true;
  Shape3 output;  // declared output shape of the table row

  // Output shape this layer produces from `in`, computed from kernel, stride
  // and padding alone.
  Shape3 computed_output(const Shape3& in) const {
    switch (kind) {
      case LayerKind::Conv:
        return {out_channels, (in.height + 2 * pad_h - kernel_h) / stride + 1,
                (in.width + 2 * pad_w - kernel_w) / stride + 1};
      case LayerKind::Pool:
        return {in.channels, (in.height - kernel_h) / stride + 1, (in.width - kernel_w) / stride + 1};
      case LayerKind::FullyConnected:
        return {out_channels, 1, 1};
    }
    return {};
  }
};

using NetworkSpec = std::vector<LayerSpec>;

inline LayerSpec conv_layer(std::string name, int kh, int kw, int ph, int pw, int in_c, int out_c,
                            Shape3 out) {
  return {LayerKind::Conv, std::move(name), kh, kw, 1, ph, pw, in_c, out_c, true, out};
}

inline LayerSpec pool_layer(std::string name, Shape3 out) {
  return {LayerKind::Pool, std::move(name), 2, 2, 2, 0, 0, out.channels, out.channels, false, out};
}

inline LayerSpec fc_layer(std::string name, int in_len, int out_len, bool relu) {
  return {LayerKind::FullyConnected, std::move(name), 1, 1, 1, 0, 0, in_len, out_len, relu,
          {out_len, 1, 1}};
}

// Spatial location network for an H x W x C map producing 2N coordinates.
// H and W must be divisible by 4 and C by 4.
inline NetworkSpec sln_spec(Shape3 in, int nodes, const std::string& prefix) {
  if (in.height % 4 || in.width % 4 || in.channels % 4 || nodes < 1) {
    std::ostringstream os;
    os << "SLN needs H, W and C divisible by 4 and N >= 1, got " << to_string(in) << " N=" << nodes;
    throw ShapeError(os.str());
  }
  const int H = in.height, W = in.width, C = in.channels;
  return {
      pool_layer(prefix + "pool1", {C, H / 2, W / 2}),
      conv_layer(prefix + "conv1", 5, 5, 2, 2, C, C / 2, {C / 2, H / 2, W / 2}),
      pool_layer(prefix + "pool2", {C / 2, H / 4, W / 4}),
      conv_layer(prefix + "conv2", 5, 5, 2, 2, C / 2, C / 4, {C / 4, H / 4, W / 4}),
      fc_layer(prefix + "fc1", H * W * C / 64, 128, true),
      fc_layer(prefix + "fc2", 128, 2 * nodes, false),
  };
}

inline constexpr Shape3 kBackboneInput{1, 128, 256};

// Lightweight iris backbone on a normalized 128 x 256 image. FC2 (the
// classification head) is only appended when num_classes > 0.
inline NetworkSpec backbone_spec(const std::string& prefix = "backbone.", int num_classes = 0) {
  NetworkSpec spec = {
      conv_layer(prefix + "conv1", 5, 9, 2, 4, 1, 24, {24, 128, 256}),
      pool_layer(prefix + "pool1", {24, 64, 128}),
      conv_layer(prefix + "conv2", 5, 7, 2, 3, 24, 48, {48, 64, 128}),
      pool_layer(prefix + "pool2", {48, 32, 64}),
      conv_layer(prefix + "conv3", 5, 5, 2, 2, 48, 64, {64, 32, 64}),
      pool_layer(prefix + "pool3", {64, 16, 32}),
      conv_layer(prefix + "conv4", 5, 5, 2, 2, 64, 96, {96, 16, 32}),
      pool_layer(prefix + "pool4", {96, 8, 16}),
      conv_layer(prefix + "conv5", 5, 5, 2, 2, 96, 96, {96, 8, 16}),
      pool_layer(prefix + "pool5", {96, 4, 8}),
      fc_layer(prefix + "fc1", 3072, 256, true),
  };
  if (num_classes > 0) spec.push_back(fc_layer(prefix + "fc2", 256, num_classes, false));
  return spec;
}

// Layer indices of the backbone whose outputs end conv blocks 1-3 and the FC block.
inline constexpr int kBackboneScaleLayers[3] = {4, 6, 8};
inline constexpr int kBackboneGlobalLayer = 10;

// Checks that every row's declared output agrees with the shape computed
// from kernel/stride/padding, starting from `input`.
inline void validate_spec(const NetworkSpec& spec, Shape3 input) {
  Shape3 cur = input;
  for (const LayerSpec& layer : spec) {
    if (layer.kind == LayerKind::FullyConnected) {
      const int flat = cur.channels * cur.height * cur.width;
      if (flat != layer.in_channels) {
        throw ShapeError("layer '" + layer.name + "' expects input length " +
                         std::to_string(layer.in_channels) + ", got " + std::to_string(flat));
      }
    } else if (cur.channels != layer.in_channels) {
      throw ShapeError("layer '" + layer.name + "' expects " + std::to_string(layer.in_channels) +
                       " input channels, got " + std::to_string(cur.channels));
    }
    const Shape3 out = layer.computed_output(cur);
    if (!(out == layer.output)) {
      throw ShapeError("layer '" + layer.name + "' produces " + to_string(out) + " but declares " +
                       to_string(layer.output));
    }
    cur = out;
  }
}

namespace detail {

inline Tensor3 conv2d(const LayerSpec& L, const WeightStore& weights, const Tensor3& in) {
  const auto oc_n = static_cast<std::uint32_t>(L.out_channels);
  const auto ic_n = static_cast<std::uint32_t>(L.in_channels);
  const NamedArray& w = weights.get(L.name + ".weight",
                                    {oc_n, ic_n, static_cast<std::uint32_t>(L.kernel_h),
                                     static_cast<std::uint32_t>(L.kernel_w)});
  const NamedArray& b = weights.get(L.name + ".bias", {oc_n});
  const Shape3 os = L.computed_output(shape_of(in));
  Tensor3 out(os.channels, os.height, os.width);
  const int H = in.height(), W = in.width();
  for (int oc = 0; oc < L.out_channels; ++oc) {
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) out(oc, oy, ox) = b.data[oc];
    for (int ic = 0; ic < L.in_channels; ++ic) {
      for (int ky = 0; ky < L.kernel_h; ++ky) {
        for (int kx = 0; kx < L.kernel_w; ++kx) {
          const double k = w.data[((static_cast<std::size_t>(oc) * L.in_channels + ic) * L.kernel_h + ky) *
                                      L.kernel_w + kx];
          if (k == 0.0) continue;
          for (int oy = 0; oy < os.height; ++oy) {
            const int iy = oy * L.stride - L.pad_h + ky;
            if (iy < 0 || iy >= H) continue;
            double* dst = &out(oc, oy, 0);
            const double* src = &in(ic, iy, 0);
            for (int ox = 0; ox < os.width; ++ox) {
              const int ix = ox * L.stride - L.pad_w + kx;
              if (ix < 0 || ix >= W) continue;
              dst[ox] += k * src[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

inline Tensor3 max_pool(const LayerSpec& L, const Tensor3& in) {
  const Shape3 os = L.computed_output(shape_of(in));
  Tensor3 out(os.channels, os.height, os.width);
  for (int c = 0; c < os.channels; ++c)
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) {
        double m = -std::numeric_limits<double>::infinity();
        for (int ky = 0; ky < L.kernel_h; ++ky)
          for (int kx = 0; kx < L.kernel_w; ++kx)
            m = std::max(m, in(c, oy * L.stride + ky, ox * L.stride + kx));
        out(c, oy, ox) = m;
      }
  return out;
}

inline Tensor3 fully_connected(const LayerSpec& L, const WeightStore& weights, const Tensor3& in) {
  const auto out_n = static_cast<std::uint32_t>(L.out_channels);
  const auto in_n = static_cast<std::uint32_t>(L.in_channels);
  const NamedArray& w = weights.get(L.name + ".weight", {out_n, in_n});
  const NamedArray& b = weights.get(L.name + ".bias", {out_n});
  Tensor3 out(L.out_channels, 1, 1);
  const auto& x = in.data();
  for (std::uint32_t o = 0; o < out_n; ++o) {
    double acc = b.data[o];
    const float* row = &w.data[std::size_t{o} * in_n];
    for (std::uint32_t k = 0; k < in_n; ++k) acc += row[k] * x[k];
    out(static_cast<int>(o), 0, 0) = acc;
  }
  return out;
}

}  // namespace detail

// Runs every layer and returns each layer's output (after activation).
inline std::vector<Tensor3> forward_network_trace(const NetworkSpec& spec, const WeightStore& weights,
                                                  const Tensor3& input) {
  if (spec.empty()) throw ShapeError("empty network spec");
  std::vector<Tensor3> trace;
  trace.reserve(spec.size());
  const Tensor3* cur = &input;
  for (const LayerSpec& L : spec) {
    const Shape3 in_shape = shape_of(*cur);
    if (L.kind == LayerKind::FullyConnected) {
      if (static_cast<int>(cur->size()) != L.in_channels) {
        throw ShapeError("layer '" + L.name + "': input length " + std::to_string(cur->size()) +
                         " does not match " + std::to_string(L.in_channels));
      }
    } else if (in_shape.channels != L.in_channels) {
      throw ShapeError("layer '" + L.name + "': input " + to_string(in_shape) + " has wrong channel count, expected " +
                       std::to_string(L.in_channels));
    }
    const Shape3 os = L.computed_output(in_shape);
    if (!(os == L.output)) {
      throw ShapeError("layer '" + L.name + "': input " + to_string(in_shape) + " yields " +
                       to_string(os) + ", declared " + to_string(L.output));
    }
    Tensor3 out;
    switch (L.kind) {
      case LayerKind::Conv: out = detail::conv2d(L, weights, *cur); break;
      case LayerKind::Pool: out = detail::max_pool(L, *cur); break;
      case LayerKind::FullyConnected: out = detail::fully_connected(L, weights, *cur); break;
    }
    if (L.relu) {
      for (double& v : out.data()) v = std::max(v, 0.0);
    }
    if (!out.all_finite()) throw ShapeError("layer '" + L.name + "' produced non-finite values");
    trace.push_back(std::move(out));
    cur = &trace.back();
  }
  return trace;
}

inline Tensor3 forward_network(const NetworkSpec& spec, const WeightStore& weights, const Tensor3& input) {
  return std::move(forward_network_trace(spec, weights, input).back());
}

// Adds uniformly initialised weights for every conv/FC layer of `spec`.
inline void init_network_weights(const NetworkSpec& spec, WeightStore& store, Rng& rng) {
  for (const LayerSpec& L : spec) {
    if (L.kind == LayerKind::Pool) continue;
    std::vector<std::uint32_t> shape;
    int fan_in = L.in_channels, fan_out = L.out_channels;
    if (L.kind == LayerKind::Conv) {
      shape = {static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(L.in_channels),
               static_cast<std::uint32_t>(L.kernel_h), static_cast<std::uint32_t>(L.kernel_w)};
      fan_in *= L.kernel_h * L.kernel_w;
      fan_out *= L.kernel_h * L.kernel_w;
    } else {
      shape = {static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(L.in_channels)};
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<float> w(n);
    for (auto& v : w) v = static_cast<float>(uniform(rng, -limit, limit));
    store.add(L.name + ".weight", shape, std::move(w));
    store.add(L.name + ".bias", {static_cast<std::uint32_t>(L.out_channels)},
              std::vector<float>(static_cast<std::size_t>(L.out_channels), 0.0f));
  }
}

}  // namespace msdgr
