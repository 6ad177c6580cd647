#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "msdgr/container.hpp"
#include "msdgr/error.hpp"
#include "msdgr/network.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

struct Point {
  double i = 0.0;  // row, feature-map pixel units
  double j = 0.0;  // column
  friend bool operator==(const Point&, const Point&) = default;
};

using NodeCoords = std::vector<Point>;

enum class ScaleId : int { Small = 0, Medium = 1, Large = 2 };

inline const char* to_string(ScaleId s) {
  switch (s) {
    case ScaleId::Small: return "small";
    case ScaleId::Medium: return "medium";
    case ScaleId::Large: return "large";
  }
  return "?";
}

// Node counts of the small/medium/large scales.
inline constexpr int kDefaultNodeCounts[3] = {64, 32, 16};

struct FeatureGraph {
  Matrix nodes;      // N x C
  NodeCoords coords;  // N points
  Matrix adjacency;  // N x N
  double radius = 1.0;
  ScaleId scale = ScaleId::Medium;

  int node_count() const { return static_cast<int>(nodes.rows()); }
  int dim() const { return static_cast<int>(nodes.cols()); }

  friend bool operator==(const FeatureGraph& a, const FeatureGraph& b) {
    return a.nodes.rows() == b.nodes.rows() && a.nodes.cols() == b.nodes.cols() &&
           a.nodes == b.nodes && a.coords == b.coords && a.adjacency.rows() == b.adjacency.rows() &&
           a.adjacency == b.adjacency && a.radius == b.radius && a.scale == b.scale;
  }
};

enum class LocalizerMode { Sln, Grid, EnergyPeak, External };

struct LocalizerSpec {
  LocalizerMode mode = LocalizerMode::Grid;
  // sln: network weights and the array-name prefix of this scale's SLN ("sln1.").
  std::shared_ptr<const WeightStore> weights;
  std::string weight_prefix = "sln.";
  // external: two-column CSV (i, j) in pixel units.
  std::string file;
};

namespace detail {

inline int ceil_sqrt(int n) {
  int k = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while (k * k < n) ++k;
  while (k > 1 && (k - 1) * (k - 1) >= n) --k;
  return k;
}

inline NodeCoords grid_coords(int H, int W, int n) {
  const int k = ceil_sqrt(n);
  NodeCoords out;
  out.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < k && static_cast<int>(out.size()) < n; ++r)
    for (int c = 0; c < k && static_cast<int>(out.size()) < n; ++c)
      out.push_back({(H - 1) * (r + 0.5) / k, (W - 1) * (c + 0.5) / k});
  return out;
}

inline NodeCoords energy_peak_coords(const Tensor3& map, int n) {
  const int H = map.height(), W = map.width();
  std::vector<double> energy(static_cast<std::size_t>(H) * W, 0.0);
  for (int c = 0; c < map.channels(); ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) energy[static_cast<std::size_t>(y) * W + x] += map(c, y, x) * map(c, y, x);
  for (double& e : energy) e = std::sqrt(e);

  std::vector<int> peaks, rest;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double e = energy[static_cast<std::size_t>(y) * W + x];
      bool is_peak = true;
      for (int dy = -1; dy <= 1 && is_peak; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if ((dy || dx) && yy >= 0 && yy < H && xx >= 0 && xx < W &&
              energy[static_cast<std::size_t>(yy) * W + xx] > e) {
            is_peak = false;
            break;
          }
        }
      (is_peak ? peaks : rest).push_back(y * W + x);
    }
  auto by_energy = [&](int a, int b) {
    if (energy[a] != energy[b]) return energy[a] > energy[b];
    return a < b;
  };
  std::sort(peaks.begin(), peaks.end(), by_energy);
  // Suppressed pixels only fill in when there are fewer peaks than nodes.
  if (static_cast<int>(peaks.size()) < n) {
    std::sort(rest.begin(), rest.end(), by_energy);
    peaks.insert(peaks.end(), rest.begin(), rest.end());
  }
  NodeCoords out;
  for (int k = 0; k < n; ++k) out.push_back({static_cast<double>(peaks[k] / W), static_cast<double>(peaks[k] % W)});
  return out;
}

inline NodeCoords sln_coords(const Tensor3& map, const LocalizerSpec& spec, int n) {
  if (!spec.weights) throw MissingWeightsError("sln localizer requires weights");
  const NetworkSpec net = sln_spec(shape_of(map), n, spec.weight_prefix);
  const Tensor3 out = forward_network(net, *spec.weights, map);
  NodeCoords coords;
  for (int k = 0; k < n; ++k) {
    const double si = 1.0 / (1.0 + std::exp(-out(2 * k, 0, 0)));
    const double sj = 1.0 / (1.0 + std::exp(-out(2 * k + 1, 0, 0)));
    coords.push_back({si * (map.height() - 1), sj * (map.width() - 1)});
  }
  return coords;
}

}  // namespace detail

// Reads a two-column (i, j) CSV. A non-numeric first line is taken as a header.
inline NodeCoords read_coords_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open coordinate file '" + path + "'");
  NodeCoords coords;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    Point p;
    if (!(row >> p.i >> p.j)) {
      if (coords.empty() && line_no == 1) continue;
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected two numeric columns");
    }
    coords.push_back(p);
  }
  return coords;
}

inline NodeCoords localize_nodes(const Tensor3& map, const LocalizerSpec& spec, int n) {
  if (n < 1) throw ParameterError("node count must be at least 1");
  if (map.empty()) throw ShapeError("cannot localize nodes on an empty map");
  const int H = map.height(), W = map.width();
  if (static_cast<long long>(n) > static_cast<long long>(H) * W) {
    throw InfeasibleError("node count " + std::to_string(n) + " exceeds map area " +
                          std::to_string(H * W));
  }
  switch (spec.mode) {
    case LocalizerMode::Grid: return detail::grid_coords(H, W, n);
    case LocalizerMode::EnergyPeak: return detail::energy_peak_coords(map, n);
    case LocalizerMode::Sln: return detail::sln_coords(map, spec, n);
    case LocalizerMode::External: {
      NodeCoords coords = read_coords_csv(spec.file);
      if (static_cast<int>(coords.size()) < n) {
        throw InfeasibleError("coordinate file '" + spec.file + "' has " +
                              std::to_string(coords.size()) + " rows, need " + std::to_string(n));
      }
      coords.resize(static_cast<std::size_t>(n));
      for (const Point& p : coords) {
        if (!(p.i >= 0 && p.i <= H - 1 && p.j >= 0 && p.j <= W - 1)) {
          std::ostringstream os;
          os << "external coordinate (" << p.i << ", " << p.j << ") outside the " << H << "x" << W << " map";
          throw OutOfBoundsError(os.str());
        }
      }
      return coords;
    }
  }
  throw ParameterError("unknown localizer mode");
}

// Gaussian spatial kernel with a hard cutoff: exp(-d^2 / 2r^2) for d < r, 0
// for d >= r, unit diagonal.
inline Matrix build_adjacency(const NodeCoords& coords, double r) {
  if (!(r > 0.0)) throw ParameterError("adjacency radius must be positive");
  const auto n = static_cast<Eigen::Index>(coords.size());
  Matrix adj = Matrix::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    adj(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double di = coords[a].i - coords[b].i;
      const double dj = coords[a].j - coords[b].j;
      const double d2 = di * di + dj * dj;
      const double w = std::sqrt(d2) < r ? std::exp(-d2 / (2.0 * r * r)) : 0.0;
      adj(a, b) = w;
      adj(b, a) = w;
    }
  }
  return adj;
}

// Receptive radius used when none is configured: 2 * sqrt(H * W / N).
inline double default_radius(int height, int width, int nodes) {
  return 2.0 * std::sqrt(static_cast<double>(height) * width / nodes);
}

inline FeatureGraph graph_from_coords(const Tensor3& map, NodeCoords coords, double r, ScaleId scale) {
  FeatureGraph g;
  g.nodes.resize(static_cast<Eigen::Index>(coords.size()), map.channels());
  for (std::size_t k = 0; k < coords.size(); ++k) {
    g.nodes.row(static_cast<Eigen::Index>(k)) = bilinear_sample(map, coords[k].i, coords[k].j).transpose();
  }
  g.adjacency = build_adjacency(coords, r);
  g.coords = std::move(coords);
  g.radius = r;
  g.scale = scale;
  return g;
}

inline FeatureGraph make_feature_graph(const Tensor3& map, const LocalizerSpec& spec, int n, double r,
                                       ScaleId scale) {
  if (!(r > 0.0)) throw ParameterError("adjacency radius must be positive");
  return graph_from_coords(map, localize_nodes(map, spec, n), r, scale);
}

// Throws if the structural invariants of a feature graph do not hold.
inline void validate_graph(const FeatureGraph& g) {
  const auto n = g.nodes.rows();
  if (static_cast<Eigen::Index>(g.coords.size()) != n || g.adjacency.rows() != n || g.adjacency.cols() != n) {
    throw ShapeError("feature graph parts disagree on node count");
  }
  if (!(g.radius > 0.0)) throw ParameterError("feature graph radius must be positive");
  for (Eigen::Index a = 0; a < n; ++a) {
    if (g.adjacency(a, a) != 1.0) throw ShapeError("adjacency diagonal must be 1");
    for (Eigen::Index b = 0; b < n; ++b) {
      const double w = g.adjacency(a, b);
      if (w != g.adjacency(b, a) || !(w >= 0.0 && w <= 1.0)) {
        throw ShapeError("adjacency must be symmetric with entries in [0, 1]");
      }
    }
  }
}

// Serialization as "<prefix>nodes", "<prefix>coords", "<prefix>adjacency",
// "<prefix>radius", "<prefix>scale_id" arrays of an MSDG container.
inline void store_graph(WeightStore& store, const std::string& prefix, const FeatureGraph& g) {
  store.add_matrix(prefix + "nodes", g.nodes);
  Matrix coords(static_cast<Eigen::Index>(g.coords.size()), 2);
  for (std::size_t k = 0; k < g.coords.size(); ++k) {
    coords(static_cast<Eigen::Index>(k), 0) = g.coords[k].i;
    coords(static_cast<Eigen::Index>(k), 1) = g.coords[k].j;
  }
  store.add_matrix(prefix + "coords", coords);
  store.add_matrix(prefix + "adjacency", g.adjacency);
  store.add_scalar(prefix + "radius", g.radius);
  store.add_scalar(prefix + "scale_id", static_cast<int>(g.scale));
}

inline FeatureGraph load_graph(const WeightStore& store, const std::string& prefix) {
  FeatureGraph g;
  g.nodes = store.matrix(prefix + "nodes");
  const auto n = static_cast<std::uint32_t>(g.nodes.rows());
  const Matrix coords = store.matrix(prefix + "coords", n, 2);
  for (std::uint32_t k = 0; k < n; ++k) g.coords.push_back({coords(k, 0), coords(k, 1)});
  g.adjacency = store.matrix(prefix + "adjacency", n, n);
  g.radius = store.scalar(prefix + "radius");
  const double s = store.scalar(prefix + "scale_id");
  if (s != 0.0 && s != 1.0 && s != 2.0) throw FormatError("bad scale_id in '" + prefix + "'");
  g.scale = static_cast<ScaleId>(static_cast<int>(s));
  return g;
}

// Rounds every real in the graph to float32, the precision of the container.
inline FeatureGraph quantized(FeatureGraph g) {
  auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  g.nodes = g.nodes.unaryExpr(q);
  g.adjacency = g.adjacency.unaryExpr(q);
  for (Point& p : g.coords) p = {q(p.i), q(p.j)};
  g.radius = q(g.radius);
  return g;
}

}  // namespace msdgr
