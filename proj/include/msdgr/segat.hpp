#pragma once

// Squeeze-and-excitation graph attention (SE-GAT): the SE layer, the
// edge-weighted GAT layer, and the residual graph block
// SE -> GAT -> SE -> GAT (+ input) followed by a rectified dimension
// reduction. Every layer has a forward pass that can record a cache and an
// analytic backward pass over that cache.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "msdgr/container.hpp"
#include "msdgr/error.hpp"
#include "msdgr/graph.hpp"
#include "msdgr/random.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

inline constexpr int kDefaultSeRatio = 4;

struct SEParams {
  Matrix W1;  // (C / ratio) x C
  Matrix W2;  // C x (C / ratio)
};

struct GATParams {
  Matrix W;      // C x C
  Vector w_att;  // 2C: [source half ; neighbour half]
  double leaky_slope = 0.2;
  double elu_alpha = 1.0;
};

struct GraphBlockParams {
  SEParams se1;
  GATParams gat1;
  SEParams se2;
  GATParams gat2;
  Matrix reduce;  // C' x C

  int in_dim() const { return static_cast<int>(reduce.cols()); }
  int out_dim() const { return static_cast<int>(reduce.rows()); }
};

// Visits every trainable array of a block (and, in lockstep, of a second
// block of identical layout such as its gradient).
template <class Block, class Fn>
void for_each_param(Block& p, Fn&& fn) {
  fn(p.se1.W1);
  fn(p.se1.W2);
  fn(p.gat1.W);
  fn(p.gat1.w_att);
  fn(p.se2.W1);
  fn(p.se2.W2);
  fn(p.gat2.W);
  fn(p.gat2.w_att);
  fn(p.reduce);
}

template <class A, class B, class Fn>
void for_each_param_pair(A& a, B& b, Fn&& fn) {
  fn(a.se1.W1, b.se1.W1);
  fn(a.se1.W2, b.se1.W2);
  fn(a.gat1.W, b.gat1.W);
  fn(a.gat1.w_att, b.gat1.w_att);
  fn(a.se2.W1, b.se2.W1);
  fn(a.se2.W2, b.se2.W2);
  fn(a.gat2.W, b.gat2.W);
  fn(a.gat2.w_att, b.gat2.w_att);
  fn(a.reduce, b.reduce);
}

inline GraphBlockParams zeros_like(const GraphBlockParams& p) {
  GraphBlockParams z = p;
  for_each_param(z, [](auto& m) { m.setZero(); });
  return z;
}

// ---------------------------------------------------------------------------
// SE layer

struct SECache {
  Matrix X;
  Vector z, u, s;
  Vector hidden;  // relu(u)
};

inline void check_se(const Matrix& X, const SEParams& p) {
  const auto C = X.cols();
  if (p.W1.cols() != C || p.W2.rows() != C || p.W2.cols() != p.W1.rows() || p.W1.rows() < 1) {
    throw ShapeError("SE layer parameters do not match node dimension " + std::to_string(C));
  }
  if (X.rows() < 1) throw ShapeError("SE layer needs at least one node");
}

inline Matrix se_forward_nodes(const Matrix& X, const SEParams& p, SECache* cache = nullptr) {
  check_se(X, p);
  const Vector z = X.colwise().mean().transpose();
  const Vector u = p.W1 * z;
  const Vector hidden = u.cwiseMax(0.0);
  const Vector s = (p.W2 * hidden).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Matrix Y = X * s.asDiagonal();
  if (cache) *cache = {X, z, u, s, hidden};
  return Y;
}

struct SEGrad {
  SEParams params;
  Matrix dX;
};

inline SEGrad se_backward(const SECache& c, const SEParams& p, const Matrix& dY) {
  if (dY.rows() != c.X.rows() || dY.cols() != c.X.cols()) throw ShapeError("SE upstream gradient shape mismatch");
  const double n = static_cast<double>(c.X.rows());
  SEGrad g;
  g.dX = dY * c.s.asDiagonal();
  const Vector ds = (dY.cwiseProduct(c.X)).colwise().sum().transpose();
  const Vector dv = ds.cwiseProduct(c.s.cwiseProduct((1.0 - c.s.array()).matrix()));
  g.params.W2 = dv * c.hidden.transpose();
  Vector du = p.W2.transpose() * dv;
  for (Eigen::Index k = 0; k < du.size(); ++k)
    if (!(c.u(k) > 0.0)) du(k) = 0.0;
  g.params.W1 = du * c.z.transpose();
  const Vector dz = p.W1.transpose() * du;
  g.dX.rowwise() += (dz / n).transpose();
  return g;
}

inline FeatureGraph se_forward(const FeatureGraph& g, const SEParams& p) {
  FeatureGraph out = g;
  out.nodes = se_forward_nodes(g.nodes, p);
  return out;
}

// ---------------------------------------------------------------------------
// GAT layer

struct GATCache {
  Matrix X;
  Matrix H;      // X W^T
  Matrix T;      // adjacency(a, b) * e_ab on the neighbourhood mask
  Matrix alpha;  // attention, zero outside the neighbourhood
  Matrix P;      // alpha H, the pre-activation output
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
};

inline void check_gat(const Matrix& X, const Matrix& adj, const GATParams& p) {
  const auto C = X.cols();
  if (p.W.rows() != C || p.W.cols() != C || p.w_att.size() != 2 * C) {
    throw ShapeError("GAT layer parameters do not match node dimension " + std::to_string(C));
  }
  if (adj.rows() != X.rows() || adj.cols() != X.rows()) throw ShapeError("GAT adjacency does not match node count");
}

// N_a = {b : adjacency(a, b) > 0} u {a}
inline bool in_neighbourhood(const Matrix& adj, Eigen::Index a, Eigen::Index b) {
  return a == b || adj(a, b) > 0.0;
}

inline Matrix gat_forward_nodes(const Matrix& X, const Matrix& adj, const GATParams& p,
                                GATCache* cache = nullptr) {
  check_gat(X, adj, p);
  const auto N = X.rows();
  const auto C = X.cols();
  const Matrix H = X * p.W.transpose();
  const Vector src = H * p.w_att.head(C);
  const Vector dst = H * p.w_att.tail(C);

  Matrix T = Matrix::Zero(N, N);
  Matrix alpha = Matrix::Zero(N, N);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(N, N);
  for (Eigen::Index a = 0; a < N; ++a) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index b = 0; b < N; ++b) {
      mask(a, b) = in_neighbourhood(adj, a, b);
      if (!mask(a, b)) continue;
      const double t = adj(a, b) * (src(a) + dst(b));
      T(a, b) = t;
      const double l = t > 0.0 ? t : p.leaky_slope * t;
      alpha(a, b) = l;
      peak = std::max(peak, l);
    }
    double total = 0.0;
    for (Eigen::Index b = 0; b < N; ++b) {
      if (!mask(a, b)) continue;
      alpha(a, b) = std::exp(alpha(a, b) - peak);
      total += alpha(a, b);
    }
    for (Eigen::Index b = 0; b < N; ++b)
      if (mask(a, b)) alpha(a, b) /= total;
  }
  const Matrix P = alpha * H;
  const double ea = p.elu_alpha;
  Matrix Y = P.unaryExpr([ea](double v) { return v > 0.0 ? v : ea * std::expm1(v); });
  if (cache) *cache = {X, H, std::move(T), std::move(alpha), P, std::move(mask)};
  return Y;
}

struct GATGrad {
  GATParams params;
  Matrix dX;
};

inline GATGrad gat_backward(const GATCache& c, const Matrix& adj, const GATParams& p, const Matrix& dY) {
  if (dY.rows() != c.X.rows() || dY.cols() != c.X.cols()) throw ShapeError("GAT upstream gradient shape mismatch");
  const auto N = c.X.rows();
  const auto C = c.X.cols();
  const double ea = p.elu_alpha;
  const Matrix dP = dY.cwiseProduct(c.P.unaryExpr([ea](double v) { return v > 0.0 ? 1.0 : ea * std::exp(v); }));
  Matrix dH = c.alpha.transpose() * dP;
  const Matrix dAlpha = dP * c.H.transpose();

  Vector de_src = Vector::Zero(N);  // sum over b of de_ab, per source a
  Vector de_dst = Vector::Zero(N);  // sum over a of de_ab, per neighbour b
  for (Eigen::Index a = 0; a < N; ++a) {
    double weighted = 0.0;
    for (Eigen::Index b = 0; b < N; ++b)
      if (c.mask(a, b)) weighted += c.alpha(a, b) * dAlpha(a, b);
    for (Eigen::Index b = 0; b < N; ++b) {
      if (!c.mask(a, b)) continue;
      const double dl = c.alpha(a, b) * (dAlpha(a, b) - weighted);
      const double dt = dl * (c.T(a, b) > 0.0 ? 1.0 : p.leaky_slope);
      const double de = dt * adj(a, b);
      de_src(a) += de;
      de_dst(b) += de;
    }
  }
  GATGrad g;
  g.params.leaky_slope = p.leaky_slope;
  g.params.elu_alpha = p.elu_alpha;
  g.params.w_att.resize(2 * C);
  g.params.w_att.head(C) = c.H.transpose() * de_src;
  g.params.w_att.tail(C) = c.H.transpose() * de_dst;
  dH += de_src * p.w_att.head(C).transpose();
  dH += de_dst * p.w_att.tail(C).transpose();
  g.params.W = dH.transpose() * c.X;
  g.dX = dH * p.W;
  return g;
}

inline FeatureGraph gat_forward(const FeatureGraph& g, const GATParams& p) {
  FeatureGraph out = g;
  out.nodes = gat_forward_nodes(g.nodes, g.adjacency, p);
  return out;
}

// Attention coefficients of one GAT layer, for inspection and tests.
inline Matrix gat_attention(const FeatureGraph& g, const GATParams& p) {
  GATCache cache;
  gat_forward_nodes(g.nodes, g.adjacency, p, &cache);
  return cache.alpha;
}

// ---------------------------------------------------------------------------
// Residual graph block

struct BlockCache {
  SECache se1;
  GATCache gat1;
  SECache se2;
  GATCache gat2;
  Matrix residual;  // h + X
  Matrix reduced;   // residual W^T, before the rectifier
};

inline void check_block(const Matrix& X, const GraphBlockParams& p) {
  if (p.reduce.cols() != X.cols()) {
    throw ShapeError("reduction layer expects dimension " + std::to_string(p.reduce.cols()) + ", got " +
                     std::to_string(X.cols()));
  }
  if (p.reduce.rows() >= p.reduce.cols() || p.reduce.rows() < 1) {
    throw ShapeError("reduction output dimension must be in [1, C)");
  }
}

inline Matrix graph_block_forward_nodes(const Matrix& X, const Matrix& adj, const GraphBlockParams& p,
                                        BlockCache* cache = nullptr) {
  check_block(X, p);
  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  Matrix h = se_forward_nodes(X, p.se1, &c.se1);
  h = gat_forward_nodes(h, adj, p.gat1, &c.gat1);
  h = se_forward_nodes(h, p.se2, &c.se2);
  h = gat_forward_nodes(h, adj, p.gat2, &c.gat2);
  c.residual = h + X;
  c.reduced = c.residual * p.reduce.transpose();
  return c.reduced.cwiseMax(0.0);
}

inline FeatureGraph graph_block_forward(const FeatureGraph& g, const GraphBlockParams& p) {
  FeatureGraph out = g;
  out.nodes = graph_block_forward_nodes(g.nodes, g.adjacency, p);
  return out;
}

struct BlockGrad {
  GraphBlockParams params;
  Matrix dX;
};

inline BlockGrad graph_block_backward(const BlockCache& c, const Matrix& adj, const GraphBlockParams& p,
                                      const Matrix& dOut) {
  if (dOut.rows() != c.reduced.rows() || dOut.cols() != c.reduced.cols()) {
    throw ShapeError("graph block upstream gradient shape mismatch");
  }
  const Matrix dZ = dOut.cwiseProduct(c.reduced.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  BlockGrad g;
  g.params.reduce = dZ.transpose() * c.residual;
  const Matrix dR = dZ * p.reduce;

  GATGrad g4 = gat_backward(c.gat2, adj, p.gat2, dR);
  SEGrad g3 = se_backward(c.se2, p.se2, g4.dX);
  GATGrad g2 = gat_backward(c.gat1, adj, p.gat1, g3.dX);
  SEGrad g1 = se_backward(c.se1, p.se1, g2.dX);
  g.params.gat2 = std::move(g4.params);
  g.params.se2 = std::move(g3.params);
  g.params.gat1 = std::move(g2.params);
  g.params.se1 = std::move(g1.params);
  g.dX = g1.dX + dR;
  return g;
}

// Smallest distance of any rectifier / leaky-rectifier input from its kink.
// Finite-difference checks are only meaningful when this exceeds the step.
inline double kink_margin(const BlockCache& c) {
  double m = std::numeric_limits<double>::infinity();
  for (const SECache* s : {&c.se1, &c.se2}) m = std::min(m, s->u.cwiseAbs().minCoeff());
  for (const GATCache* g : {&c.gat1, &c.gat2})
    for (Eigen::Index a = 0; a < g->T.rows(); ++a)
      for (Eigen::Index b = 0; b < g->T.cols(); ++b)
        if (g->mask(a, b)) m = std::min(m, std::abs(g->T(a, b)));
  m = std::min(m, c.reduced.cwiseAbs().minCoeff());
  return m;
}

// ---------------------------------------------------------------------------
// Initialisation and persistence

inline Matrix glorot_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = uniform(rng, -limit, limit);
  return m;
}

inline GraphBlockParams init_graph_block(int in_dim, int out_dim, int ratio, Rng& rng) {
  if (ratio < 1 || in_dim % ratio != 0) {
    throw ParameterError("node dimension " + std::to_string(in_dim) + " is not divisible by SE ratio " +
                         std::to_string(ratio));
  }
  if (out_dim < 1 || out_dim >= in_dim) throw ParameterError("reduced dimension must be in [1, C)");
  const int hidden = in_dim / ratio;
  auto se = [&] { return SEParams{glorot_matrix(hidden, in_dim, rng), glorot_matrix(in_dim, hidden, rng)}; };
  auto gat = [&] {
    GATParams g;
    g.W = glorot_matrix(in_dim, in_dim, rng);
    g.w_att = glorot_matrix(2 * in_dim, 1, rng).col(0);
    return g;
  };
  GraphBlockParams p;
  p.se1 = se();
  p.gat1 = gat();
  p.se2 = se();
  p.gat2 = gat();
  p.reduce = glorot_matrix(out_dim, in_dim, rng);
  return p;
}

inline void store_graph_block(WeightStore& store, const std::string& prefix, const GraphBlockParams& p) {
  store.add_matrix(prefix + "se1.W1", p.se1.W1);
  store.add_matrix(prefix + "se1.W2", p.se1.W2);
  store.add_matrix(prefix + "gat1.W", p.gat1.W);
  store.add_vector(prefix + "gat1.w_att", p.gat1.w_att);
  store.add_matrix(prefix + "se2.W1", p.se2.W1);
  store.add_matrix(prefix + "se2.W2", p.se2.W2);
  store.add_matrix(prefix + "gat2.W", p.gat2.W);
  store.add_vector(prefix + "gat2.w_att", p.gat2.w_att);
  store.add_matrix(prefix + "reduce.W", p.reduce);
}

inline GraphBlockParams load_graph_block(const WeightStore& store, const std::string& prefix) {
  GraphBlockParams p;
  p.reduce = store.matrix(prefix + "reduce.W");
  const auto C = static_cast<std::uint32_t>(p.reduce.cols());
  for (auto [se, name] : {std::pair{&p.se1, "se1"}, std::pair{&p.se2, "se2"}}) {
    se->W1 = store.matrix(prefix + name + ".W1");
    if (se->W1.cols() != C) throw ShapeError("'" + prefix + name + ".W1' does not match dimension " + std::to_string(C));
    se->W2 = store.matrix(prefix + name + ".W2", C, static_cast<std::uint32_t>(se->W1.rows()));
  }
  for (auto [gat, name] : {std::pair{&p.gat1, "gat1"}, std::pair{&p.gat2, "gat2"}}) {
    gat->W = store.matrix(prefix + name + ".W", C, C);
    store.get(prefix + name + ".w_att", {2 * C});
    gat->w_att = store.vector(prefix + name + ".w_att");
  }
  check_block(Matrix::Zero(1, C), p);
  return p;
}

}  // namespace msdgr
