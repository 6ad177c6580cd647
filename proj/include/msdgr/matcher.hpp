#pragma once

// Composite graph similarity, the graph triplet loss, and dynamic graph
// matching over multiscale representations.
//
// Similarity S = S_fea + adj_sign * S_adj where S_fea is the cosine between
// the concatenations [retained nodes of every scale, in index order | global
// feature] and S_adj the size-normalised Frobenius distance between the
// retained principal submatrices of the adjacency matrices. adj_sign = -1
// (the default) makes S decrease as structures diverge; +1 is the literal
// additive form.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/graph.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

struct MultiscaleRepresentation {
  std::vector<FeatureGraph> graphs;  // one per scale, distinct scale ids
  Vector global;                     // may be empty (handcrafted pipeline)

  friend bool operator==(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b) {
    return a.graphs == b.graphs && a.global.size() == b.global.size() && a.global == b.global;
  }
};

// Per-scale node indices kept for matching, ascending.
using RetainedSets = std::vector<std::vector<int>>;

enum class MatchMode { Static, Dynamic };

inline constexpr double kDefaultMargin = 1.0;
inline constexpr int kDefaultAdjSign = -1;

struct MatchResult {
  double similarity = 0.0;
  double s_fea = 0.0;
  double s_adj = 0.0;
  std::vector<double> gates;        // per scale
  RetainedSets retained;            // per scale
  std::vector<Vector> pair_scores;  // per scale, cosine of every index-aligned node pair
};

inline RetainedSets full_sets(const MultiscaleRepresentation& r) {
  RetainedSets sets;
  for (const FeatureGraph& g : r.graphs) {
    std::vector<int> all(static_cast<std::size_t>(g.node_count()));
    std::iota(all.begin(), all.end(), 0);
    sets.push_back(std::move(all));
  }
  return sets;
}

inline void check_adj_sign(int adj_sign) {
  if (adj_sign != 1 && adj_sign != -1) throw ParameterError("adj_sign must be +1 or -1");
}

// Both sides must share scale structure: graph count, per-scale scale id and
// node dimension, and global feature length. With `same_counts` the node
// counts must agree as well (needed for index-aligned matching).
inline void check_compatible(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                             bool same_counts = true) {
  if (a.graphs.size() != b.graphs.size()) {
    throw ShapeError("representations have " + std::to_string(a.graphs.size()) + " and " +
                     std::to_string(b.graphs.size()) + " scales");
  }
  for (std::size_t s = 0; s < a.graphs.size(); ++s) {
    const FeatureGraph& ga = a.graphs[s];
    const FeatureGraph& gb = b.graphs[s];
    if (ga.scale != gb.scale || ga.dim() != gb.dim() || (same_counts && ga.node_count() != gb.node_count())) {
      throw ShapeError("scale " + std::to_string(s) + " (" + to_string(ga.scale) +
                       ") differs in scale id, node count or node dimension");
    }
  }
  if (a.global.size() != b.global.size()) throw ShapeError("global feature lengths differ");
}

inline void check_retained(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                           const RetainedSets& retained) {
  if (retained.size() != a.graphs.size()) throw ShapeError("retained sets do not match scale count");
  for (std::size_t s = 0; s < retained.size(); ++s) {
    const int n = std::min(a.graphs[s].node_count(), b.graphs[s].node_count());
    for (int i : retained[s])
      if (i < 0 || i >= n) throw OutOfBoundsError("retained index " + std::to_string(i) + " out of range at scale " + std::to_string(s));
  }
}

namespace detail {

struct CosineParts {
  double dot = 0.0;
  double norm_a = 0.0;  // squared norms
  double norm_b = 0.0;
};

inline void accumulate(CosineParts& acc, const double* x, const double* y, Eigen::Index n) {
  for (Eigen::Index k = 0; k < n; ++k) {
    acc.dot += x[k] * y[k];
    acc.norm_a += x[k] * x[k];
    acc.norm_b += y[k] * y[k];
  }
}

inline CosineParts concat_parts(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                                const RetainedSets& retained) {
  CosineParts acc;
  for (std::size_t s = 0; s < retained.size(); ++s) {
    const Matrix& A = a.graphs[s].nodes;
    const Matrix& B = b.graphs[s].nodes;
    for (int i : retained[s]) accumulate(acc, A.row(i).data(), B.row(i).data(), A.cols());
  }
  accumulate(acc, a.global.data(), b.global.data(), a.global.size());
  return acc;
}

}  // namespace detail

// Cosine between two node vectors, with a zero vector scoring 0.
inline double node_cosine(const double* x, const double* y, Eigen::Index n) {
  detail::CosineParts p;
  detail::accumulate(p, x, y, n);
  if (p.norm_a == 0.0 || p.norm_b == 0.0) return 0.0;
  return p.dot / std::sqrt(p.norm_a * p.norm_b);
}

inline double s_fea(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                    const RetainedSets& retained) {
  check_compatible(a, b, false);
  check_retained(a, b, retained);
  const detail::CosineParts p = detail::concat_parts(a, b, retained);
  if (p.norm_a == 0.0 || p.norm_b == 0.0) {
    throw UndefinedSimilarityError("feature concatenation is the zero vector");
  }
  return p.dot / std::sqrt(p.norm_a * p.norm_b);
}

inline double s_adj(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                    const RetainedSets& retained) {
  check_compatible(a, b, false);
  check_retained(a, b, retained);
  if (retained.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < retained.size(); ++s) {
    const auto& idx = retained[s];
    if (idx.empty()) continue;
    const Matrix& M1 = a.graphs[s].adjacency;
    const Matrix& M2 = b.graphs[s].adjacency;
    double sq = 0.0;
    for (int r : idx)
      for (int c : idx) {
        const double d = M1(r, c) - M2(r, c);
        sq += d * d;
      }
    const double n = static_cast<double>(idx.size());
    total += std::sqrt(sq) / (n * n);
  }
  return total / static_cast<double>(retained.size());
}

inline double similarity(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                         const RetainedSets& retained, int adj_sign = kDefaultAdjSign) {
  check_adj_sign(adj_sign);
  return s_fea(a, b, retained) + adj_sign * s_adj(a, b, retained);
}

inline double similarity(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                         int adj_sign = kDefaultAdjSign) {
  return similarity(a, b, full_sets(a), adj_sign);
}

inline MatchResult static_match(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                                int adj_sign = kDefaultAdjSign) {
  check_adj_sign(adj_sign);
  check_compatible(a, b);
  MatchResult r;
  r.retained = full_sets(a);
  for (std::size_t s = 0; s < a.graphs.size(); ++s) {
    const Matrix& A = a.graphs[s].nodes;
    const Matrix& B = b.graphs[s].nodes;
    Vector cos(A.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) cos(i) = node_cosine(A.row(i).data(), B.row(i).data(), A.cols());
    r.pair_scores.push_back(std::move(cos));
    r.gates.push_back(-std::numeric_limits<double>::infinity());
  }
  r.s_fea = s_fea(a, b, r.retained);
  r.s_adj = s_adj(a, b, r.retained);
  r.similarity = r.s_fea + adj_sign * r.s_adj;
  return r;
}

// Index-aligned pruning: at each scale the gate is the mean cosine of the
// node pairs, and pairs scoring below it are dropped from both graphs before
// the similarity is computed.
inline MatchResult dynamic_match(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b,
                                 int adj_sign = kDefaultAdjSign) {
  check_adj_sign(adj_sign);
  check_compatible(a, b);
  MatchResult r;
  bool any = false;
  for (std::size_t s = 0; s < a.graphs.size(); ++s) {
    const Matrix& A = a.graphs[s].nodes;
    const Matrix& B = b.graphs[s].nodes;
    const auto n = A.rows();
    Vector cos(n);
    for (Eigen::Index i = 0; i < n; ++i) cos(i) = node_cosine(A.row(i).data(), B.row(i).data(), A.cols());
    double gate = 0.0;
    std::vector<int> keep;
    if (n > 0) {
      // The mean never exceeds the maximum; the clamp only absorbs rounding.
      gate = std::min(cos.sum() / static_cast<double>(n), cos.maxCoeff());
      for (Eigen::Index i = 0; i < n; ++i)
        if (!(cos(i) < gate)) keep.push_back(static_cast<int>(i));
    }
    any = any || !keep.empty();
    r.gates.push_back(gate);
    r.retained.push_back(std::move(keep));
    r.pair_scores.push_back(std::move(cos));
  }
  if (!any) throw EmptyMatchError("every node pair was removed at every scale");
  r.s_fea = s_fea(a, b, r.retained);
  r.s_adj = s_adj(a, b, r.retained);
  r.similarity = r.s_fea + adj_sign * r.s_adj;
  return r;
}

inline MatchResult match(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b, MatchMode mode,
                         int adj_sign = kDefaultAdjSign) {
  return mode == MatchMode::Dynamic ? dynamic_match(a, b, adj_sign) : static_match(a, b, adj_sign);
}

inline double match_score(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b, MatchMode mode,
                          int adj_sign = kDefaultAdjSign) {
  return match(a, b, mode, adj_sign).similarity;
}

// One row per node pair: scale,index,cosine,retained.
inline void write_match_rows(std::ostream& out, const MatchResult& r, const std::string& row_prefix = "") {
  for (std::size_t s = 0; s < r.pair_scores.size(); ++s) {
    const auto& keep = r.retained[s];
    for (Eigen::Index i = 0; i < r.pair_scores[s].size(); ++i) {
      const bool kept = std::binary_search(keep.begin(), keep.end(), static_cast<int>(i));
      out << row_prefix << s << ',' << i << ',' << r.pair_scores[s](i) << ',' << (kept ? 1 : 0) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Graph triplet loss

struct RepresentationGrad {
  std::vector<Matrix> nodes;  // per scale, same shape as the graph's node matrix
  Vector global;

  static RepresentationGrad zeros_like(const MultiscaleRepresentation& r) {
    RepresentationGrad g;
    for (const FeatureGraph& fg : r.graphs) g.nodes.push_back(Matrix::Zero(fg.nodes.rows(), fg.nodes.cols()));
    g.global = Vector::Zero(r.global.size());
    return g;
  }
};

struct TripletBatch {
  const MultiscaleRepresentation* anchor = nullptr;
  const MultiscaleRepresentation* positive = nullptr;
  const MultiscaleRepresentation* negative = nullptr;
  double margin = kDefaultMargin;
  int adj_sign = kDefaultAdjSign;
};

struct TripletResult {
  double loss = 0.0;
  double s_anchor_positive = 0.0;
  double s_anchor_negative = 0.0;
  bool active = false;
  RepresentationGrad d_anchor, d_positive, d_negative;
};

namespace detail {

// Adds scale * d cos(x, y) / dx into gx and scale * d cos(x, y) / dy into gy,
// with x, y the full-graph concatenations of a and b.
inline void add_cosine_grad(const MultiscaleRepresentation& a, const MultiscaleRepresentation& b, double scale,
                            RepresentationGrad& ga, RepresentationGrad& gb) {
  const CosineParts p = concat_parts(a, b, full_sets(a));
  if (p.norm_a == 0.0 || p.norm_b == 0.0) throw UndefinedSimilarityError("feature concatenation is the zero vector");
  const double inv = 1.0 / std::sqrt(p.norm_a * p.norm_b);
  const double cos = p.dot * inv;
  const double ca = cos / p.norm_a;
  const double cb = cos / p.norm_b;
  for (std::size_t s = 0; s < a.graphs.size(); ++s) {
    const Matrix& A = a.graphs[s].nodes;
    const Matrix& B = b.graphs[s].nodes;
    ga.nodes[s] += scale * (inv * B - ca * A);
    gb.nodes[s] += scale * (inv * A - cb * B);
  }
  ga.global += scale * (inv * b.global - ca * a.global);
  gb.global += scale * (inv * a.global - cb * b.global);
}

}  // namespace detail

// L = max(0, m + S(anchor, negative) - S(anchor, positive)) on full graphs.
// At the kink (argument exactly 0) the active branch is taken. S_adj does not
// depend on node features, so the gradients come from S_fea alone.
inline TripletResult triplet_loss(const MultiscaleRepresentation& anchor, const MultiscaleRepresentation& positive,
                                  const MultiscaleRepresentation& negative, double margin = kDefaultMargin,
                                  int adj_sign = kDefaultAdjSign) {
  if (!(margin > 0.0)) throw ParameterError("triplet margin must be positive");
  check_compatible(anchor, positive);
  check_compatible(anchor, negative);
  TripletResult r;
  r.s_anchor_positive = similarity(anchor, positive, adj_sign);
  r.s_anchor_negative = similarity(anchor, negative, adj_sign);
  const double arg = margin + r.s_anchor_negative - r.s_anchor_positive;
  r.active = arg >= 0.0;
  r.loss = r.active ? arg : 0.0;
  r.d_anchor = RepresentationGrad::zeros_like(anchor);
  r.d_positive = RepresentationGrad::zeros_like(positive);
  r.d_negative = RepresentationGrad::zeros_like(negative);
  if (r.active) {
    detail::add_cosine_grad(anchor, negative, 1.0, r.d_anchor, r.d_negative);
    detail::add_cosine_grad(anchor, positive, -1.0, r.d_anchor, r.d_positive);
  }
  return r;
}

inline TripletResult triplet_loss(const TripletBatch& batch) {
  if (!batch.anchor || !batch.positive || !batch.negative) throw ParameterError("incomplete triplet");
  return triplet_loss(*batch.anchor, *batch.positive, *batch.negative, batch.margin, batch.adj_sign);
}

}  // namespace msdgr
