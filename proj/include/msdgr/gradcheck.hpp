#pragma once

// Finite-difference verification of every analytic gradient in the graph
// layers, the triplet loss, and their composition in training.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/graph.hpp"
#include "msdgr/matcher.hpp"
#include "msdgr/random.hpp"
#include "msdgr/segat.hpp"
#include "msdgr/training.hpp"

namespace msdgr {

// Called on each analytic gradient before it is compared; lets a test corrupt
// one gradient to confirm the checker notices.
using GradientTamper = std::function<void(const std::string& layer, const std::string& param, Matrix& grad)>;

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int seeds = 100;
  double step = 1e-4;
  double tolerance = 1e-3;
  // Instances whose rectifier inputs or hinge argument lie closer than this
  // to a kink are redrawn, since central differences straddle the kink there.
  double kink_guard = 1e-2;
  int max_redraws = 50;
  GradientTamper tamper;
};

struct GradcheckEntry {
  std::string layer;
  std::string param;
  double max_error = 0.0;
  int checks = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  int seeds = 0;
  int redraws = 0;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [this](const auto& e) { return e.max_error < tolerance; });
  }

  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_error);
    return m;
  }

  void write(std::ostream& out) const {
    out << "layer,param,checks,max_rel_error,status\n";
    const auto flags = out.flags();
    for (const auto& e : entries) {
      out << e.layer << ',' << e.param << ',' << e.checks << ',' << std::scientific << std::setprecision(3)
          << e.max_error << ',' << (e.max_error < tolerance ? "ok" : "FAIL") << '\n';
      out.flags(flags);
    }
    out << "# seeds=" << seeds << " redraws=" << redraws << " tolerance=" << tolerance << " seconds=" << std::fixed
        << std::setprecision(2) << seconds << " result=" << (passed() ? "pass" : "fail") << '\n';
    out.flags(flags);
  }
};

namespace detail {

class GradChecker {
 public:
  GradChecker(const GradcheckOptions& opt, GradcheckReport& report) : opt_(opt), report_(report) {}

  // Compares `analytic` with central differences of `objective` over the
  // entries of `param`, which is perturbed in place and restored.
  template <class P, class A>
  void compare(const std::string& layer, const std::string& name, P& param, const A& analytic,
               const std::function<double()>& objective) {
    Matrix a = Eigen::Map<const Matrix>(analytic.data(), analytic.rows(), analytic.cols());
    if (opt_.tamper) opt_.tamper(layer, name, a);
    Matrix n(param.rows(), param.cols());
    for (Eigen::Index k = 0; k < param.size(); ++k) {
      const double saved = param.data()[k];
      param.data()[k] = saved + opt_.step;
      const double up = objective();
      param.data()[k] = saved - opt_.step;
      const double down = objective();
      param.data()[k] = saved;
      n.data()[k] = (up - down) / (2.0 * opt_.step);
    }
    double err = 0.0;
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
      err = std::numeric_limits<double>::infinity();
    } else {
      const double scale = std::max(a.norm(), n.norm());
      err = scale < 1e-12 ? 0.0 : (a - n).norm() / scale;
    }
    if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
    GradcheckEntry& e = entry(layer, name);
    e.max_error = std::max(e.max_error, err);
    ++e.checks;
  }

 private:
  GradcheckEntry& entry(const std::string& layer, const std::string& name) {
    const auto key = layer + "/" + name;
    auto it = index_.find(key);
    if (it == index_.end()) {
      it = index_.emplace(key, report_.entries.size()).first;
      report_.entries.push_back({layer, name, 0.0, 0});
    }
    return report_.entries[it->second];
  }

  const GradcheckOptions& opt_;
  GradcheckReport& report_;
  std::map<std::string, std::size_t> index_;
};

inline Matrix gc_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale * normal(rng);
  return m;
}

inline Vector gc_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = scale * normal(rng);
  return v;
}

// Nodes scattered over a square so that some pairs are connected and some not.
inline FeatureGraph gc_graph(int n, int dim, Rng& rng, ScaleId scale = ScaleId::Medium) {
  FeatureGraph g;
  g.nodes = gc_matrix(n, dim, rng);
  for (int k = 0; k < n; ++k) g.coords.push_back({uniform(rng, 0, 10), uniform(rng, 0, 10)});
  g.radius = 5.0;
  g.adjacency = build_adjacency(g.coords, g.radius);
  g.scale = scale;
  return g;
}

inline GraphBlockParams gc_block(int dim, int out, Rng& rng) {
  GraphBlockParams p = init_graph_block(dim, out, 2, rng);
  // Glorot weights are small; scale up so every nonlinearity is exercised.
  for_each_param(p, [&](auto& m) { m *= 2.0; });
  return p;
}

inline double gat_kink_margin(const GATCache& c) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < c.T.rows(); ++a)
    for (Eigen::Index b = 0; b < c.T.cols(); ++b)
      if (c.mask(a, b)) m = std::min(m, std::abs(c.T(a, b)));
  return m;
}

inline double contract(const Matrix& y, const Matrix& r) { return y.cwiseProduct(r).sum(); }

// Redraws an instance until `ready` accepts it; counts the redraws.
template <class Draw, class Ready>
auto draw_smooth(Rng& rng, const GradcheckOptions& opt, GradcheckReport& report, Draw draw, Ready ready) {
  auto inst = draw(rng);
  for (int k = 0; k < opt.max_redraws && !ready(inst); ++k) {
    ++report.redraws;
    inst = draw(rng);
  }
  if (!ready(inst)) throw VerificationError("could not draw a kink-free gradient-check instance");
  return inst;
}

inline void check_se(GradChecker& gc, Rng& rng, const GradcheckOptions& opt, GradcheckReport& report) {
  struct Inst {
    Matrix X, R;
    SEParams p;
    SECache c;
  };
  Inst in = draw_smooth(
      rng, opt, report,
      [](Rng& r) {
        const int n = 2 + static_cast<int>(uniform_index(r, 5));
        const int dim = 4 + 2 * static_cast<int>(uniform_index(r, 3));
        Inst i{gc_matrix(n, dim, r), gc_matrix(n, dim, r), {gc_matrix(dim / 2, dim, r), gc_matrix(dim, dim / 2, r)}, {}};
        se_forward_nodes(i.X, i.p, &i.c);
        return i;
      },
      [&](const Inst& i) { return i.c.u.cwiseAbs().minCoeff() > opt.kink_guard; });
  const SEGrad g = se_backward(in.c, in.p, in.R);
  auto f = [&] { return contract(se_forward_nodes(in.X, in.p), in.R); };
  gc.compare("se", "W1", in.p.W1, g.params.W1, f);
  gc.compare("se", "W2", in.p.W2, g.params.W2, f);
  gc.compare("se", "input", in.X, g.dX, f);
}

inline void check_gat(GradChecker& gc, Rng& rng, const GradcheckOptions& opt, GradcheckReport& report) {
  struct Inst {
    FeatureGraph g;
    Matrix R;
    GATParams p;
    GATCache c;
  };
  Inst in = draw_smooth(
      rng, opt, report,
      [](Rng& r) {
        const int n = 2 + static_cast<int>(uniform_index(r, 6));
        const int dim = 3 + static_cast<int>(uniform_index(r, 4));
        Inst i{gc_graph(n, dim, r), gc_matrix(n, dim, r), {}, {}};
        i.p.W = gc_matrix(dim, dim, r, 0.5);
        i.p.w_att = gc_vector(2 * dim, r);
        gat_forward_nodes(i.g.nodes, i.g.adjacency, i.p, &i.c);
        return i;
      },
      [&](const Inst& i) { return gat_kink_margin(i.c) > opt.kink_guard; });
  const GATGrad g = gat_backward(in.c, in.g.adjacency, in.p, in.R);
  auto f = [&] { return contract(gat_forward_nodes(in.g.nodes, in.g.adjacency, in.p), in.R); };
  gc.compare("gat", "W", in.p.W, g.params.W, f);
  gc.compare("gat", "w_att", in.p.w_att, g.params.w_att, f);
  gc.compare("gat", "input", in.g.nodes, g.dX, f);
}

inline const char* const kBlockParamNames[] = {"se1.W1", "se1.W2", "gat1.W", "gat1.w_att", "se2.W1",
                                               "se2.W2", "gat2.W", "gat2.w_att", "reduce"};

template <class Fn>
void for_each_named_param_pair(GraphBlockParams& p, const GraphBlockParams& g, Fn&& fn) {
  int k = 0;
  for_each_param_pair(p, g, [&](auto& param, const auto& grad) { fn(kBlockParamNames[k++], param, grad); });
}

inline void check_block(GradChecker& gc, Rng& rng, const GradcheckOptions& opt, GradcheckReport& report) {
  struct Inst {
    FeatureGraph g;
    Matrix R;
    GraphBlockParams p;
    BlockCache c;
  };
  Inst in = draw_smooth(
      rng, opt, report,
      [](Rng& r) {
        const int n = 2 + static_cast<int>(uniform_index(r, 5));
        const int dim = 4 + 2 * static_cast<int>(uniform_index(r, 3));
        Inst i{gc_graph(n, dim, r), gc_matrix(n, dim / 2, r), gc_block(dim, dim / 2, r), {}};
        graph_block_forward_nodes(i.g.nodes, i.g.adjacency, i.p, &i.c);
        return i;
      },
      [&](const Inst& i) { return kink_margin(i.c) > opt.kink_guard; });
  const BlockGrad g = graph_block_backward(in.c, in.g.adjacency, in.p, in.R);
  auto f = [&] { return contract(graph_block_forward_nodes(in.g.nodes, in.g.adjacency, in.p), in.R); };
  for_each_named_param_pair(in.p, g.params,
                            [&](const char* name, auto& param, const auto& grad) { gc.compare("block", name, param, grad, f); });
  gc.compare("block", "input", in.g.nodes, g.dX, f);
}

inline MultiscaleRepresentation gc_representation(Rng& rng, int dim, const std::vector<int>& counts, int global) {
  MultiscaleRepresentation r;
  int s = 0;
  for (int n : counts) r.graphs.push_back(gc_graph(n, dim, rng, static_cast<ScaleId>(s++)));
  r.global = gc_vector(global, rng);
  return r;
}

inline double hinge_argument(const TripletResult& r, double margin) {
  return margin + r.s_anchor_negative - r.s_anchor_positive;
}

inline void check_triplet(GradChecker& gc, Rng& rng, const GradcheckOptions& opt, GradcheckReport& report) {
  struct Inst {
    MultiscaleRepresentation a, p, n;
    TripletResult r;
  };
  Inst in = draw_smooth(
      rng, opt, report,
      [](Rng& r) {
        const int dim = 3 + static_cast<int>(uniform_index(r, 4));
        const std::vector<int> counts = {2 + static_cast<int>(uniform_index(r, 4)), 2 + static_cast<int>(uniform_index(r, 3))};
        const int global = 1 + static_cast<int>(uniform_index(r, 3));
        Inst i{gc_representation(r, dim, counts, global), gc_representation(r, dim, counts, global),
               gc_representation(r, dim, counts, global), {}};
        i.r = triplet_loss(i.a, i.p, i.n);
        return i;
      },
      // Only active hinges carry a gradient worth checking.
      [&](const Inst& i) { return hinge_argument(i.r, kDefaultMargin) > opt.kink_guard; });
  auto f = [&] { return triplet_loss(in.a, in.p, in.n).loss; };
  const std::pair<MultiscaleRepresentation*, const RepresentationGrad*> members[] = {
      {&in.a, &in.r.d_anchor}, {&in.p, &in.r.d_positive}, {&in.n, &in.r.d_negative}};
  const char* names[] = {"anchor", "positive", "negative"};
  for (int m = 0; m < 3; ++m) {
    auto [rep, grad] = members[m];
    for (std::size_t s = 0; s < rep->graphs.size(); ++s) {
      gc.compare("triplet", std::string(names[m]) + ".scale" + std::to_string(s), rep->graphs[s].nodes, grad->nodes[s], f);
    }
    if (rep->global.size() > 0) gc.compare("triplet", std::string(names[m]) + ".global", rep->global, grad->global, f);
  }
}

// Model parameters through the full training objective: graph blocks on
// every member of a triplet, then the triplet loss.
inline void check_train(GradChecker& gc, Rng& rng, const GradcheckOptions& opt, GradcheckReport& report) {
  struct Inst {
    GraphModel model;
    MultiscaleRepresentation x[3];
    MultiscaleRepresentation y[3];
    ModelCache c[3];
    TripletResult r;
  };
  Inst in = draw_smooth(
      rng, opt, report,
      [](Rng& r) {
        const int dim = 4 + 2 * static_cast<int>(uniform_index(r, 2));
        const std::vector<int> counts = {2 + static_cast<int>(uniform_index(r, 3)), 2 + static_cast<int>(uniform_index(r, 2))};
        Inst i;
        for (auto& x : i.x) x = gc_representation(r, dim, counts, 2);
        for (std::size_t s = 0; s < counts.size(); ++s) i.model.blocks.push_back(gc_block(dim, dim / 2, r));
        for (int m = 0; m < 3; ++m) i.y[m] = model_forward(i.model, i.x[m], &i.c[m]);
        i.r = triplet_loss(i.y[0], i.y[1], i.y[2]);
        return i;
      },
      [&](const Inst& i) {
        if (hinge_argument(i.r, kDefaultMargin) <= opt.kink_guard) return false;
        for (const auto& mc : i.c)
          for (const auto& bc : mc.blocks)
            if (kink_margin(bc) <= opt.kink_guard) return false;
        return true;
      });
  std::vector<GraphBlockParams> grads;
  for (const auto& b : in.model.blocks) grads.push_back(zeros_like(b));
  const RepresentationGrad* d[3] = {&in.r.d_anchor, &in.r.d_positive, &in.r.d_negative};
  for (int m = 0; m < 3; ++m) model_backward(in.model, in.x[m], in.c[m], *d[m], 1.0, grads);
  auto f = [&] {
    return triplet_loss(model_forward(in.model, in.x[0]), model_forward(in.model, in.x[1]),
                        model_forward(in.model, in.x[2]))
        .loss;
  };
  for (std::size_t s = 0; s < grads.size(); ++s) {
    for_each_named_param_pair(in.model.blocks[s], grads[s], [&](const char* name, auto& param, const auto& grad) {
      gc.compare("train", block_prefix(static_cast<int>(s)) + name, param, grad, f);
    });
  }
}

}  // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt = {}) {
  if (opt.seeds < 1 || !(opt.step > 0) || !(opt.tolerance > 0)) throw ParameterError("invalid gradcheck options");
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = opt.tolerance;
  report.seeds = opt.seeds;
  detail::GradChecker gc(opt, report);
  for (int k = 0; k < opt.seeds; ++k) {
    Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(k)));
    detail::check_se(gc, rng, opt, report);
    detail::check_gat(gc, rng, opt, report);
    detail::check_block(gc, rng, opt, report);
    detail::check_triplet(gc, rng, opt, report);
    detail::check_train(gc, rng, opt, report);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace msdgr
