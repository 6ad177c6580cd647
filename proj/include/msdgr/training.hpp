#pragma once

// Triplet training of per-scale graph blocks with SGD + momentum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "msdgr/config.hpp"
#include "msdgr/container.hpp"
#include "msdgr/error.hpp"
#include "msdgr/matcher.hpp"
#include "msdgr/pipeline.hpp"
#include "msdgr/random.hpp"
#include "msdgr/segat.hpp"

namespace msdgr {

// One graph block per scale; the global feature passes through unchanged.
struct GraphModel {
  std::vector<GraphBlockParams> blocks;
};

struct ModelCache {
  std::vector<BlockCache> blocks;
};

inline MultiscaleRepresentation model_forward(const GraphModel& m, const MultiscaleRepresentation& in,
                                              ModelCache* cache = nullptr) {
  if (m.blocks.size() != in.graphs.size()) {
    throw ShapeError("model has " + std::to_string(m.blocks.size()) + " blocks for " +
                     std::to_string(in.graphs.size()) + " scales");
  }
  MultiscaleRepresentation out;
  out.global = in.global;
  if (cache) cache->blocks.resize(m.blocks.size());
  for (std::size_t s = 0; s < m.blocks.size(); ++s) {
    FeatureGraph g = in.graphs[s];
    g.nodes = graph_block_forward_nodes(in.graphs[s].nodes, in.graphs[s].adjacency, m.blocks[s],
                                        cache ? &cache->blocks[s] : nullptr);
    out.graphs.push_back(std::move(g));
  }
  return out;
}

// Accumulates scale * d(loss)/d(params) into `grads` given d(loss)/d(output).
inline void model_backward(const GraphModel& m, const MultiscaleRepresentation& in, const ModelCache& cache,
                           const RepresentationGrad& d_out, double scale, std::vector<GraphBlockParams>& grads) {
  for (std::size_t s = 0; s < m.blocks.size(); ++s) {
    const BlockGrad g = graph_block_backward(cache.blocks[s], in.graphs[s].adjacency, m.blocks[s], d_out.nodes[s]);
    for_each_param_pair(grads[s], g.params, [scale](auto& acc, const auto& d) { acc += scale * d; });
  }
}

inline GraphModel init_graph_model(const MultiscaleRepresentation& example, int out_dim, int se_ratio, Rng& rng) {
  GraphModel m;
  for (const FeatureGraph& g : example.graphs) {
    const int C = g.dim();
    if (C > 4096) {
      throw ParameterError("node dimension " + std::to_string(C) +
                           " is too large for graph-block training (limit 4096); use a smaller patch or bank");
    }
    const int out = out_dim > 0 ? out_dim : C / 2;
    m.blocks.push_back(init_graph_block(C, out, se_ratio, rng));
  }
  return m;
}

inline void store_graph_model(WeightStore& store, const GraphModel& m) {
  for (std::size_t s = 0; s < m.blocks.size(); ++s) store_graph_block(store, block_prefix(static_cast<int>(s)), m.blocks[s]);
}

inline GraphModel load_graph_model(const WeightStore& store) {
  GraphModel m;
  for (int s = 0; store.contains(block_prefix(s) + "reduce.W"); ++s) m.blocks.push_back(load_graph_block(store, block_prefix(s)));
  if (m.blocks.empty()) throw MissingWeightsError("no graph blocks in weights");
  return m;
}

struct TrainOptions {
  double lr = 0.001;
  int lr_step = 10;
  double lr_decay = 0.5;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int batch = 64;
  int epochs = 40;
  double margin = kDefaultMargin;
  int adj_sign = kDefaultAdjSign;
  bool mean_reduction = false;
  int out_dim = 0;
  int se_ratio = kDefaultSeRatio;
  int eval_triplets = 256;
  std::uint64_t seed = 0;

  static TrainOptions from_config(const Config& c) {
    TrainOptions o;
    o.lr = c.get_real("train.lr");
    o.lr_step = static_cast<int>(c.get_int("train.lr_step"));
    o.lr_decay = c.get_real("train.lr_decay");
    o.momentum = c.get_real("train.momentum");
    o.weight_decay = c.get_real("train.weight_decay");
    o.batch = static_cast<int>(c.get_int("train.batch"));
    o.epochs = static_cast<int>(c.get_int("train.epochs"));
    o.margin = c.get_real("train.margin");
    o.adj_sign = static_cast<int>(c.get_int("match.adj_sign"));
    o.mean_reduction = c.get("train.reduction") == "mean";
    o.out_dim = static_cast<int>(c.get_int("train.out_dim"));
    o.se_ratio = static_cast<int>(c.get_int("train.se_ratio"));
    o.eval_triplets = static_cast<int>(c.get_int("train.eval_triplets"));
    o.seed = c.seed();
    return o;
  }

  void validate() const {
    if (!(lr > 0) || lr_step < 1 || !(lr_decay > 0) || momentum < 0 || momentum >= 1 || weight_decay < 0 ||
        batch < 1 || epochs < 0 || !(margin > 0) || eval_triplets < 1) {
      throw ParameterError("invalid training options");
    }
    check_adj_sign(adj_sign);
  }

  // Decays by lr_decay every lr_step epochs (epochs counted from 0).
  double lr_at(int epoch) const { return lr * std::pow(lr_decay, epoch / lr_step); }
};

struct Triplet {
  std::size_t anchor, positive, negative;
};

class TripletSampler {
 public:
  explicit TripletSampler(const std::vector<std::string>& labels) : labels_(labels) {
    for (std::size_t k = 0; k < labels.size(); ++k) by_label_[labels[k]].push_back(k);
    int multi = 0;
    for (const auto& [label, idx] : by_label_) multi += idx.size() >= 2;
    if (by_label_.size() < 2 || multi < 2) {
      throw DatasetError("triplet sampling needs at least 2 classes with at least 2 samples each");
    }
  }

  std::size_t random_negative(std::size_t anchor, Rng& rng) const {
    std::size_t n;
    do {
      n = uniform_index(rng, labels_.size());
    } while (labels_[n] == labels_[anchor]);
    return n;
  }

  Triplet random_triplet(Rng& rng) const {
    std::size_t a;
    do {
      a = uniform_index(rng, labels_.size());
    } while (by_label_.at(labels_[a]).size() < 2);
    const auto& same = by_label_.at(labels_[a]);
    std::size_t p;
    do {
      p = same[uniform_index(rng, same.size())];
    } while (p == a);
    return {a, p, random_negative(a, rng)};
  }

  // Every ordered same-class (anchor, positive) pair once, shuffled, each
  // with a random negative.
  std::vector<Triplet> epoch(Rng& rng) const {
    std::vector<Triplet> out;
    for (const auto& [label, idx] : by_label_)
      for (std::size_t a : idx)
        for (std::size_t p : idx)
          if (a != p) out.push_back({a, p, 0});
    for (std::size_t k = out.size(); k > 1; --k) std::swap(out[k - 1], out[uniform_index(rng, k)]);
    for (Triplet& t : out) t.negative = random_negative(t.anchor, rng);
    return out;
  }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::vector<std::size_t>> by_label_;
};

struct EpochLog {
  int epoch = 0;  // 0 = before training
  double lr = 0.0;
  double train_loss = 0.0;  // mean over the epoch's triplets, before each update
  double eval_loss = 0.0;   // mean over the fixed evaluation triplets after the epoch
};

struct TrainResult {
  GraphModel model;
  std::vector<EpochLog> log;
  double initial_loss() const { return log.front().eval_loss; }
  double final_loss() const { return log.back().eval_loss; }
};

inline double mean_triplet_loss(const GraphModel& m, const std::vector<MultiscaleRepresentation>& data,
                                const std::vector<Triplet>& triplets, double margin, int adj_sign) {
  std::vector<MultiscaleRepresentation> out;
  out.reserve(data.size());
  for (const auto& r : data) out.push_back(model_forward(m, r));
  double sum = 0.0;
  for (const Triplet& t : triplets) {
    sum += triplet_loss(out[t.anchor], out[t.positive], out[t.negative], margin, adj_sign).loss;
  }
  return sum / static_cast<double>(triplets.size());
}

namespace detail {

struct BatchEntry {
  MultiscaleRepresentation out;
  ModelCache cache;
  RepresentationGrad grad;
  bool touched = false;

  void add(const RepresentationGrad& g) {
    for (std::size_t s = 0; s < grad.nodes.size(); ++s) grad.nodes[s] += g.nodes[s];
    touched = true;
  }
};

}  // namespace detail

inline TrainResult train_graph_model(const std::vector<Sample>& samples, const TrainOptions& opt,
                                     std::ostream* log_out = nullptr) {
  opt.validate();
  if (samples.empty()) throw DatasetError("no training samples");
  std::vector<std::string> labels;
  std::vector<MultiscaleRepresentation> data;
  for (const Sample& s : samples) {
    labels.push_back(s.label);
    data.push_back(s.repr);
    check_compatible(samples.front().repr, s.repr);
  }
  const TripletSampler sampler(labels);
  Rng rng(opt.seed);
  TrainResult result;
  result.model = init_graph_model(data.front(), opt.out_dim, opt.se_ratio, rng);
  std::vector<Triplet> eval_set;
  for (int k = 0; k < opt.eval_triplets; ++k) eval_set.push_back(sampler.random_triplet(rng));

  auto emit = [&](const EpochLog& e) {
    result.log.push_back(e);
    if (log_out) *log_out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.eval_loss << '\n';
  };
  if (log_out) *log_out << "epoch,lr,train_loss,eval_loss\n";
  emit({0, 0.0, 0.0, mean_triplet_loss(result.model, data, eval_set, opt.margin, opt.adj_sign)});

  GraphModel& model = result.model;
  std::vector<GraphBlockParams> velocity;
  for (const auto& b : model.blocks) velocity.push_back(zeros_like(b));

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = opt.lr_at(epoch);
    const auto triplets = sampler.epoch(rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < triplets.size(); start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(triplets.size(), start + static_cast<std::size_t>(opt.batch));
      const double scale = opt.mean_reduction ? 1.0 / static_cast<double>(end - start) : 1.0;
      std::vector<GraphBlockParams> grads;
      for (const auto& b : model.blocks) grads.push_back(zeros_like(b));
      // Each sample is forwarded once per batch; upstream gradients from all
      // triplets it appears in are summed before a single backward pass.
      std::map<std::size_t, detail::BatchEntry> entries;
      for (std::size_t k = start; k < end; ++k)
        for (std::size_t i : {triplets[k].anchor, triplets[k].positive, triplets[k].negative})
          if (!entries.count(i)) {
            detail::BatchEntry& e = entries[i];
            e.out = model_forward(model, data[i], &e.cache);
            e.grad = RepresentationGrad::zeros_like(e.out);
          }
      for (std::size_t k = start; k < end; ++k) {
        const Triplet& t = triplets[k];
        detail::BatchEntry& a = entries.at(t.anchor);
        detail::BatchEntry& p = entries.at(t.positive);
        detail::BatchEntry& n = entries.at(t.negative);
        const TripletResult r = triplet_loss(a.out, p.out, n.out, opt.margin, opt.adj_sign);
        epoch_loss += r.loss;
        if (!r.active) continue;
        a.add(r.d_anchor);
        p.add(r.d_positive);
        n.add(r.d_negative);
      }
      for (const auto& [i, e] : entries)
        if (e.touched) model_backward(model, data[i], e.cache, e.grad, scale, grads);
      for (std::size_t s = 0; s < model.blocks.size(); ++s) {
        for_each_param_pair(model.blocks[s], grads[s], [&](auto& param, auto& g) { g += opt.weight_decay * param; });
        for_each_param_pair(velocity[s], grads[s], [&](auto& v, const auto& g) { v = opt.momentum * v + g; });
        for_each_param_pair(model.blocks[s], velocity[s], [&](auto& param, const auto& v) { param -= lr * v; });
      }
    }
    emit({epoch + 1, lr, epoch_loss / static_cast<double>(triplets.size()),
          mean_triplet_loss(model, data, eval_set, opt.margin, opt.adj_sign)});
  }
  return result;
}

}  // namespace msdgr
