#pragma once

// Image -> multiscale representation pipelines, and the record file that
// stores representations (one MSDG container per sample, back to back).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msdgr/config.hpp"
#include "msdgr/container.hpp"
#include "msdgr/error.hpp"
#include "msdgr/gabor.hpp"
#include "msdgr/graph.hpp"
#include "msdgr/image.hpp"
#include "msdgr/matcher.hpp"
#include "msdgr/network.hpp"
#include "msdgr/segat.hpp"

namespace msdgr {

inline LocalizerMode parse_localizer_mode(const std::string& s) {
  if (s == "grid") return LocalizerMode::Grid;
  if (s == "energy-peak") return LocalizerMode::EnergyPeak;
  if (s == "sln") return LocalizerMode::Sln;
  if (s == "external") return LocalizerMode::External;
  throw ParameterError("unknown localizer '" + s + "'");
}

inline std::string sln_prefix(int scale) { return "sln" + std::to_string(scale + 1) + "."; }
inline std::string block_prefix(int scale) { return "block" + std::to_string(scale + 1) + "."; }

// Bilinear resampling with pixel centres aligned at the corners.
inline Image resize_bilinear(const Image& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  const Tensor3 t = to_tensor(img);
  Image out(height, width);
  const double sy = height > 1 ? double(img.height - 1) / (height - 1) : 0.0;
  const double sx = width > 1 ? double(img.width - 1) / (width - 1) : 0.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.at(y, x) = bilinear_sample(t, y * sy, x * sx)(0);
  return out;
}

// Adds randomly initialised backbone, per-scale SLN and graph-block weights.
inline void init_cnn_weights(WeightStore& store, Rng& rng, const int (&nodes)[3], bool with_blocks,
                             int se_ratio = kDefaultSeRatio) {
  const NetworkSpec backbone = backbone_spec();
  init_network_weights(backbone, store, rng);
  for (int s = 0; s < 3; ++s) {
    const Shape3 map = backbone[kBackboneScaleLayers[s]].output;
    init_network_weights(sln_spec(map, nodes[s], sln_prefix(s)), store, rng);
    if (with_blocks) store_graph_block(store, block_prefix(s), init_graph_block(map.channels, map.channels / 2, se_ratio, rng));
  }
}

class Pipeline {
 public:
  enum class Kind { Gabor, Cnn };

  explicit Pipeline(const Config& cfg) {
    kind_ = cfg.get("pipeline") == "gabor" ? Kind::Gabor : Kind::Cnn;
    localizer_.mode = parse_localizer_mode(cfg.get("localizer"));
    localizer_.file = cfg.get("localizer.file");
    if (localizer_.mode == LocalizerMode::External && localizer_.file.empty()) {
      throw ParameterError("external localizer needs localizer.file");
    }
    if (kind_ == Kind::Gabor) {
      if (localizer_.mode == LocalizerMode::Sln) throw ParameterError("the gabor pipeline has no SLN localizer");
      const std::string bank = cfg.get("gabor.bank");
      bank_ = std::make_shared<GaborBank>(bank.empty() ? default_gabor_bank() : load_gabor_bank(bank));
      patch_ = static_cast<int>(cfg.get_int("gabor.patch"));
      if (patch_ < 1 || patch_ % 2 == 0) throw ParameterError("gabor.patch must be a positive odd number");
      gabor_nodes_ = static_cast<int>(cfg.get_int("gabor.nodes"));
      if (gabor_nodes_ < 1) throw ParameterError("gabor.nodes must be positive");
    } else {
      const std::string path = cfg.get("cnn.weights");
      if (path.empty()) throw MissingWeightsError("the cnn-weights pipeline needs cnn.weights");
      std::ifstream probe(path, std::ios::binary);
      if (!probe) throw MissingWeightsError("cannot open weights file '" + path + "'");
      weights_ = std::make_shared<WeightStore>(load_container(path));
      const char* names[3] = {"small", "medium", "large"};
      for (int s = 0; s < 3; ++s) {
        nodes_[s] = static_cast<int>(cfg.get_int(std::string("nodes.") + names[s]));
        radius_[s] = cfg.get_real(std::string("radius.") + names[s]);
        if (nodes_[s] < 1) throw ParameterError(std::string("nodes.") + names[s] + " must be positive");
        if (radius_[s] < 0) throw ParameterError(std::string("radius.") + names[s] + " must be non-negative");
        if (weights_->contains(block_prefix(s) + "reduce.W")) blocks_[s] = load_graph_block(*weights_, block_prefix(s));
      }
      localizer_.weights = weights_;
    }
  }

  Kind kind() const { return kind_; }

  MultiscaleRepresentation represent(const Image& image) const {
    return kind_ == Kind::Gabor ? represent_gabor(image) : represent_cnn(image);
  }

 private:
  MultiscaleRepresentation represent_gabor(const Image& image) const {
    const Tensor3 features = extract(*bank_, image);
    const NodeCoords coords = localize_nodes(gabor_energy(features), localizer_, gabor_nodes_);
    MultiscaleRepresentation r;
    r.graphs.push_back(graph_from_gabor(features, coords, patch_));
    return r;
  }

  MultiscaleRepresentation represent_cnn(const Image& image) const {
    const Image in = resize_bilinear(image, kBackboneInput.height, kBackboneInput.width);
    const auto trace = forward_network_trace(backbone_spec(), *weights_, to_tensor(in));
    MultiscaleRepresentation r;
    for (int s = 0; s < 3; ++s) {
      const Tensor3& map = trace[kBackboneScaleLayers[s]];
      LocalizerSpec loc = localizer_;
      loc.weight_prefix = sln_prefix(s);
      const double radius = radius_[s] > 0 ? radius_[s] : default_radius(map.height(), map.width(), nodes_[s]);
      FeatureGraph g = make_feature_graph(map, loc, nodes_[s], radius, static_cast<ScaleId>(s));
      if (blocks_[s]) g = graph_block_forward(g, *blocks_[s]);
      r.graphs.push_back(std::move(g));
    }
    const Tensor3& global = trace[kBackboneGlobalLayer];
    r.global = Eigen::Map<const Vector>(global.data().data(), static_cast<Eigen::Index>(global.size()));
    return r;
  }

  Kind kind_ = Kind::Gabor;
  LocalizerSpec localizer_;
  std::shared_ptr<const GaborBank> bank_;
  int patch_ = kDefaultPatchScale;
  int gabor_nodes_ = 32;
  std::shared_ptr<const WeightStore> weights_;
  int nodes_[3] = {64, 32, 16};
  double radius_[3] = {0, 0, 0};
  std::optional<GraphBlockParams> blocks_[3];
};

// ---------------------------------------------------------------------------
// Records

struct Sample {
  std::string label;
  MultiscaleRepresentation repr;
};

inline MultiscaleRepresentation quantized(const MultiscaleRepresentation& r) {
  MultiscaleRepresentation q;
  for (const FeatureGraph& g : r.graphs) q.graphs.push_back(quantized(g));
  q.global = r.global.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  return q;
}

namespace detail {

// A 64-bit seed as four exactly representable 16-bit chunks, low first.
inline std::vector<float> seed_chunks(std::uint64_t seed) {
  std::vector<float> out;
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<float>((seed >> (16 * k)) & 0xFFFF));
  return out;
}

inline std::uint64_t seed_from_chunks(const std::vector<float>& v) {
  std::uint64_t s = 0;
  for (int k = 0; k < 4; ++k) s |= static_cast<std::uint64_t>(v[k]) << (16 * k);
  return s;
}

}  // namespace detail

inline WeightStore sample_record(const Sample& s, std::size_t index, std::uint64_t seed) {
  WeightStore store;
  std::vector<float> label;
  for (char c : s.label) label.push_back(static_cast<float>(static_cast<unsigned char>(c)));
  const auto length = static_cast<std::uint32_t>(label.size());
  store.add("meta.label", {length}, std::move(label));
  store.add_scalar("meta.index", static_cast<double>(index));
  store.add("meta.seed", {4}, detail::seed_chunks(seed));
  store.add_scalar("meta.scales", static_cast<double>(s.repr.graphs.size()));
  for (std::size_t k = 0; k < s.repr.graphs.size(); ++k) store_graph(store, "scale" + std::to_string(k) + ".", s.repr.graphs[k]);
  if (s.repr.global.size() > 0) store.add_vector("global", s.repr.global);
  return store;
}

inline Sample sample_from_record(const WeightStore& store, std::uint64_t* seed = nullptr) {
  Sample s;
  for (float c : store.get("meta.label").data) s.label.push_back(static_cast<char>(static_cast<unsigned char>(c)));
  if (seed) *seed = detail::seed_from_chunks(store.get("meta.seed", {4}).data);
  const auto scales = static_cast<int>(store.scalar("meta.scales"));
  for (int k = 0; k < scales; ++k) s.repr.graphs.push_back(load_graph(store, "scale" + std::to_string(k) + "."));
  if (store.contains("global")) s.repr.global = store.vector("global");
  return s;
}

inline void write_records(const std::string& path, const std::vector<Sample>& samples, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  for (std::size_t k = 0; k < samples.size(); ++k) write_container(out, sample_record(samples[k], k, seed));
  if (!out) throw FormatError("failed writing '" + path + "'");
}

inline std::vector<Sample> read_records(const std::string& path, std::uint64_t* seed = nullptr) {
  std::vector<Sample> out;
  for (const WeightStore& store : load_records(path)) out.push_back(sample_from_record(store, seed));
  return out;
}

}  // namespace msdgr
