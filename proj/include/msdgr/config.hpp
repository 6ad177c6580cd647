#pragma once

// Experiment configuration (line-based key = value with dotted sections) and
// dataset manifests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "msdgr/error.hpp"

namespace msdgr {

enum class ConfigType { Int, Real, String, Choice };

struct ConfigKey {
  std::string name;
  ConfigType type;
  std::string default_value;
  std::vector<std::string> choices;  // Choice only
  std::string help;
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", ConfigType::Int, "0", {}, "master seed; MSDGR_SEED overrides"},
      {"pipeline", ConfigType::Choice, "gabor", {"gabor", "cnn-weights"}, "representation pipeline"},
      {"localizer", ConfigType::Choice, "energy-peak", {"grid", "energy-peak", "sln", "external"}, "node localizer"},
      {"localizer.file", ConfigType::String, "", {}, "coordinate CSV for the external localizer"},
      {"gabor.bank", ConfigType::String, "", {}, "filter bank config; empty = 8 x 5 default bank"},
      {"gabor.patch", ConfigType::Int, "9", {}, "patch scale S (odd)"},
      {"gabor.nodes", ConfigType::Int, "32", {}, "nodes per image"},
      {"cnn.weights", ConfigType::String, "", {}, "MSDG weights for backbone/localizers/graph blocks"},
      {"nodes.small", ConfigType::Int, "64", {}, "nodes at the small scale"},
      {"nodes.medium", ConfigType::Int, "32", {}, "nodes at the medium scale"},
      {"nodes.large", ConfigType::Int, "16", {}, "nodes at the large scale"},
      {"radius.small", ConfigType::Real, "0", {}, "adjacency radius, 0 = 2 sqrt(HW / N)"},
      {"radius.medium", ConfigType::Real, "0", {}, "adjacency radius, 0 = 2 sqrt(HW / N)"},
      {"radius.large", ConfigType::Real, "0", {}, "adjacency radius, 0 = 2 sqrt(HW / N)"},
      {"match.mode", ConfigType::Choice, "dynamic", {"static", "dynamic", "both"}, "matching mode"},
      {"match.adj_sign", ConfigType::Int, "-1", {}, "sign of the adjacency term (-1 or 1)"},
      {"occlusion.kind", ConfigType::Choice, "rectangle-region", {"rectangle-region", "random-rectangle", "random-shape"},
       "occlusion generator"},
      {"occlusion.region", ConfigType::Choice, "right", {"right", "left", "upper", "bottom", "bilateral"},
       "side for rectangle-region"},
      {"occlusion.fraction", ConfigType::Real, "0.3", {}, "occluded area fraction"},
      {"occlusion.fill", ConfigType::Choice, "noise", {"noise", "constant"}, "fill of occluded pixels"},
      {"occlusion.value", ConfigType::Real, "0", {}, "constant fill value"},
      {"train.lr", ConfigType::Real, "0.001", {}, "initial learning rate"},
      {"train.lr_step", ConfigType::Int, "10", {}, "epochs between learning-rate decays"},
      {"train.lr_decay", ConfigType::Real, "0.5", {}, "learning-rate decay factor"},
      {"train.momentum", ConfigType::Real, "0.9", {}, "SGD momentum"},
      {"train.weight_decay", ConfigType::Real, "0.0001", {}, "L2 weight decay"},
      {"train.batch", ConfigType::Int, "64", {}, "triplets per batch"},
      {"train.epochs", ConfigType::Int, "40", {}, "training epochs"},
      {"train.margin", ConfigType::Real, "1", {}, "triplet margin"},
      {"train.reduction", ConfigType::Choice, "sum", {"sum", "mean"}, "batch loss reduction"},
      {"train.out_dim", ConfigType::Int, "0", {}, "reduced node dimension, 0 = C / 2"},
      {"train.se_ratio", ConfigType::Int, "4", {}, "SE bottleneck ratio"},
      {"train.eval_triplets", ConfigType::Int, "256", {}, "fixed triplets for the loss log"},
  };
  return schema;
}

class Config {
 public:
  Config() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static Config parse(std::istream& in, const std::string& origin = "config") {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      const std::string where = origin + ":" + std::to_string(lineno) + ": ";
      if (eq == std::string::npos) throw FormatError(where + "expected key = value");
      try {
        c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
      } catch (const ParameterError& e) {
        throw ParameterError(where + e.what());
      }
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config '" + path + "'");
    return parse(in, path);
  }

  // Validates against the schema; unknown keys are rejected.
  void set(const std::string& key, const std::string& value) {
    const ConfigKey& k = lookup(key);
    switch (k.type) {
      case ConfigType::Int: parse_int(key, value); break;
      case ConfigType::Real: parse_real(key, value); break;
      case ConfigType::Choice:
        if (std::find(k.choices.begin(), k.choices.end(), value) == k.choices.end()) {
          std::string opts;
          for (const auto& c : k.choices) opts += (opts.empty() ? "" : "|") + c;
          throw ParameterError("'" + key + "' must be one of " + opts + ", got '" + value + "'");
        }
        break;
      case ConfigType::String: break;
    }
    values_[key] = value;
  }

  // "key=value" override as given on a command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParameterError("override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  void apply_env() {
    if (const char* s = std::getenv("MSDGR_SEED"); s && *s) {
      try {
        set("seed", s);
      } catch (const ParameterError&) {
        throw ParameterError(std::string("MSDGR_SEED is not an integer: '") + s + "'");
      }
    }
  }

  long long get_int(const std::string& key) const { return parse_int(key, get(key)); }
  double get_real(const std::string& key) const { return parse_real(key, get(key)); }
  const std::string& get(const std::string& key) const {
    lookup(key);
    return values_.at(key);
  }

  std::uint64_t seed() const {
    const long long s = get_int("seed");
    if (s < 0) throw ParameterError("seed must be non-negative");
    return static_cast<std::uint64_t>(s);
  }

  void write(std::ostream& out) const {
    for (const auto& k : config_schema()) out << k.name << " = " << values_.at(k.name) << "\n";
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  static const ConfigKey& lookup(const std::string& key) {
    for (const auto& k : config_schema())
      if (k.name == key) return k;
    throw ParameterError("unknown config key '" + key + "'");
  }

  static long long parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ParameterError("'" + key + "' must be an integer, got '" + v + "'");
  }

  static double parse_real(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    throw ParameterError("'" + key + "' must be a finite number, got '" + v + "'");
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Manifest: CSV with header "path,label" and an optional "split" column.
// Relative paths resolve against the manifest's directory.

struct ManifestEntry {
  std::string path;
  std::string label;
  std::string split;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DatasetError("cannot open manifest '" + manifest_path + "'");
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) {
      if (!f.empty() && f.back() == '\r') f.pop_back();
      out.push_back(f);
    }
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = split(line);
  }
  const auto col = [&](const std::string& name) {
    return static_cast<int>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  const int cp = col("path"), cl = col("label"), cs = col("split");
  const int ncols = static_cast<int>(header.size());
  if (cp == ncols || cl == ncols) throw DatasetError(manifest_path + ": header must name 'path' and 'label' columns");

  std::vector<ManifestEntry> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line);
    const std::string where = manifest_path + ":" + std::to_string(lineno) + ": ";
    if (static_cast<int>(f.size()) != ncols) throw DatasetError(where + "wrong number of fields");
    ManifestEntry e;
    auto p = std::filesystem::path(f[cp]);
    e.path = (p.is_absolute() ? p : base / p).string();
    e.label = f[cl];
    if (cs < ncols) e.split = f[cs];
    if (e.label.empty()) throw DatasetError(where + "empty label");
    if (!std::filesystem::exists(e.path)) throw DatasetError(where + "no such file '" + e.path + "'");
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw DatasetError(manifest_path + ": no entries");
  return entries;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write manifest '" + path + "'");
  const bool with_split = std::any_of(entries.begin(), entries.end(), [](const auto& e) { return !e.split.empty(); });
  out << (with_split ? "path,label,split\n" : "path,label\n");
  for (const auto& e : entries) {
    out << e.path << ',' << e.label;
    if (with_split) out << ',' << e.split;
    out << '\n';
  }
}

}  // namespace msdgr
