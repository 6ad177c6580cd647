// msdgr command-line tool: extraction, matching, evaluation, training,
// gradient checks and dataset utilities.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "msdgr/config.hpp"
#include "msdgr/eval.hpp"
#include "msdgr/gradcheck.hpp"
#include "msdgr/image.hpp"
#include "msdgr/matcher.hpp"
#include "msdgr/occlusion.hpp"
#include "msdgr/pipeline.hpp"
#include "msdgr/synthetic.hpp"
#include "msdgr/training.hpp"

namespace fs = std::filesystem;
using namespace msdgr;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  // File, then command-line overrides, then MSDGR_SEED.
  Config load() const {
    Config c = config_path.empty() ? Config{} : Config::load(config_path);
    for (const auto& kv : overrides) c.set_assignment(kv);
    c.apply_env();
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_path, "configuration file (key = value)")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", common.overrides, "override a config key, key=value (repeatable)");
}

std::string seed_header(std::uint64_t seed) { return "# msdgr seed=" + std::to_string(seed) + "\n"; }

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  return out;
}

OcclusionSpec occlusion_from_config(const Config& c, std::uint64_t seed) {
  OcclusionSpec s;
  s.kind = parse_occlusion_kind(c.get("occlusion.kind"));
  s.region = parse_occlusion_region(c.get("occlusion.region"));
  s.area_fraction = c.get_real("occlusion.fraction");
  s.fill = parse_occlusion_fill(c.get("occlusion.fill"));
  s.fill_value = c.get_real("occlusion.value");
  s.seed = seed;
  return s;
}

MatchMode parse_mode(const std::string& m) {
  if (m == "static") return MatchMode::Static;
  if (m == "dynamic") return MatchMode::Dynamic;
  throw ParameterError("unknown match mode '" + m + "'");
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  Common common;
  std::string manifest, out;
  bool occlude = false;
};

int run_extract(const ExtractArgs& a) {
  const Config cfg = a.common.load();
  const std::uint64_t seed = cfg.seed();
  const Pipeline pipeline(cfg);
  std::vector<Sample> samples;
  const auto entries = read_manifest(a.manifest);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Image img = read_pnm(entries[k].path);
    if (a.occlude) img = occlude(img, occlusion_from_config(cfg, derive_seed(seed, k))).image;
    samples.push_back({entries[k].label, pipeline.represent(img)});
  }
  write_records(a.out, samples, seed);
  std::cerr << "extracted " << samples.size() << " records to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct MatchArgs {
  Common common;
  std::string a, b, out, dump, mode;
  int adj_sign = 0;
};

int run_match(const MatchArgs& m) {
  const Config cfg = m.common.load();
  const std::string mode = m.mode.empty() ? cfg.get("match.mode") : m.mode;
  const int adj_sign = m.adj_sign != 0 ? m.adj_sign : static_cast<int>(cfg.get_int("match.adj_sign"));
  check_adj_sign(adj_sign);
  std::vector<MatchMode> modes;
  if (mode == "both") {
    modes = {MatchMode::Static, MatchMode::Dynamic};
  } else {
    modes = {parse_mode(mode)};
  }
  const auto A = read_records(m.a);
  const auto B = read_records(m.b);
  if (A.empty() || B.empty()) throw DatasetError("no records to match");
  for (std::size_t j = 0; j < B.size(); ++j) {
    try {
      check_compatible(A.front().repr, B[j].repr);
    } catch (const ShapeError& e) {
      throw ShapeError(m.b + " record " + std::to_string(j) + ": " + e.what());
    }
  }
  for (std::size_t i = 1; i < A.size(); ++i) {
    try {
      check_compatible(A.front().repr, A[i].repr);
    } catch (const ShapeError& e) {
      throw ShapeError(m.a + " record " + std::to_string(i) + ": " + e.what());
    }
  }

  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!m.out.empty()) {
    out_file = open_out(m.out);
    out = &out_file;
  }
  std::ofstream dump;
  if (!m.dump.empty()) {
    dump = open_out(m.dump);
    dump << seed_header(cfg.seed()) << "index_a,index_b,mode,scale,node,cosine,retained\n";
  }
  *out << seed_header(cfg.seed());
  *out << "label_a,label_b," << (modes.size() == 2 ? "score_static,score_dynamic" : "score")
       << ",genuine_flag,index_a,index_b\n";
  *out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < A.size(); ++i) {
    for (std::size_t j = 0; j < B.size(); ++j) {
      *out << A[i].label << ',' << B[j].label;
      for (MatchMode md : modes) {
        const MatchResult r = match(A[i].repr, B[j].repr, md, adj_sign);
        *out << ',' << r.similarity;
        if (dump.is_open()) {
          write_match_rows(dump, r, std::to_string(i) + ',' + std::to_string(j) + ',' +
                                        (md == MatchMode::Static ? "static," : "dynamic,"));
        }
      }
      *out << ',' << (A[i].label == B[j].label ? 1 : 0) << ',' << i << ',' << j << '\n';
    }
  }
  if (!*out) throw FormatError("failed writing scores");
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string scores, column = "score", det, json_out;
  std::vector<double> fars = {0.001, 0.01, 0.1};
  bool drop_self = false;
};

int run_evaluate(const EvaluateArgs& a) {
  std::ifstream in(a.scores);
  if (!in) throw FormatError("cannot open '" + a.scores + "'");
  std::string first;
  std::getline(in, first);
  nlohmann::ordered_json report;
  report["scores"] = a.scores;
  report["score_column"] = a.column;
  if (const auto p = first.find("seed="); first.rfind("#", 0) == 0 && p != std::string::npos) {
    report["seed"] = std::stoull(first.substr(p + 5));
  }
  in.seekg(0);
  auto rows = read_score_csv(in, a.column, a.scores);
  if (a.drop_self) {
    std::erase_if(rows, [](const ScoreRow& r) { return r.index_a >= 0 && r.index_a == r.index_b; });
  }
  const ScoreSet s = score_set(rows);
  report["genuine"] = s.genuine.size();
  report["imposter"] = s.imposter.size();
  const EERResult e = eer(s);
  report["eer"] = e.eer;
  report["eer_threshold"] = e.threshold;
  for (double target : a.fars) {
    const FRRAtFAR f = frr_at_far(s, target);
    report["frr_at_far"].push_back({{"far_target", target},
                                    {"frr", f.frr},
                                    {"far", f.far},
                                    {"threshold", f.threshold},
                                    {"resolution_warning", f.resolution_warning}});
    if (f.resolution_warning) {
      std::cerr << "warning: " << s.imposter.size() << " imposter scores cannot resolve FAR " << target << "\n";
    }
  }
  const bool indexed = std::all_of(rows.begin(), rows.end(), [](const ScoreRow& r) { return r.index_a >= 0; });
  if (indexed && !rows.empty()) {
    const auto m = identification_matrix(rows);
    const RankN r = rank_n(m.scores, m.probe_labels, m.gallery_labels);
    report["rank1"] = r.rank1;
    report["rank5"] = r.rank5;
    report["rank10"] = r.rank10;
  }
  if (!a.det.empty()) {
    std::ofstream det = open_out(a.det);
    if (report.contains("seed")) det << seed_header(report["seed"].get<std::uint64_t>());
    write_det_csv(det, det_curve(s));
  }
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!a.json_out.empty()) open_out(a.json_out) << text;
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string records, manifest, out, log;
};

int run_train(const TrainArgs& a) {
  const Config cfg = a.common.load();
  std::vector<Sample> samples;
  if (!a.records.empty()) {
    samples = read_records(a.records);
  } else {
    const Pipeline pipeline(cfg);
    for (const auto& e : read_manifest(a.manifest)) samples.push_back({e.label, pipeline.represent(read_pnm(e.path))});
  }
  const TrainOptions opt = TrainOptions::from_config(cfg);
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log.empty()) {
    log_file = open_out(a.log);
    log = &log_file;
  }
  *log << seed_header(opt.seed);
  const TrainResult r = train_graph_model(samples, opt, log);
  WeightStore store;
  store_graph_model(store, r.model);
  save_container(a.out, store);
  std::cerr << "loss " << r.initial_loss() << " -> " << r.final_loss() << " after " << opt.epochs << " epochs\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  int seeds = 100;
  double tolerance = 1e-3;
  bool corrupt = false;
};

int run_gradcheck_cmd(const GradcheckArgs& a) {
  GradcheckOptions opt;
  opt.seed = a.seed;
  if (const char* env = std::getenv("MSDGR_SEED"); env && *env) opt.seed = std::stoull(env);
  opt.seeds = a.seeds;
  opt.tolerance = a.tolerance;
  if (a.corrupt) {
    opt.tamper = [](const std::string& layer, const std::string& param, Matrix& g) {
      if (layer == "block" && param == "gat1.W") g *= 1.01;
    };
  }
  const GradcheckReport r = run_gradcheck(opt);
  std::cout << seed_header(opt.seed);
  r.write(std::cout);
  return r.passed() ? 0 : kExitVerification;
}

// ---------------------------------------------------------------------------

struct OccludeArgs {
  Common common;
  std::string manifest, out_dir;
};

int run_occlude(const OccludeArgs& a) {
  const Config cfg = a.common.load();
  const std::uint64_t seed = cfg.seed();
  const auto entries = read_manifest(a.manifest);
  fs::create_directories(a.out_dir);
  std::vector<ManifestEntry> out_entries;
  std::ofstream summary = open_out((fs::path(a.out_dir) / "occlusion.csv").string());
  summary << seed_header(seed) << "path,mask,label,realized_fraction\n";
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const OcclusionRecord rec = occlude(read_pnm(entries[k].path), occlusion_from_config(cfg, derive_seed(seed, k)));
    const std::string stem = std::to_string(k) + "_" + fs::path(entries[k].path).stem().string();
    write_pgm((fs::path(a.out_dir) / (stem + ".pgm")).string(), rec.image);
    write_pgm((fs::path(a.out_dir) / (stem + "_mask.pgm")).string(), rec.mask_image());
    out_entries.push_back({stem + ".pgm", entries[k].label, entries[k].split});
    summary << stem << ".pgm," << stem << "_mask.pgm," << entries[k].label << ',' << rec.realized_fraction << '\n';
  }
  write_manifest((fs::path(a.out_dir) / "manifest.csv").string(), out_entries);
  std::cerr << "occluded " << entries.size() << " images into " << a.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string out_dir;
};

int run_synth(SynthArgs a) {
  if (const char* env = std::getenv("MSDGR_SEED"); env && *env) a.spec.seed = std::stoull(env);
  fs::create_directories(a.out_dir);
  std::vector<ManifestEntry> entries;
  for (const auto& s : synthetic_dataset(a.spec)) {
    const std::string name = s.label + "_" + std::to_string(s.sample_index) + ".pgm";
    write_pgm((fs::path(a.out_dir) / name).string(), s.image);
    entries.push_back({name, s.label, ""});
  }
  write_manifest((fs::path(a.out_dir) / "manifest.csv").string(), entries);
  std::cerr << "wrote " << entries.size() << " images to " << a.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct InitWeightsArgs {
  Common common;
  std::string out;
  bool blocks = false;
};

int run_init_weights(const InitWeightsArgs& a) {
  const Config cfg = a.common.load();
  const int nodes[3] = {static_cast<int>(cfg.get_int("nodes.small")), static_cast<int>(cfg.get_int("nodes.medium")),
                        static_cast<int>(cfg.get_int("nodes.large"))};
  Rng rng(cfg.seed());
  WeightStore store;
  init_cnn_weights(store, rng, nodes, a.blocks, static_cast<int>(cfg.get_int("train.se_ratio")));
  save_container(a.out, store);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale dynamic graph representation: extraction, matching and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "msdgr 1.0");
  int status = 0;

  ExtractArgs ex;
  auto* c_extract = app.add_subcommand("extract", "images in a manifest -> representation records");
  add_common(c_extract, ex.common);
  c_extract->add_option("-m,--manifest", ex.manifest, "CSV manifest (path,label[,split])")->required();
  c_extract->add_option("-o,--out", ex.out, "output record file")->required();
  c_extract->add_flag("--occlude", ex.occlude, "occlude each image per the occlusion.* config first");
  c_extract->callback([&] { status = run_extract(ex); });

  MatchArgs mt;
  auto* c_match = app.add_subcommand("match", "all-pairs scores between two record files");
  add_common(c_match, mt.common);
  c_match->add_option("a", mt.a, "probe records")->required()->check(CLI::ExistingFile);
  c_match->add_option("b", mt.b, "gallery records")->required()->check(CLI::ExistingFile);
  c_match->add_option("-o,--out", mt.out, "score CSV (default stdout)");
  c_match->add_option("--mode", mt.mode, "static, dynamic or both (default match.mode)")
      ->check(CLI::IsMember({"static", "dynamic", "both"}));
  c_match->add_option("--adj-sign", mt.adj_sign, "sign of the adjacency term (default match.adj_sign)")
      ->check(CLI::IsMember({-1, 1}));
  c_match->add_option("--dump", mt.dump, "per node-pair cosine and retention CSV");
  c_match->callback([&] { status = run_match(mt); });

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "EER, FRR at FAR, DET and rank-N from a score CSV");
  c_eval->add_option("scores", ev.scores, "score CSV")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--score-column", ev.column, "score column name");
  c_eval->add_option("--far", ev.fars, "FAR targets for FRR@FAR")->delimiter(',');
  c_eval->add_option("--det", ev.det, "write the DET curve CSV here");
  c_eval->add_option("--json", ev.json_out, "also write the report here");
  c_eval->add_flag("--drop-self", ev.drop_self, "ignore rows with index_a == index_b");
  c_eval->callback([&] { status = run_evaluate(ev); });

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train-graph", "triplet training of the graph blocks");
  add_common(c_train, tr.common);
  auto* src = c_train->add_option("-r,--records", tr.records, "training records from extract");
  c_train->add_option("-m,--manifest", tr.manifest, "or a manifest to extract on the fly")->excludes(src);
  c_train->add_option("-o,--out", tr.out, "output weights (MSDG container)")->required();
  c_train->add_option("--log", tr.log, "loss log CSV (default stdout)");
  c_train->callback([&] {
    if (tr.records.empty() && tr.manifest.empty()) throw CLI::RequiredError("--records or --manifest");
    status = run_train(tr);
  });

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
  c_grad->add_option("--seed", gc.seed, "base seed (MSDGR_SEED overrides)");
  c_grad->add_option("--seeds", gc.seeds, "random instances per check")->check(CLI::PositiveNumber);
  c_grad->add_option("--tolerance", gc.tolerance, "maximum relative error")->check(CLI::PositiveNumber);
  c_grad->add_flag("--corrupt", gc.corrupt, "perturb one analytic gradient (the check must then fail)");
  c_grad->callback([&] { status = run_gradcheck_cmd(gc); });

  OccludeArgs oc;
  auto* c_occ = app.add_subcommand("occlude", "write occluded copies of a dataset with their masks");
  add_common(c_occ, oc.common);
  c_occ->add_option("-m,--manifest", oc.manifest, "input manifest")->required();
  c_occ->add_option("-o,--out-dir", oc.out_dir, "output directory")->required();
  c_occ->callback([&] { status = run_occlude(oc); });

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic texture-identity dataset");
  c_synth->add_option("-o,--out-dir", sy.out_dir, "output directory")->required();
  c_synth->add_option("--classes", sy.spec.classes, "identities")->check(CLI::PositiveNumber);
  c_synth->add_option("--samples", sy.spec.samples, "images per identity")->check(CLI::PositiveNumber);
  c_synth->add_option("--height", sy.spec.height, "image height")->check(CLI::PositiveNumber);
  c_synth->add_option("--width", sy.spec.width, "image width")->check(CLI::PositiveNumber);
  c_synth->add_option("--components", sy.spec.components, "gratings per image")->check(CLI::PositiveNumber);
  c_synth->add_option("--shared", sy.spec.shared, "gratings common to all identities");
  c_synth->add_option("--phase-jitter", sy.spec.phase_jitter, "per-sample phase std-dev (radians)");
  c_synth->add_option("--amplitude-jitter", sy.spec.amplitude_jitter, "per-sample relative amplitude std-dev");
  c_synth->add_option("--noise", sy.spec.noise, "pixel noise std-dev");
  c_synth->add_option("--seed", sy.spec.seed, "seed (MSDGR_SEED overrides)");
  c_synth->callback([&] { status = run_synth(sy); });

  InitWeightsArgs iw;
  auto* c_init = app.add_subcommand("init-weights", "random weights for the cnn-weights pipeline");
  add_common(c_init, iw.common);
  c_init->add_option("-o,--out", iw.out, "output weights (MSDG container)")->required();
  c_init->add_flag("--blocks", iw.blocks, "include graph blocks");
  c_init->callback([&] { status = run_init_weights(iw); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return status;
}
