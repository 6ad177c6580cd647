#pragma once

// Verification metrics (FAR, FRR, EER, DET) and identification accuracy
// (rank-N) over similarity scores: a pair is accepted when score >= threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "msdgr/error.hpp"

namespace msdgr {

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> imposter;
};

struct DETPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

struct EERResult {
  double eer = 0.0;
  double threshold = 0.0;
};

struct FRRAtFAR {
  double frr = 0.0;
  double far = 0.0;  // achieved
  double threshold = 0.0;
  bool resolution_warning = false;  // fewer imposters than 1 / far_target
};

namespace detail {

inline void check_scores(const ScoreSet& s) {
  if (s.genuine.empty()) throw MetricError("no genuine scores");
  if (s.imposter.empty()) throw MetricError("no imposter scores");
  for (const auto* list : {&s.genuine, &s.imposter})
    for (double v : *list)
      if (!std::isfinite(v)) throw MetricError("score list contains a non-finite value");
}

// Sorted copies for counting by binary search.
struct SortedScores {
  std::vector<double> genuine, imposter;

  explicit SortedScores(const ScoreSet& s) : genuine(s.genuine), imposter(s.imposter) {
    check_scores(s);
    std::sort(genuine.begin(), genuine.end());
    std::sort(imposter.begin(), imposter.end());
  }

  DETPoint at(double t) const {
    const auto imp_below = std::lower_bound(imposter.begin(), imposter.end(), t) - imposter.begin();
    const auto gen_below = std::lower_bound(genuine.begin(), genuine.end(), t) - genuine.begin();
    const auto n_imp = static_cast<std::ptrdiff_t>(imposter.size());
    return {t, static_cast<double>(n_imp - imp_below) / static_cast<double>(n_imp),
            static_cast<double>(gen_below) / static_cast<double>(genuine.size())};
  }

  // Every distinct score ascending, then one value above the maximum where
  // everything is rejected.
  std::vector<double> thresholds() const {
    std::vector<double> t;
    t.reserve(genuine.size() + imposter.size() + 1);
    std::merge(genuine.begin(), genuine.end(), imposter.begin(), imposter.end(), std::back_inserter(t));
    t.erase(std::unique(t.begin(), t.end()), t.end());
    t.push_back(std::nextafter(t.back(), std::numeric_limits<double>::infinity()));
    return t;
  }
};

}  // namespace detail

inline std::pair<double, double> far_frr(const ScoreSet& s, double threshold) {
  const DETPoint p = detail::SortedScores(s).at(threshold);
  return {p.far, p.frr};
}

// Threshold sweep in ascending order; far is non-increasing, frr non-decreasing.
inline std::vector<DETPoint> det_curve(const ScoreSet& s) {
  const detail::SortedScores sorted(s);
  std::vector<DETPoint> out;
  for (double t : sorted.thresholds()) out.push_back(sorted.at(t));
  return out;
}

// First sweep point with far <= frr. An exact tie gives the EER directly;
// otherwise far and frr are interpolated linearly between that point and its
// predecessor to where they meet.
inline EERResult eer(const ScoreSet& s) {
  const auto curve = det_curve(s);
  std::size_t k = 0;
  while (curve[k].far > curve[k].frr) ++k;  // the last point has far 0, frr 1
  if (curve[k].far == curve[k].frr || k == 0) return {(curve[k].far + curve[k].frr) / 2, curve[k].threshold};
  const DETPoint& a = curve[k - 1];
  const DETPoint& b = curve[k];
  const double da = a.far - a.frr;
  const double db = b.far - b.frr;
  const double lambda = da / (da - db);
  const double far = a.far + lambda * (b.far - a.far);
  const double frr = a.frr + lambda * (b.frr - a.frr);
  return {(far + frr) / 2, a.threshold + lambda * (b.threshold - a.threshold)};
}

// Lowest sweep threshold whose far does not exceed the target. Between sweep
// points frr is constant, so this is the frr at the infimum of admissible
// thresholds.
inline FRRAtFAR frr_at_far(const ScoreSet& s, double far_target) {
  if (!(far_target > 0.0 && far_target <= 1.0)) {
    throw MetricError("FAR target must lie in (0, 1], got " + std::to_string(far_target));
  }
  const detail::SortedScores sorted(s);
  for (double t : sorted.thresholds()) {
    const DETPoint p = sorted.at(t);
    if (p.far <= far_target) {
      return {p.frr, p.far, t, static_cast<double>(sorted.imposter.size()) * far_target < 1.0};
    }
  }
  throw MetricError("no admissible threshold");  // unreachable: the last point has far 0
}

// Rank of each probe: 1 + number of other-label gallery entries scoring
// strictly above the probe's best same-label entry (ties favour the probe).
// NaN marks a comparison that was not made and is skipped.
inline std::vector<int> probe_ranks(const std::vector<std::vector<double>>& scores,
                                    const std::vector<std::string>& probe_labels,
                                    const std::vector<std::string>& gallery_labels) {
  if (scores.size() != probe_labels.size()) throw MetricError("score rows do not match probe labels");
  std::vector<int> ranks;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    const auto& row = scores[p];
    if (row.size() != gallery_labels.size()) throw MetricError("score columns do not match gallery labels");
    double best = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t g = 0; g < row.size(); ++g) {
      if (std::isnan(row[g])) continue;
      if (!std::isfinite(row[g])) throw MetricError("non-finite identification score");
      if (gallery_labels[g] == probe_labels[p]) {
        best = found ? std::max(best, row[g]) : row[g];
        found = true;
      }
    }
    if (!found) throw ProtocolError("probe label '" + probe_labels[p] + "' has no gallery entry");
    int rank = 1;
    for (std::size_t g = 0; g < row.size(); ++g)
      if (gallery_labels[g] != probe_labels[p] && row[g] > best) ++rank;
    ranks.push_back(rank);
  }
  return ranks;
}

inline double rank_accuracy(const std::vector<int>& ranks, int n) {
  if (ranks.empty()) throw MetricError("no probes");
  if (n < 1) throw MetricError("rank must be at least 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [n](int r) { return r <= n; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

struct RankN {
  double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0;
};

inline RankN rank_n(const std::vector<std::vector<double>>& scores, const std::vector<std::string>& probe_labels,
                    const std::vector<std::string>& gallery_labels) {
  const auto ranks = probe_ranks(scores, probe_labels, gallery_labels);
  return {rank_accuracy(ranks, 1), rank_accuracy(ranks, 5), rank_accuracy(ranks, 10)};
}

// ---------------------------------------------------------------------------
// Score files: comment lines start with '#', then a header naming the columns.
// label_a, label_b and genuine_flag are required; the score column is chosen
// by name; index_a / index_b identify samples when present.

struct ScoreRow {
  std::string label_a, label_b;
  double score = 0.0;
  bool genuine = false;
  long long index_a = -1, index_b = -1;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline std::vector<ScoreRow> read_score_csv(std::istream& in, const std::string& score_column = "score",
                                            const std::string& origin = "scores") {
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) continue;
    header = detail::split_csv(line);
    break;
  }
  if (header.empty()) throw FormatError(origin + ": missing header line");
  auto col = [&](const std::string& name, bool required) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (!required) return -1;
      std::string have;
      for (const auto& h : header) have += (have.empty() ? "" : ", ") + h;
      throw FormatError(origin + ":" + std::to_string(lineno) + ": no column '" + name + "' (have " + have + ")");
    }
    return static_cast<int>(it - header.begin());
  };
  const int ca = col("label_a", true), cb = col("label_b", true), cs = col(score_column, true),
            cg = col("genuine_flag", true), cia = col("index_a", false), cib = col("index_b", false);

  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv(line);
    auto fail = [&](const std::string& what) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": " + what);
    };
    if (f.size() != header.size()) {
      fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    ScoreRow r;
    r.label_a = f[ca];
    r.label_b = f[cb];
    try {
      std::size_t used = 0;
      r.score = std::stod(f[cs], &used);
      if (used != f[cs].size() || !std::isfinite(r.score)) throw std::invalid_argument(f[cs]);
    } catch (const std::exception&) {
      fail("bad score '" + f[cs] + "'");
    }
    if (f[cg] == "1") {
      r.genuine = true;
    } else if (f[cg] != "0") {
      fail("genuine_flag must be 0 or 1, got '" + f[cg] + "'");
    }
    auto index = [&](int c) -> long long {
      if (c < 0) return -1;
      try {
        std::size_t used = 0;
        const long long v = std::stoll(f[c], &used);
        if (used != f[c].size() || v < 0) throw std::invalid_argument(f[c]);
        return v;
      } catch (const std::exception&) {
        fail("bad sample index '" + f[c] + "'");
      }
      return -1;
    };
    r.index_a = index(cia);
    r.index_b = index(cib);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline ScoreSet score_set(const std::vector<ScoreRow>& rows) {
  ScoreSet s;
  for (const auto& r : rows) (r.genuine ? s.genuine : s.imposter).push_back(r.score);
  return s;
}

// Probe x gallery matrix from rows carrying sample indices; probes are the
// distinct index_a values, gallery the distinct index_b values, both ascending.
// Pairs absent from the file stay NaN.
struct IdentificationMatrix {
  std::vector<std::vector<double>> scores;
  std::vector<std::string> probe_labels, gallery_labels;
};

inline IdentificationMatrix identification_matrix(const std::vector<ScoreRow>& rows) {
  std::map<long long, std::string> probes, gallery;
  for (const auto& r : rows) {
    if (r.index_a < 0 || r.index_b < 0) throw ProtocolError("rank-N needs index_a/index_b columns");
    probes[r.index_a] = r.label_a;
    gallery[r.index_b] = r.label_b;
  }
  std::map<long long, std::size_t> prow, gcol;
  IdentificationMatrix m;
  for (const auto& [idx, label] : probes) {
    prow[idx] = m.probe_labels.size();
    m.probe_labels.push_back(label);
  }
  for (const auto& [idx, label] : gallery) {
    gcol[idx] = m.gallery_labels.size();
    m.gallery_labels.push_back(label);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.scores.assign(m.probe_labels.size(), std::vector<double>(m.gallery_labels.size(), nan));
  for (const auto& r : rows) m.scores[prow[r.index_a]][gcol[r.index_b]] = r.score;
  return m;
}

inline void write_det_csv(std::ostream& out, const std::vector<DETPoint>& curve) {
  out.precision(17);
  out << "threshold,far,frr\n";
  for (const auto& p : curve) out << p.threshold << ',' << p.far << ',' << p.frr << '\n';
}

}  // namespace msdgr
