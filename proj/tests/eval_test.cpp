#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "metric_oracle.hpp"
#include "msdgr/eval.hpp"

namespace msdgr {
namespace {

using namespace msdgr::testing;

TEST(FarFrr, Extremes) {
  const ScoreSet s{{0.9, 0.8}, {0.4, 0.6}};
  EXPECT_EQ(far_frr(s, 0.1), std::make_pair(1.0, 0.0));
  EXPECT_EQ(far_frr(s, 0.95), std::make_pair(0.0, 1.0));
  EXPECT_EQ(far_frr(s, 0.7), std::make_pair(0.0, 0.0));
}

TEST(FarFrr, AcceptsAtEquality) {
  const ScoreSet s{{0.5}, {0.5}};
  EXPECT_EQ(far_frr(s, 0.5), std::make_pair(1.0, 0.0));
}

TEST(FarFrr, EmptyListIsAnError) {
  EXPECT_THROW(far_frr({{}, {0.1}}, 0.5), MetricError);
  EXPECT_THROW(far_frr({{0.1}, {}}, 0.5), MetricError);
  EXPECT_THROW(eer({{0.1, NAN}, {0.2}}), MetricError);
}

TEST(Eer, SeparatedSetsGiveZero) {
  EXPECT_EQ(eer({{0.8, 0.9, 0.95}, {0.1, 0.2, 0.5}}).eer, 0.0);
}

TEST(Eer, OneErrorEachSideAtTheCrossing) {
  // Sweep {0.2, 0.6, 0.7, 0.9}: at 0.7 the imposter 0.7 is accepted and the
  // genuine 0.6 rejected, far = frr = 1/2.
  const auto r = eer({{0.9, 0.6}, {0.7, 0.2}});
  EXPECT_EQ(r.eer, 0.5);
  EXPECT_EQ(r.threshold, 0.7);
}

TEST(Eer, InterpolatesBetweenSweepPoints) {
  // t = 0.5: far 1/2, frr 1/3; t = 0.8: far 0, frr 1/3. Meet at lambda = 1/3.
  const auto r = eer({{0.3, 0.8, 0.9}, {0.1, 0.5}});
  EXPECT_NEAR(r.eer, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.threshold, 0.6, 1e-15);
}

TEST(Eer, IdenticalDistributionsNearHalf) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreSet s;
    for (int k = 0; k < 200; ++k) s.genuine.push_back(uniform01(rng));
    s.imposter = s.genuine;
    EXPECT_NEAR(eer(s).eer, 0.5, 0.01);
  }
}

TEST(Eer, InvariantUnderIncreasingTransform) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoreSet s = random_score_set(rng);
    ScoreSet t = s;
    for (auto* list : {&t.genuine, &t.imposter})
      for (double& v : *list) v = std::exp(3 * v) - 7;
    EXPECT_EQ(eer(s).eer, eer(t).eer);
  }
}

TEST(Det, MonotoneAndBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto curve = det_curve(random_score_set(rng));
    EXPECT_EQ(curve.front().far, 1.0);
    EXPECT_EQ(curve.front().frr, 0.0);
    EXPECT_EQ(curve.back().far, 0.0);
    EXPECT_EQ(curve.back().frr, 1.0);
    for (std::size_t k = 1; k < curve.size(); ++k) {
      EXPECT_LT(curve[k - 1].threshold, curve[k].threshold);
      EXPECT_LE(curve[k].far, curve[k - 1].far);
      EXPECT_GE(curve[k].frr, curve[k - 1].frr);
    }
  }
}

TEST(FrrAtFar, Examples) {
  const ScoreSet separated{{0.8, 0.9}, {0.1, 0.2, 0.3}};
  EXPECT_EQ(frr_at_far(separated, 1.0).frr, 0.0);
  EXPECT_EQ(frr_at_far(separated, 0.01).frr, 0.0);
  EXPECT_TRUE(frr_at_far(separated, 0.01).resolution_warning);
  EXPECT_FALSE(frr_at_far(separated, 0.5).resolution_warning);
  EXPECT_THROW(frr_at_far(separated, 0.0), MetricError);
  EXPECT_THROW(frr_at_far(separated, 1.5), MetricError);
}

TEST(FrrAtFar, TenByTenAgainstExhaustiveSweep) {
  const ScoreSet s{{0.95, 0.9, 0.85, 0.7, 0.65, 0.6, 0.5, 0.45, 0.3, 0.2},
                   {0.8, 0.75, 0.55, 0.4, 0.35, 0.25, 0.15, 0.1, 0.05, 0.0}};
  // far <= 0.1 first holds at 0.8 (seven genuines below it); far <= 0.2 at
  // 0.6, where four genuines fall below.
  EXPECT_EQ(frr_at_far(s, 0.1).frr, 0.7);
  EXPECT_EQ(frr_at_far(s, 0.2).frr, 0.4);
  for (double target : {0.05, 0.1, 0.2, 0.3, 0.5, 0.9}) {
    EXPECT_EQ(frr_at_far(s, target).frr, oracle_frr_at_far(s, target));
  }
}

TEST(FrrAtFar, NoAdmissibleRealThresholdDoesBetter) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const ScoreSet s = random_score_set(rng);
    const double target = uniform(rng, 0.01, 1.0);
    const auto r = frr_at_far(s, target);
    EXPECT_LE(r.far, target);
    // Probe thresholds between and around every score.
    auto ts = oracle_thresholds(s);
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
      for (double t : {ts[k], 0.5 * (ts[k] + ts[k + 1])}) {
        const auto p = oracle_rates(s, t);
        if (p.far > target) continue;
        EXPECT_GE(p.frr, r.frr);
      }
    }
  }
}

TEST(Metrics, MatchBruteForceOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const ScoreSet s = random_score_set(rng);
    const auto fast = eer(s);
    const auto slow = oracle_eer(s);
    ASSERT_EQ(fast.eer, slow.eer) << "trial " << trial;
    ASSERT_EQ(fast.threshold, slow.threshold);
    for (double t : oracle_thresholds(s)) {
      const auto p = oracle_rates(s, t);
      ASSERT_EQ(far_frr(s, t), std::make_pair(p.far, p.frr));
    }
    const double target = uniform(rng, 0.001, 1.0);
    ASSERT_EQ(frr_at_far(s, target).frr, oracle_frr_at_far(s, target));
  }
}

TEST(RankN, PerfectScores) {
  const std::vector<std::vector<double>> scores = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const auto r = rank_n(scores, {"a", "b", "c"}, {"a", "b", "c"});
  EXPECT_EQ(r.rank1, 1.0);
  EXPECT_EQ(r.rank10, 1.0);
}

TEST(RankN, MissingLabelIsProtocolError) {
  EXPECT_THROW(rank_n({{0.5}}, {"a"}, {"b"}), ProtocolError);
}

TEST(RankN, MatchesOracleAndIsNested) {
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    const int classes = 2 + static_cast<int>(uniform_index(rng, 15));
    const int gallery = classes + static_cast<int>(uniform_index(rng, 10));
    std::vector<std::string> glabels;
    for (int g = 0; g < gallery; ++g) glabels.push_back(std::to_string(g < classes ? g : uniform_index(rng, classes)));
    std::vector<std::string> plabels;
    std::vector<std::vector<double>> scores;
    for (int p = 0; p < 8; ++p) {
      plabels.push_back(std::to_string(uniform_index(rng, classes)));
      std::vector<double> row;
      for (int g = 0; g < gallery; ++g) row.push_back(double(uniform_index(rng, 6)) / 5);
      scores.push_back(row);
    }
    ASSERT_EQ(probe_ranks(scores, plabels, glabels), oracle_ranks(scores, plabels, glabels));
    const auto r = rank_n(scores, plabels, glabels);
    EXPECT_LE(r.rank1, r.rank5);
    EXPECT_LE(r.rank5, r.rank10);
  }
}

TEST(RankN, RandomScoresGiveChanceRankOne) {
  Rng rng(7);
  const int classes = 10;
  std::vector<std::string> labels;
  for (int g = 0; g < classes; ++g) labels.push_back(std::to_string(g));
  std::vector<std::string> plabels;
  std::vector<std::vector<double>> scores;
  for (int p = 0; p < 5000; ++p) {
    plabels.push_back(labels[uniform_index(rng, classes)]);
    std::vector<double> row;
    for (int g = 0; g < classes; ++g) row.push_back(uniform01(rng));
    scores.push_back(row);
  }
  EXPECT_NEAR(rank_n(scores, plabels, labels).rank1, 0.1, 0.015);
}

TEST(ScoreCsv, ParsesRowsAndSkipsComments) {
  std::istringstream in(
      "# msdgr seed=3\nlabel_a,label_b,score,genuine_flag,index_a,index_b\n"
      "a,a,0.9,1,0,1\na,b,0.25,0,0,2\n");
  const auto rows = read_score_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].score, 0.9);
  EXPECT_TRUE(rows[0].genuine);
  EXPECT_EQ(rows[1].index_b, 2);
  const auto s = score_set(rows);
  EXPECT_EQ(s.genuine.size(), 1u);
  EXPECT_EQ(s.imposter.size(), 1u);
}

TEST(ScoreCsv, ErrorsNameTheLine) {
  auto error_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_score_csv(in, "score", "f.csv");
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(error_of("label_a,label_b,score,genuine_flag\na,b,x,1\n").find("f.csv:2"), std::string::npos);
  EXPECT_NE(error_of("label_a,label_b,score,genuine_flag\na,b,1,1\na,b,1\n").find("f.csv:3"), std::string::npos);
  EXPECT_NE(error_of("label_a,label_b,score,genuine_flag\na,b,1,2\n").find("f.csv:2"), std::string::npos);
  EXPECT_NE(error_of("label_a,label_b,genuine_flag\n").find("no column 'score'"), std::string::npos);
  EXPECT_NE(error_of("").find("missing header"), std::string::npos);
}

TEST(ScoreCsv, IdentificationMatrixFromIndices) {
  std::istringstream in(
      "label_a,label_b,score,genuine_flag,index_a,index_b\n"
      "x,x,0.9,1,0,0\nx,y,0.95,0,0,1\ny,x,0.1,0,1,0\ny,y,0.8,1,1,1\n");
  const auto m = identification_matrix(read_score_csv(in));
  ASSERT_EQ(m.scores.size(), 2u);
  EXPECT_EQ(probe_ranks(m.scores, m.probe_labels, m.gallery_labels), (std::vector<int>{2, 1}));
}

TEST(DetCsv, HeaderAndRows) {
  std::ostringstream out;
  write_det_csv(out, det_curve({{0.9}, {0.1}}));
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, 18), "threshold,far,frr\n");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

}  // namespace
}  // namespace msdgr
