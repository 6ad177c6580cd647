#include <gtest/gtest.h>

#include <sstream>

#include "fd_oracle.hpp"
#include "msdgr/matcher.hpp"
#include "test_util.hpp"

namespace msdgr {
namespace {

using namespace msdgr::testing;

MultiscaleRepresentation single_scale(Matrix nodes, Matrix adjacency) {
  MultiscaleRepresentation r;
  FeatureGraph g;
  g.nodes = std::move(nodes);
  g.adjacency = std::move(adjacency);
  for (Eigen::Index k = 0; k < g.nodes.rows(); ++k) g.coords.push_back({0, static_cast<double>(k)});
  r.graphs.push_back(std::move(g));
  return r;
}

// Genuine-with-occlusion surrogate: B copies A except for `corrupted` node
// pairs per scale, which are redrawn independently.
std::pair<MultiscaleRepresentation, MultiscaleRepresentation> occluded_pair(Rng& rng, int dim, double fraction,
                                                                            std::vector<int>* corrupted_idx) {
  MultiscaleRepresentation a = random_representation(rng, dim, 0, {32, 16});
  MultiscaleRepresentation b = a;
  for (std::size_t s = 0; s < a.graphs.size(); ++s) {
    const int n = a.graphs[s].node_count();
    const auto perm = random_permutation(n, rng);
    const int bad = static_cast<int>(fraction * n);
    for (int k = 0; k < bad; ++k) {
      b.graphs[s].nodes.row(perm[k]) = random_vector(dim, rng).transpose();
      if (corrupted_idx && s == 0) corrupted_idx->push_back(perm[k]);
    }
  }
  return {a, b};
}

TEST(SFea, IdentityNegationOrthogonality) {
  Rng rng(1);
  const MultiscaleRepresentation a = random_representation(rng);
  EXPECT_EQ(s_fea(a, a, full_sets(a)), 1.0);
  MultiscaleRepresentation neg = a;
  for (auto& g : neg.graphs) g.nodes = -g.nodes;
  neg.global = -a.global;
  EXPECT_NEAR(s_fea(a, neg, full_sets(a)), -1.0, 1e-15);

  Matrix x = Matrix::Zero(2, 4), y = Matrix::Zero(2, 4);
  x.row(0) << 1, 2, 0, 0;
  x.row(1) << 0, 0, 3, -1;
  y.row(0) << -2, 1, 0, 0;
  y.row(1) << 0, 0, 1, 3;
  const auto p = single_scale(x, Matrix::Identity(2, 2));
  const auto q = single_scale(y, Matrix::Identity(2, 2));
  EXPECT_NEAR(s_fea(p, q, full_sets(p)), 0.0, 1e-6);
}

TEST(SFea, ScaleInvariantAndRejectsZero) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const MultiscaleRepresentation a = random_representation(rng);
    const MultiscaleRepresentation b = random_representation(rng);
    const double k = uniform(rng, 0.01, 100);
    MultiscaleRepresentation ka = a, kb = b;
    for (auto& g : ka.graphs) g.nodes *= k;
    for (auto& g : kb.graphs) g.nodes *= k;
    ka.global *= k;
    kb.global *= k;
    EXPECT_NEAR(s_fea(a, b, full_sets(a)), s_fea(ka, kb, full_sets(a)), 1e-12);
  }
  const auto zero = single_scale(Matrix::Zero(2, 3), Matrix::Identity(2, 2));
  EXPECT_THROW(s_fea(zero, zero, full_sets(zero)), UndefinedSimilarityError);
}

TEST(SAdj, HandComputedFrobenius) {
  const auto a = single_scale(Matrix::Ones(2, 2), Matrix::Ones(2, 2));
  const auto b = single_scale(Matrix::Ones(2, 2), Matrix::Identity(2, 2));
  EXPECT_NEAR(s_adj(a, b, full_sets(a)), 0.35355, 5e-6);
  EXPECT_DOUBLE_EQ(s_adj(a, b, full_sets(a)), std::sqrt(2.0) / 4);
  EXPECT_EQ(s_adj(a, a, full_sets(a)), 0.0);
}

TEST(SAdj, BlockDoublingScalesByRootTwoOverFour) {
  Rng rng(3);
  const Matrix m1 = build_adjacency({{0, 0}, {1, 0}, {0, 2}}, 3);
  const Matrix m2 = build_adjacency({{0, 0}, {2, 0}, {0, 1}}, 3);
  auto doubled = [](const Matrix& m) {
    Matrix d = Matrix::Zero(6, 6);
    d.topLeftCorner(3, 3) = m;
    d.bottomRightCorner(3, 3) = m;
    return d;
  };
  const auto a = single_scale(Matrix::Ones(3, 2), m1), b = single_scale(Matrix::Ones(3, 2), m2);
  const auto a2 = single_scale(Matrix::Ones(6, 2), doubled(m1)), b2 = single_scale(Matrix::Ones(6, 2), doubled(m2));
  EXPECT_NEAR(s_adj(a2, b2, full_sets(a2)), s_adj(a, b, full_sets(a)) * std::sqrt(2.0) / 4, 1e-14);
}

TEST(SAdj, EmptyScaleContributesZero) {
  Rng rng(4);
  const MultiscaleRepresentation a = random_representation(rng);
  const MultiscaleRepresentation b = random_representation(rng);
  RetainedSets sets = full_sets(a);
  const double full_second = s_adj(a, b, {{}, sets[1]});
  const Matrix d = a.graphs[1].adjacency - b.graphs[1].adjacency;
  EXPECT_NEAR(full_second, d.norm() / 16.0 / 2.0, 1e-14);
}

TEST(Similarity, CompositionAndSign) {
  Rng rng(5);
  const MultiscaleRepresentation a = random_representation(rng);
  EXPECT_EQ(similarity(a, a), 1.0);
  EXPECT_EQ(similarity(a, a, +1), 1.0);

  MultiscaleRepresentation b = a;
  b.graphs[0].coords[0] = {9.9, 9.9};
  b.graphs[0].adjacency = build_adjacency(b.graphs[0].coords, b.graphs[0].radius);
  const double fea = s_fea(a, b, full_sets(a));
  const double adj = s_adj(a, b, full_sets(a));
  ASSERT_GT(adj, 0.0);
  EXPECT_LT(similarity(a, b), fea);
  EXPECT_DOUBLE_EQ(similarity(a, b, -1), fea - adj);
  EXPECT_DOUBLE_EQ(similarity(a, b, +1), fea + adj);
  EXPECT_THROW(similarity(a, b, 0), ParameterError);
}

TEST(Similarity, StructureMismatch) {
  Rng rng(6);
  const auto a = random_representation(rng, 8, 4, {6, 4});
  EXPECT_THROW(similarity(a, random_representation(rng, 8, 4, {6})), ShapeError);
  EXPECT_THROW(similarity(a, random_representation(rng, 6, 4, {6, 4})), ShapeError);
  EXPECT_THROW(similarity(a, random_representation(rng, 8, 3, {6, 4})), ShapeError);
  EXPECT_THROW(dynamic_match(a, random_representation(rng, 8, 4, {5, 4})), ShapeError);
}

// ---------------------------------------------------------------------------
// Triplet loss

TEST(TripletLoss, EqualSimilaritiesGiveTheMargin) {
  Rng rng(7);
  const auto a = random_representation(rng), p = random_representation(rng);
  const TripletResult r = triplet_loss(a, p, p);
  EXPECT_DOUBLE_EQ(r.loss, 1.0);
  EXPECT_TRUE(r.active);
}

TEST(TripletLoss, InactiveHingeHasZeroGradient) {
  Rng rng(8);
  const auto a = random_representation(rng);
  MultiscaleRepresentation n = a;
  for (auto& g : n.graphs) g.nodes = -g.nodes;
  n.global = -a.global;  // S_an = -1 - s_adj, S_ap = 1: gap 2 > m
  const TripletResult r = triplet_loss(TripletBatch{&a, &a, &n});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_FALSE(r.active);
  for (const auto* g : {&r.d_anchor, &r.d_positive, &r.d_negative}) {
    for (const Matrix& m : g->nodes) EXPECT_EQ(m.norm(), 0.0);
    EXPECT_EQ(g->global.norm(), 0.0);
  }
}

TEST(TripletLoss, GradientsMatchFiniteDifferences) {
  int active = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(400 + seed);
    auto a = random_representation(rng), p = random_representation(rng), n = random_representation(rng);
    const TripletResult r = triplet_loss(a, p, n);
    if (std::abs(1.0 + r.s_anchor_negative - r.s_anchor_positive) < 1e-3) continue;
    active += r.active;
    auto loss = [&] { return triplet_loss(a, p, n).loss; };
    for (auto [rep, grad] : {std::pair{&a, &r.d_anchor}, std::pair{&p, &r.d_positive}, std::pair{&n, &r.d_negative}}) {
      for (std::size_t s = 0; s < rep->graphs.size(); ++s) {
        EXPECT_LT(relative_error(grad->nodes[s], numeric_gradient(rep->graphs[s].nodes, loss)), 1e-3) << seed;
      }
      EXPECT_LT(relative_error(grad->global, numeric_gradient(rep->global, loss)), 1e-3) << seed;
    }
  }
  EXPECT_GT(active, 50);
}

// ---------------------------------------------------------------------------
// Dynamic matching

TEST(DynamicMatch, IdenticalGraphsKeepEverything) {
  Rng rng(9);
  const auto a = random_representation(rng, 16, 8, {64, 32, 16});
  const MatchResult r = dynamic_match(a, a);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(r.gates[s], 1.0);
    EXPECT_EQ(static_cast<int>(r.retained[s].size()), a.graphs[s].node_count());
  }
  EXPECT_EQ(r.similarity, 1.0);
  EXPECT_EQ(match_score(a, a, MatchMode::Static), 1.0);
}

TEST(DynamicMatch, RetainedPairsClearTheGate) {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_representation(rng, 8, 3, {12, 7});
    const auto b = random_representation(rng, 8, 3, {12, 7});
    const MatchResult r = dynamic_match(a, b);
    for (std::size_t s = 0; s < r.retained.size(); ++s) {
      EXPECT_FALSE(r.retained[s].empty());
      EXPECT_TRUE(std::is_sorted(r.retained[s].begin(), r.retained[s].end()));
      for (int i : r.retained[s]) EXPECT_GE(r.pair_scores[s](i), r.gates[s]);
      int removed = 0;
      for (Eigen::Index i = 0; i < r.pair_scores[s].size(); ++i) removed += r.pair_scores[s](i) < r.gates[s];
      EXPECT_EQ(removed + r.retained[s].size(), static_cast<std::size_t>(r.pair_scores[s].size()));
    }
  }
}

TEST(DynamicMatch, PrunesCorruptedHalf) {
  Rng rng(11);
  int corrupted = 0, corrupted_removed = 0, clean = 0, clean_kept = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<int> bad;
    auto [a, b] = occluded_pair(rng, 64, 0.5, &bad);
    const MatchResult r = dynamic_match(a, b);
    const auto& keep = r.retained[0];
    for (int i = 0; i < a.graphs[0].node_count(); ++i) {
      const bool kept = std::binary_search(keep.begin(), keep.end(), i);
      if (std::find(bad.begin(), bad.end(), i) != bad.end()) {
        ++corrupted;
        corrupted_removed += !kept;
      } else {
        ++clean;
        clean_kept += kept;
      }
    }
    EXPECT_NEAR(r.gates[0], 0.5, 0.15);
  }
  EXPECT_GE(corrupted_removed, 0.95 * corrupted);
  EXPECT_GE(clean_kept, 0.95 * clean);
}

TEST(DynamicMatch, RandomPairsLoseAboutHalf) {
  Rng rng(12);
  double removed = 0, total = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_representation(rng, 32, 0, {32});
    const auto b = random_representation(rng, 32, 0, {32});
    const MatchResult r = dynamic_match(a, b);
    removed += 32 - static_cast<double>(r.retained[0].size());
    total += 32;
  }
  EXPECT_NEAR(removed / total, 0.5, 0.1);
}

TEST(MatchScore, DynamicBeatsStaticOnOccludedGenuine) {
  Rng rng(13);
  int wins = 0;
  for (int t = 0; t < 1000; ++t) {
    auto [a, b] = occluded_pair(rng, 32, 0.5, nullptr);
    wins += match_score(a, b, MatchMode::Dynamic) > match_score(a, b, MatchMode::Static);
  }
  EXPECT_GE(wins, 990);
}

TEST(MatchScore, ImpostersScoreNearZero) {
  Rng rng(14);
  double dyn = 0, sta = 0;
  for (int t = 0; t < 200; ++t) {
    auto a = random_representation(rng, 256, 0, {32});
    auto b = a;
    b.graphs[0].nodes = random_matrix(32, 256, rng);
    dyn += match_score(a, b, MatchMode::Dynamic);
    sta += match_score(a, b, MatchMode::Static);
  }
  EXPECT_NEAR(sta / 200, 0.0, 0.02);
  EXPECT_NEAR(dyn / 200, 0.0, 0.1);
}

TEST(MatchScore, Symmetric) {
  Rng rng(15);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_representation(rng);
    const auto b = random_representation(rng);
    for (MatchMode m : {MatchMode::Static, MatchMode::Dynamic})
      for (int sign : {-1, 1}) EXPECT_EQ(match_score(a, b, m, sign), match_score(b, a, m, sign));
  }
}

TEST(MatchScore, ZeroNodeVectorsGateAsZero) {
  Matrix x = Matrix::Ones(3, 2), y = Matrix::Ones(3, 2);
  y.row(1).setZero();
  const auto a = single_scale(x, Matrix::Identity(3, 3)), b = single_scale(y, Matrix::Identity(3, 3));
  const MatchResult r = dynamic_match(a, b);
  EXPECT_EQ(r.pair_scores[0](1), 0.0);
  EXPECT_EQ(r.retained[0], (std::vector<int>{0, 2}));
  EXPECT_EQ(r.similarity, 1.0);
}

TEST(MatchScore, EmptyGraphsCannotMatch) {
  const auto a = single_scale(Matrix::Zero(0, 3), Matrix::Zero(0, 0));
  EXPECT_THROW(dynamic_match(a, a), EmptyMatchError);
}

TEST(MatchResultCsv, OneRowPerPair) {
  Rng rng(16);
  const auto a = random_representation(rng), b = random_representation(rng);
  std::ostringstream os;
  write_match_rows(os, dynamic_match(a, b));
  int rows = 0;
  std::string line;
  std::istringstream in(os.str());
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 10);
}

}  // namespace
}  // namespace msdgr
