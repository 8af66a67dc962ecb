#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "graftcert/bounds.hpp"
#include "graftcert/error.hpp"
#include "graftcert/graft_select.hpp"
#include "test_support.hpp"

namespace graftcert {
namespace {

using testing::make_layer;

Matrix random_inputs(int d, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return Matrix::NullaryExpr(d, n, [&] { return u(rng); });
}

// Hand-built net: layer 0 is the identity plus bias, so each hidden neuron of
// layer 0 sees z = t + b0 on calibration point t*1 (eps 0.5, width 1). Layer 1
// is diagonal, z_k = w_k h_k + b1_k. Calibration points t = 0, .25, .5, .75, 1.
struct HandNet {
  Network net;
  Matrix calibration;

  HandNet() {
    const std::vector<double> b0 = {-0.5, -0.25, 0, -1, 0.3, -1.3, 2, -3, -0.75, 2};
    const std::vector<double> w = {1, 2, 0.5, 3, 1.5, 4, 1, 1, 1, 2.5};
    const std::vector<double> thr = {0.3, 0.6, 0.1, 0.2, 1.2, 0.1, 2.6, 1.0, -0.5, 2.6};
    std::vector<std::vector<double>> I(10, std::vector<double>(10, 0.0));
    std::vector<std::vector<double>> D(10, std::vector<double>(10, 0.0));
    std::vector<double> b1(10);
    for (int k = 0; k < 10; ++k) {
      I[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = 1.0;
      D[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = w[static_cast<std::size_t>(k)];
      b1[static_cast<std::size_t>(k)] = -w[static_cast<std::size_t>(k)] * thr[static_cast<std::size_t>(k)];
    }
    std::vector<std::vector<double>> out(2, std::vector<double>(10, 0.1));
    net = Network(10, {make_layer(I, b0), make_layer(D, b1), make_layer(out, {0, 0}, Activation::identity())});
    calibration.resize(10, 5);
    for (int s = 0; s < 5; ++s) calibration.col(s).setConstant(0.25 * s);
  }
};

TEST(InstabilityScore, HandCounts) {
  const HandNet h;
  const auto su = instability_score(h.net, h.calibration, 0.5);
  EXPECT_EQ(su[0], (std::vector<int>{3, 3, 2, 2, 1, 1, 0, 0, 3, 0}));
  EXPECT_EQ(su[1], (std::vector<int>{3, 3, 3, 2, 3, 1, 4, 0, 0, 4}));
}

TEST(InstabilityScore, ZeroEpsAllZeroAndBounded) {
  std::mt19937_64 rng(1);
  const Network net = testing::random_network({3, 8, 8, 2}, rng);
  const Matrix X = random_inputs(3, 20, rng);
  for (const auto& layer : instability_score(net, X, 0.0)) {
    for (int s : layer) EXPECT_EQ(s, 0);
  }
  for (const auto& layer : instability_score(net, X, 0.3)) {
    for (int s : layer) {
      EXPECT_GE(s, 0);
      EXPECT_LE(s, 20);
    }
  }
}

TEST(WeightedIntervalScore, DirectProduct) {
  // z = x on x = 1, eps 2 gives [-1, 3]; the weight into the next layer is 2.
  const Network net(1, {make_layer({{1.0}}, {0.0}), make_layer({{2.0}, {5.0}}, {0.0, 0.0}),
                        make_layer({{1.0, 1.0}}, {0.0}, Activation::identity())});
  const Matrix X = Matrix::Ones(1, 1);
  EXPECT_EQ(weighted_interval_score(net, X, 2.0, 0, {0}), std::vector<double>{8.0});
  EXPECT_EQ(weighted_interval_score(net, X, 2.0, 0, {0, 1}), std::vector<double>{20.0});
  EXPECT_THROW(weighted_interval_score(net, X, 2.0, 0, {}), ConfigError);
  // Last hidden layer against the output: z2 = 2 relu(z1) on [0, 6], weight 1.
  EXPECT_EQ(weighted_interval_score(net, X, 2.0, 1, {0}), (std::vector<double>{6.0, 15.0}));
  EXPECT_THROW(weighted_interval_score(net, X, 2.0, 2, {0}), ConfigError);
  EXPECT_THROW(weighted_interval_score(net, X, 2.0, 1, {1}), ConfigError);
}

TEST(WeightedIntervalScore, ZeroOutgoingWeightsGiveZero) {
  std::mt19937_64 rng(2);
  Network net = testing::random_network({3, 6, 6, 2}, rng);
  std::vector<Layer> layers = net.layers();
  layers[1].weights.row(2).setZero();
  layers[1].weights.row(4).setZero();
  net = Network(3, layers);
  for (double s : weighted_interval_score(net, random_inputs(3, 10, rng), 0.1, 0, {2, 4})) EXPECT_EQ(s, 0.0);
}

TEST(WeightedIntervalScore, StreamedEqualsBruteForce) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = testing::random_network({4, 9, 7, 5, 3}, rng);
    const Matrix X = random_inputs(4, 30, rng);
    const double eps = 0.07;
    std::vector<BoundsCache> per_sample;
    for (Eigen::Index c = 0; c < X.cols(); ++c) per_sample.push_back(ibp(net, X.col(c), eps));
    const auto su = instability_score(net, X, eps);
    for (int l = 0; l < 3; ++l) {
      std::vector<int> count(static_cast<std::size_t>(net.layer(static_cast<std::size_t>(l)).out_dim()), 0);
      for (const BoundsCache& b : per_sample) {
        for (std::size_t j = 0; j < count.size(); ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          count[j] += b.pre[static_cast<std::size_t>(l)].lower(jj) < 0 && b.pre[static_cast<std::size_t>(l)].upper(jj) > 0;
        }
      }
      EXPECT_EQ(su[static_cast<std::size_t>(l)], count);
    }
    for (int l = 0; l < 2; ++l) {
      const std::vector<int> next = {0, 2, 3};
      const auto streamed = weighted_interval_score(net, X, eps, l, next);
      const Matrix& W = net.layer(static_cast<std::size_t>(l + 1)).weights;
      for (std::size_t j = 0; j < streamed.size(); ++j) {
        double best = 0.0;
        for (const BoundsCache& b : per_sample) {
          const Interval& iv = b.pre[static_cast<std::size_t>(l)];
          const auto jj = static_cast<Eigen::Index>(j);
          for (int k : next) best = std::max(best, std::abs(W(k, jj)) * std::abs(iv.upper(jj) - iv.lower(jj)));
        }
        EXPECT_EQ(streamed[j], best);
      }
    }
  }
}

TEST(ScoreAccumulator, MergeMatchesSinglePass) {
  std::mt19937_64 rng(4);
  const Network net = testing::random_network({3, 6, 6, 2}, rng);
  const Matrix X = random_inputs(3, 12, rng);
  const auto bounds = calibration_bounds(net, X, 0.1);
  ScoreAccumulator all(net), a(net), b(net);
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    all.add(bounds[i]);
    (i % 3 == 0 ? a : b).add(bounds[i]);
  }
  b.merge(a);
  EXPECT_EQ(b.instability(), all.instability());
  EXPECT_EQ(b.max_width(), all.max_width());
  EXPECT_EQ(b.calibration_size(), 12);
}

TEST(BackwardSelect, HandTrace) {
  const HandNet h;
  // 15 neurons have s_u > 0, all inside the pool of 16. The last hidden
  // layer's pool misses neurons 7 and 8, so all 8 are kept. Layer 0: one
  // influential neuron by s_wi (neuron 5, |w| = 4), then the budget of 5 is
  // filled by s_u: 0, 1, 8 (s_u 3) and 2 (s_u 2, lower index than 3).
  const GraftSet g = backward_select(h.net, h.calibration, 0.5);
  EXPECT_EQ(g.layers.at(1).indices, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 9}));
  EXPECT_EQ(g.layers.at(0).indices, (std::vector<int>{0, 1, 2, 5, 8}));
  for (const auto& [l, e] : g.layers) {
    for (double s : e.slopes) EXPECT_EQ(s, 0.4);
    for (double c : e.intercepts) EXPECT_EQ(c, 0.0);
  }
}

TEST(BackwardSelect, HandTraceWithRetention) {
  const HandNet h;
  SelectionConfig cfg;
  cfg.always_retain = true;
  // floor(0.7 * 8) = 5 by s_u: 6, 9 (s_u 4) then 0, 1, 2 (s_u 3 each, before 4).
  // Layer 0 s_wi against {0,1,2,6,9}: neuron 1 has |w| = 2; fill 0, 8, 2, 3.
  const GraftSet g = backward_select(h.net, h.calibration, 0.5, cfg);
  EXPECT_EQ(g.layers.at(1).indices, (std::vector<int>{0, 1, 2, 6, 9}));
  EXPECT_EQ(g.layers.at(0).indices, (std::vector<int>{0, 1, 2, 3, 8}));
}

TEST(BackwardSelect, RetentionWhenPoolCoversLastLayer) {
  // Make every layer-0 neuron stable so the pool is carried by layer 1 alone.
  std::mt19937_64 rng(5);
  Network net = testing::random_network({2, 4, 10, 2}, rng);
  std::vector<Layer> layers = net.layers();
  layers[0].weights = layers[0].weights.cwiseAbs();
  layers[0].weights.row(0) << 1.0, 1.0;
  layers[0].bias.setConstant(1.0);
  layers[1].weights.setConstant(0.0);
  layers[1].weights.col(0).setConstant(1.0);
  for (int k = 0; k < 10; ++k) layers[1].bias(k) = -layers[0].weights.row(0).sum() - 1.0 + 0.01 * k;
  net = Network(2, layers);
  const Matrix X = Matrix::Constant(2, 3, 1.0);
  const auto su = instability_score(net, X, 0.5);
  ASSERT_EQ(su[0], (std::vector<int>(4, 0)));
  ASSERT_EQ(su[1], (std::vector<int>(10, 3)));
  // Pool: 80% of 14 = 11 >= 10 neurons with s_u > 0, so layer 1 is covered.
  const GraftSet g = backward_select(net, X, 0.5);
  EXPECT_EQ(g.layers.at(1).indices, (std::vector<int>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(g.layers.count(0), 0u);
}

TEST(BackwardSelect, AllStableIsEmpty) {
  std::mt19937_64 rng(6);
  const Network net = testing::random_network({3, 8, 8, 2}, rng);
  EXPECT_TRUE(backward_select(net, random_inputs(3, 10, rng), 0.0).empty());
}

TEST(BackwardSelect, TiesGoToLowerIndex) {
  std::mt19937_64 rng(7);
  Network net = testing::random_network({3, 6, 2, 2}, rng, 2.0);
  std::vector<Layer> layers = net.layers();
  layers[1].weights.row(1) = layers[1].weights.row(0);
  layers[1].bias(1) = layers[1].bias(0);
  net = Network(3, layers);
  Matrix X = random_inputs(3, 40, rng);
  double eps = 0.05;
  std::vector<std::vector<int>> su;
  for (; eps < 2.0; eps *= 1.5) {
    su = instability_score(net, X, eps);
    if (su[1][0] > 0) break;
  }
  ASSERT_GT(su[1][0], 0);
  ASSERT_EQ(su[1][0], su[1][1]);
  SelectionConfig cfg;
  cfg.pool = 1.0;
  cfg.always_retain = true;
  const GraftSet g = backward_select(net, X, eps, cfg);
  EXPECT_EQ(g.layers.at(1).indices, std::vector<int>{0});
}

TEST(BackwardSelect, PermutationInvariant) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const Network net = testing::random_network({4, 12, 10, 8, 3}, rng);
    const Matrix X = random_inputs(4, 25, rng);
    std::vector<Eigen::Index> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix Y(4, 25);
    for (Eigen::Index c = 0; c < 25; ++c) Y.col(c) = X.col(perm[static_cast<std::size_t>(c)]);
    const GraftSet a = backward_select(net, X, 0.08);
    EXPECT_EQ(a, backward_select(net, Y, 0.08));
    EXPECT_EQ(a, backward_select(net, X, 0.08));
  }
}

TEST(BackwardSelect, SelectionInvariants) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const Network net = testing::random_network({4, 12, 10, 8, 3}, rng);
    const Matrix X = random_inputs(4, 25, rng);
    const auto su = instability_score(net, X, 0.08);
    const GraftSet g = backward_select(net, X, 0.08);
    for (const auto& [l, e] : g.layers) {
      EXPECT_TRUE(std::is_sorted(e.indices.begin(), e.indices.end()));
      EXPECT_EQ(std::adjacent_find(e.indices.begin(), e.indices.end()), e.indices.end());
      for (int j : e.indices) EXPECT_GT(su[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)], 0);
      if (l + 1 < 3) {
        const auto d = static_cast<std::size_t>(net.layer(static_cast<std::size_t>(l)).out_dim());
        EXPECT_LE(e.indices.size(), std::max<std::size_t>(1, d / 2));
      }
    }
  }
}

TEST(BackwardSelect, ConfigValidation) {
  std::mt19937_64 rng(10);
  const Network deep = testing::random_network({3, 6, 6, 2}, rng);
  const Matrix X = random_inputs(3, 5, rng);
  for (double bad : {0.0, -0.1, 1.5}) {
    SelectionConfig cfg;
    cfg.pool = bad;
    EXPECT_THROW(backward_select(deep, X, 0.1, cfg), ConfigError);
    cfg = {};
    cfg.graft_ratio = bad;
    EXPECT_THROW(backward_select(deep, X, 0.1, cfg), ConfigError);
  }
  const Network shallow = testing::random_network({3, 6, 2}, rng);
  EXPECT_THROW(backward_select(shallow, X, 0.1), ConfigError);
  EXPECT_THROW(backward_select(deep, Matrix(3, 0), 0.1), ConfigError);
}

TEST(ApplyGraft, EmptySetIsIdentity) {
  std::mt19937_64 rng(11);
  const Network net = testing::random_network({3, 6, 6, 2}, rng);
  const Network g = apply_graft(net, GraftSet{});
  for (std::size_t l = 0; l < net.num_layers(); ++l) EXPECT_EQ(g.layer(l).activations, net.layer(l).activations);
}

TEST(ApplyGraft, DefaultsAndRejections) {
  std::mt19937_64 rng(12);
  const Network net = testing::random_network({3, 6, 6, 2}, rng);
  GraftSet s;
  s.insert(0, 3, 0.9, 0.9);
  const Network g = apply_graft(net, s);
  EXPECT_EQ(g.layer(0).activations[3], Activation::grafted(0.4, 0.0));
  const Network p = apply_graft_parameters(net, s);
  EXPECT_EQ(p.layer(0).activations[3], Activation::grafted(0.9, 0.9));
  EXPECT_EQ(grafted_neurons(p), s);
  GraftSet bad;
  bad.insert(2, 0, 0.4, 0.0);
  EXPECT_THROW(apply_graft(net, bad), ValidationError);
  GraftSet range;
  range.insert(0, 6, 0.4, 0.0);
  EXPECT_THROW(apply_graft(net, range), ValidationError);
}

TEST(ApplyGraft, ZeroSlopeEqualsPruning) {
  std::mt19937_64 rng(13);
  const Network net = testing::random_network({4, 8, 8, 3}, rng);
  GraftSet s;
  for (int j : {0, 3, 5}) s.insert(0, j, 0.0, 0.0);
  for (int j : {1, 7}) s.insert(1, j, 0.0, 0.0);
  const Network g = apply_graft(net, s, 0.0, 0.0);
  const Network z = zero_outgoing(net, s);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = testing::random_point(4, rng, -1, 2);
    EXPECT_TRUE(forward(g, x).isApprox(forward(z, x), 1e-12));
  }
}

TEST(ApplyGraft, GraftingAllUnstableRemovesInstability) {
  std::mt19937_64 rng(14);
  const Network net = testing::random_network({3, 8, 8, 8, 2}, rng);
  const Matrix X = random_inputs(3, 15, rng);
  const double eps = 0.1;
  Network cur = net;
  // Grafting layer l only changes layers above it, so one pass per layer.
  for (std::size_t pass = 0; pass <= net.num_hidden_layers(); ++pass) {
    GraftSet s = grafted_neurons(cur);
    const auto su = instability_score(cur, X, eps);
    for (std::size_t l = 0; l < su.size(); ++l) {
      for (std::size_t j = 0; j < su[l].size(); ++j) {
        if (su[l][j] > 0) s.insert(static_cast<int>(l), static_cast<int>(j), 0.4, 0.0);
      }
    }
    cur = apply_graft_parameters(net, s);
  }
  for (Eigen::Index c = 0; c < X.cols(); ++c) EXPECT_EQ(neuron_status(cur, ibp(cur, X.col(c), eps)).unr(), 0.0);
}

TEST(ScoreTable, MatchesSelectionScores) {
  const HandNet h;
  const ScoreAccumulator acc = [&] {
    ScoreAccumulator a(h.net);
    for (const BoundsCache& b : calibration_bounds(h.net, h.calibration, 0.5)) a.add(b);
    return a;
  }();
  const GraftSet g = backward_select(h.net, acc);
  const ScoreTable t = score_table(h.net, acc, g);
  EXPECT_EQ(t.calibration_size, 5);
  EXPECT_NEAR(t.weighted_interval[0][5], 4.0, 1e-12);
  EXPECT_EQ(t.weighted_interval[0][7], 0.0);
  EXPECT_EQ(t.weighted_interval[1], std::vector<double>(10, 0.0));
}

}  // namespace
}  // namespace graftcert
