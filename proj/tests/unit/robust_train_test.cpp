#include <gtest/gtest.h>

#include <cmath>

#include "graftcert/bounds.hpp"
#include "graftcert/dataset.hpp"
#include "graftcert/error.hpp"
#include "graftcert/graft_select.hpp"
#include "graftcert/robust_train.hpp"
#include "test_support.hpp"

namespace graftcert {
namespace {

using testing::make_layer;

TEST(SlopeLoss, FormulaValues) {
  EXPECT_DOUBLE_EQ(slope_loss_value(1.0, 2.0), 1.0);
  EXPECT_NEAR(slope_loss_value(0.5, 2.0), 0.53788284273999, 1e-12);
  EXPECT_NEAR(slope_loss_value(0.0, 2.0), 0.03597241992418, 1e-12);
  EXPECT_DOUBLE_EQ(slope_loss_value(0.5, 2.0, SlopeLossKind::Symmetric), 1.0);
  EXPECT_NEAR(slope_loss_value(0.0, 2.0, SlopeLossKind::Symmetric), 0.03597241992418, 1e-12);
  EXPECT_NEAR(slope_loss_value(1.0, 2.0, SlopeLossKind::Symmetric), 0.03597241992418, 1e-12);
  EXPECT_EQ(slope_loss_value(0.3, 2.0, SlopeLossKind::Off), 0.0);
}

TEST(SlopeLoss, VerbatimIsIncreasingOnUnitInterval) {
  double prev = slope_loss_value(1e-6, 2.0);
  for (int i = 1; i <= 1000; ++i) {
    const double cur = slope_loss_value(i / 1000.0, 2.0);
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

// Hidden layer of three neurons on z = x + b, x in [0, 2] (x = 1, eps = 1):
// neuron 0 is unstable ([-1, 1] shifted to [-0.5, 1.5], s = 0.75), neuron 1
// is grafted, neuron 2 is stable.
Network three_neurons() {
  Layer hidden = make_layer({{1.0}, {1.0}, {1.0}}, {-1.5, 0.0, 5.0});
  hidden.activations[1] = Activation::grafted(0.4, 0.0);
  return Network(1, {hidden, make_layer({{1.0, -1.0, 0.5}, {0.5, 1.0, -1.0}}, {0.0, 0.0}, Activation::identity())});
}

TEST(SlopeLoss, MeanOverApplicableNeurons) {
  const Network net = three_neurons();
  Vector x(1);
  x << 1.0;
  const BoundsCache b = ibp(net, x, 1.0);
  ASSERT_DOUBLE_EQ(b.pre[0].lower(0), -1.5);
  ASSERT_DOUBLE_EQ(b.pre[0].upper(0), 0.5);
  const double expected = 0.5 * (slope_loss_value(0.25, 2.0) + slope_loss_value(0.4, 2.0));
  EXPECT_NEAR(slope_loss(net, b, 2.0), expected, 1e-15);
  // No applicable neuron: zero.
  const Network stable(1, {make_layer({{1.0}}, {5.0}), make_layer({{1.0}}, {0.0}, Activation::identity())});
  EXPECT_EQ(slope_loss(stable, ibp(stable, x, 1.0), 2.0), 0.0);
  EXPECT_THROW(slope_loss(net, b, 0.0), ConfigError);
}

TEST(SlopeLoss, TapeMatchesValueAndAveragesPairs) {
  std::mt19937_64 rng(1);
  Network net = testing::random_network({3, 8, 8, 2}, rng);
  std::vector<Layer> layers = net.layers();
  layers[0].activations[1] = Activation::grafted(0.3, 0.0);
  layers[1].activations[4] = Activation::grafted(0.7, 0.1);
  net = Network(3, layers);
  const double eps = 0.1;
  Matrix X = Matrix::NullaryExpr(3, 5, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); });
  Tape tape;
  const ParamVars p = bind_parameters(tape, net, false);
  const auto iv = tape_ibp(tape, net, p, tape.constant((X.array() - eps).matrix()),
                           tape.constant((X.array() + eps).matrix()));
  const double got = tape.scalar(tape_slope_loss(tape, net, p, iv, 2.0, SlopeLossKind::Verbatim));
  // Oracle: per-sample applicable neurons, averaged over all pairs.
  double total = 0.0;
  int count = 0;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const BoundsCache b = ibp(net, X.col(c), eps);
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t j = 0; j < 8; ++j) {
        const Activation& a = net.layer(l).activations[j];
        const double lo = b.pre[l].lower(static_cast<Eigen::Index>(j));
        const double hi = b.pre[l].upper(static_cast<Eigen::Index>(j));
        if (a.is_grafted()) {
          total += slope_loss_value(a.slope, 2.0);
          ++count;
        } else if (lo < 0 && hi > 0) {
          total += slope_loss_value(hi / (hi - lo), 2.0);
          ++count;
        }
      }
    }
    if (c == 0) {
      Tape single;
      const ParamVars q = bind_parameters(single, net, false);
      const Matrix x0 = X.col(0);
      const auto iv0 = tape_ibp(single, net, q, single.constant((x0.array() - eps).matrix()),
                                single.constant((x0.array() + eps).matrix()));
      EXPECT_NEAR(single.scalar(tape_slope_loss(single, net, q, iv0, 2.0, SlopeLossKind::Verbatim)),
                  slope_loss(net, b, 2.0), 1e-14);
    }
  }
  EXPECT_NEAR(got, total / count, 1e-14);
}

TEST(L1Reg, ValueAndSignGradient) {
  const Network net(2, {make_layer({{1.0, -2.0}}, {7.0}, Activation::identity())});
  EXPECT_EQ(l1_reg(net), 3.0);
  const Network zero(2, {make_layer({{0.0, 0.0}}, {7.0}, Activation::identity())});
  EXPECT_EQ(l1_reg(zero), 0.0);
  const Network mixed(3, {make_layer({{0.5, 0.0, -3.0}}, {1.0}, Activation::identity())});
  Tape tape;
  const ParamVars p = bind_parameters(tape, mixed, true);
  tape.backward(tape_l1(tape, p));
  EXPECT_EQ(tape.grad(p.layers[0].weights), (Matrix(1, 3) << 1.0, 0.0, -1.0).finished());
  EXPECT_TRUE(tape.grad(p.layers[0].bias).isZero(0.0));
}

TEST(Prune, RankByMagnitude) {
  const Network net(4, {make_layer({{0.1, -0.2, 3.0, -4.0}}, {0.5}, Activation::identity())});
  const Network p = small_weight_prune(net, 0.5);
  EXPECT_EQ(p.layer(0).weights, (Matrix(1, 4) << 0, 0, 3, -4).finished());
  EXPECT_EQ(p.layer(0).weight_mask, (Matrix(1, 4) << 0, 0, 1, 1).finished());
  EXPECT_EQ(p.layer(0).bias, net.layer(0).bias);
  const Network same = small_weight_prune(net, 0.0);
  EXPECT_EQ(same.layer(0).weights, net.layer(0).weights);
  EXPECT_THROW(small_weight_prune(net, 1.0), ConfigError);
  EXPECT_THROW(small_weight_prune(net, -0.1), ConfigError);
}

TEST(Prune, NetworkWideFraction) {
  std::mt19937_64 rng(2);
  const Network net = testing::random_network({4, 10, 6, 3}, rng);
  const Network p = small_weight_prune(net, 0.3);
  const std::size_t total = 40 + 60 + 18;
  std::size_t zeros = 0;
  double max_pruned = 0.0;
  double min_kept = 1e9;
  for (std::size_t l = 0; l < 3; ++l) {
    zeros += static_cast<std::size_t>((p.layer(l).weight_mask.array() == 0.0).count());
    for (Eigen::Index i = 0; i < net.layer(l).weights.size(); ++i) {
      const double w = std::abs(net.layer(l).weights(i));
      if (p.layer(l).weight_mask(i) == 0.0) {
        max_pruned = std::max(max_pruned, w);
        EXPECT_EQ(p.layer(l).weights(i), 0.0);
      } else {
        min_kept = std::min(min_kept, w);
      }
    }
  }
  EXPECT_EQ(zeros, total * 3 / 10);
  EXPECT_LE(max_pruned, min_kept);
}

TrainData moons(int n, std::uint64_t seed) {
  const Dataset d = make_synthetic(SyntheticKind::Moons, n, 0.1, seed);
  return TrainData{d.columns(), d.labels};
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.lr.base = 0.05;
  cfg.lr.decay_epochs = {2};
  cfg.pgd = {5, 0.0, 1};
  cfg.eps_train = 0.05;
  cfg.monitor_size = 50;
  cfg.seed = 5;
  return cfg;
}

TEST(Finetune, PrunedWeightsStayZero) {
  const Network net = small_weight_prune(make_mlp({2, 16, 16, 2}, 3), 0.3);
  const TrainResult r = finetune(net, moons(128, 1), small_config());
  ASSERT_FALSE(r.diverged);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Layer& layer = r.net.layer(l);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      if (layer.weight_mask(i) == 0.0) {
        EXPECT_EQ(layer.weights(i), 0.0);
      }
    }
  }
  EXPECT_NE(r.net.layer(0).weights, net.layer(0).weights);
}

TEST(Pgd, ZeroEpsReturnsInput) {
  std::mt19937_64 rng(3);
  const Network net = testing::random_network({3, 6, 2}, rng);
  const Vector x = testing::random_point(3, rng);
  EXPECT_EQ(pgd_attack(net, x, 1, 0.0, 10, 0.0, 3, 1), x);
}

TEST(Pgd, LinearClassifierReachesWorstCorner) {
  Matrix w(2, 3);
  w << 1.0, -2.0, 0.5, -1.0, 0.5, 2.0;
  Layer l;
  l.weights = w;
  l.bias = Vector::Zero(2);
  l.activations.assign(2, Activation::identity());
  const Network net(3, {l});
  const Vector x = Vector::Constant(3, 0.5);
  const double eps = 0.1;
  // CE for label 0 grows with (w_1 - w_0) . x', maximised at the sign corner.
  const Vector dir = (w.row(1) - w.row(0)).transpose();
  const Vector corner = x + eps * dir.array().sign().matrix();
  const Vector adv = pgd_attack(net, x, 0, eps, 20, 0.0, 1, 7);
  EXPECT_TRUE(adv.isApprox(corner, 1e-12)) << adv.transpose();
  // Restarts do not change the optimum of a linear objective.
  EXPECT_TRUE(pgd_attack(net, x, 0, eps, 20, 0.0, 4, 7).isApprox(corner, 1e-12));
}

TEST(Pgd, StaysInClippedBallAndIsDeterministic) {
  std::mt19937_64 rng(4);
  const Network net = testing::random_network({4, 10, 3}, rng);
  Matrix X = Matrix::NullaryExpr(4, 20, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); });
  X(0, 0) = 0.0;
  X(1, 1) = 1.0;
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) y[static_cast<std::size_t>(i)] = i % 3;
  const double eps = 0.1;
  const PgdConfig cfg{10, 0.0, 3};
  const Matrix a = pgd_attack_batch(net, X, y, eps, cfg, 11);
  EXPECT_EQ(a, pgd_attack_batch(net, X, y, eps, cfg, 11));
  EXPECT_LE((a - X).cwiseAbs().maxCoeff(), eps + 1e-15);
  EXPECT_GE(a.minCoeff(), 0.0);
  EXPECT_LE(a.maxCoeff(), 1.0);
  // The batched attack agrees with the single-point version through its seed.
  const Vector single = pgd_attack(net, X.col(0), y[0], eps, 10, 0.0, 1, 11);
  const Matrix first = pgd_attack_batch(net, X.leftCols(1), {y[0]}, eps, PgdConfig{10, 0.0, 1}, 11);
  EXPECT_EQ(single, first.col(0));
}

TEST(Pgd, LossNonDecreasingInSteps) {
  std::mt19937_64 rng(5);
  const Network net = testing::random_network({3, 8, 3}, rng);
  const Vector x = testing::random_point(3, rng, 0.2, 0.8);
  auto ce = [&](const Vector& p) {
    const Vector z = forward(net, p);
    return std::log((z.array() - z.maxCoeff()).exp().sum()) + z.maxCoeff() - z(1);
  };
  double prev = ce(x);
  for (int steps = 1; steps <= 30; ++steps) {
    const double cur = ce(pgd_attack(net, x, 1, 0.1, steps, 0.002, 1, 0));
    EXPECT_GE(cur, prev - 1e-12);
    prev = cur;
  }
}

class LossGradient : public ::testing::TestWithParam<const char*> {};

TEST_P(LossGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  Network net = testing::random_network({3, 6, 5, 3}, rng);
  std::vector<Layer> layers = net.layers();
  layers[0].activations[2] = Activation::grafted(0.4, 0.05);
  layers[1].activations[1] = Activation::grafted(0.6, -0.1);
  net = Network(3, layers);
  TrainConfig cfg;
  cfg.lambda_slope = 0.7;
  cfg.lambda_l1 = 0.3;
  cfg.eps_train = 0.15;
  const Matrix clean = Matrix::NullaryExpr(3, 4, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); });
  Batch batch{(clean.array() + 0.05).matrix(), {0, 1, 2, 1}};
  const LossFn loss = make_loss(parse_loss_terms(GetParam(), cfg), clean);
  const GradResult r = grad(loss, net, batch);
  const std::vector<double> g = flatten_gradient(r.grad);
  const std::vector<double> theta = flatten_parameters(net);
  const double h = 1e-6;
  double max_abs = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (grad(loss, with_parameters(net, tp), batch).loss - grad(loss, with_parameters(net, tm), batch).loss) / (2 * h);
    EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << GetParam() << " parameter " << i;
    max_abs = std::max(max_abs, std::abs(g[i]));
  }
  EXPECT_GT(max_abs, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Terms, LossGradient, ::testing::Values("adv_ce", "slope", "l1", "adv_ce,slope,l1"));

TEST(TotalLoss, ZeroCoefficientsEqualAdversarialCe) {
  std::mt19937_64 rng(7);
  const Network net = testing::random_network({3, 6, 3}, rng);
  TrainConfig cfg;
  cfg.lambda_slope = 0.0;
  cfg.lambda_l1 = 0.0;
  cfg.eps_train = 0.1;
  cfg.pgd = {5, 0.0, 2};
  const Batch batch{Matrix::NullaryExpr(3, 6, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); }),
                    {0, 1, 2, 0, 1, 2}};
  const GradResult total = total_loss(net, batch, cfg, 9);
  const Matrix adv = pgd_attack_batch(net, batch.inputs, batch.labels, 0.1, cfg.pgd, 9);
  const GradResult ce = grad(make_loss(parse_loss_terms("adv_ce", cfg), batch.inputs), net, Batch{adv, batch.labels});
  EXPECT_EQ(total.loss, ce.loss);
  EXPECT_EQ(flatten_gradient(total.grad), flatten_gradient(ce.grad));
}

TEST(TotalLoss, ComposesTermsWithCoefficients) {
  std::mt19937_64 rng(8);
  Network net = testing::random_network({3, 6, 5, 3}, rng);
  std::vector<Layer> layers = net.layers();
  layers[1].activations[0] = Activation::grafted(0.4, 0.0);
  net = Network(3, layers);
  TrainConfig cfg;  // default coefficients 5e-5 and 1e-4
  cfg.eps_train = 0.1;
  cfg.pgd = {3, 0.0, 1};
  const Batch batch{Matrix::NullaryExpr(3, 1, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); }), {2}};
  const Matrix adv = pgd_attack_batch(net, batch.inputs, batch.labels, 0.1, cfg.pgd, 3);
  const Vector z = forward(net, adv.col(0));
  const double ce = std::log((z.array() - z.maxCoeff()).exp().sum()) + z.maxCoeff() - z(2);
  const double slope = slope_loss(net, ibp(net, batch.inputs.col(0), 0.1), cfg.slope_k);
  EXPECT_NEAR(total_loss(net, batch, cfg, 3).loss, ce + 5e-5 * slope + 1e-4 * l1_reg(net), 1e-12);
}

TEST(Training, ZeroEpochsIsIdentity) {
  const Network net = make_mlp({2, 8, 8, 2}, 1);
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const TrainResult r = finetune(net, moons(64, 2), cfg);
  EXPECT_EQ(flatten_parameters(r.net), flatten_parameters(net));
  EXPECT_TRUE(r.log.empty());
}

TEST(Training, DeterministicForSeed) {
  const Network net = apply_graft(make_mlp({2, 8, 8, 2}, 1), [] {
    GraftSet s;
    s.insert(0, 1, 0.4, 0.0);
    s.insert(1, 3, 0.4, 0.0);
    return s;
  }());
  const TrainData data = moons(96, 3);
  const TrainResult a = finetune(net, data, small_config());
  const TrainResult b = finetune(net, data, small_config());
  EXPECT_EQ(flatten_parameters(a.net), flatten_parameters(b.net));
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_EQ(a.log.back().loss, b.log.back().loss);
  TrainConfig other = small_config();
  other.seed = 6;
  EXPECT_NE(flatten_parameters(finetune(net, data, other).net), flatten_parameters(a.net));
  // Slopes move under fine-tuning but not under adversarial training.
  EXPECT_NE(a.net.layer(0).activations[1].slope, 0.4);
  EXPECT_EQ(adversarial_train(net, data, small_config()).net.layer(0).activations[1].slope, 0.4);
}

TEST(Training, AdversarialTrainingLearnsMoons) {
  const TrainData data = moons(300, 4);
  TrainConfig cfg = small_config();
  cfg.epochs = 15;
  cfg.lr.decay_epochs = {10};
  const TrainResult r = adversarial_train(make_mlp({2, 16, 16, 2}, 2), data, cfg);
  ASSERT_EQ(r.log.size(), 15u);
  EXPECT_GT(r.log.back().sa, 80.0);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
}

TEST(Training, SlopeLossReducesInstability) {
  const TrainData data = moons(300, 5);
  TrainConfig cfg = small_config();
  cfg.epochs = 15;
  cfg.lr.decay_epochs = {10};
  const Network base = adversarial_train(make_mlp({2, 16, 16, 2}, 3), data, cfg).net;
  auto mean_unr = [&](const Network& n) {
    double u = 0.0;
    for (Eigen::Index c = 0; c < data.inputs.cols(); ++c) u += neuron_status(n, ibp(n, data.inputs.col(c), cfg.eps_train)).unr();
    return u / static_cast<double>(data.inputs.cols());
  };
  TrainConfig ft = small_config();
  ft.epochs = 10;
  ft.lr.base = 0.01;
  ft.lr.decay_epochs = {};
  ft.lambda_slope = 0.05;
  const double before = mean_unr(base);
  ASSERT_GT(before, 0.0);
  const Network after = finetune(base, data, ft).net;
  EXPECT_LT(mean_unr(after), before);
}

TEST(Training, DivergenceKeepsLastGoodNetwork) {
  const Network net = make_mlp({2, 8, 8, 2}, 1);
  TrainConfig cfg = small_config();
  cfg.lr.base = 1e200;
  cfg.momentum = 0.0;
  const TrainResult r = adversarial_train(net, moons(64, 6), cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.message.empty());
  for (double v : flatten_parameters(r.net)) EXPECT_TRUE(std::isfinite(v));
}

TEST(TrainConfig, ValidationAndSchedule) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.lr.at(0), 0.1);
  EXPECT_DOUBLE_EQ(cfg.lr.at(25), 0.01);
  EXPECT_NEAR(cfg.lr.at(39), 0.001, 1e-15);
  auto bad = cfg;
  bad.lr.base = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.prune_ratio = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.lr_graft = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_loss_terms("adv_ce,gradalign", cfg), ConfigError);
  EXPECT_EQ(parse_slope_loss_kind("symmetric"), SlopeLossKind::Symmetric);
  EXPECT_EQ(to_string(SlopeLossKind::Off), "off");
  EXPECT_THROW(parse_slope_loss_kind("cubic"), ConfigError);
}

TEST(Training, LogCsvHeader) {
  const std::string csv = training_log_csv({EpochLog{0, 1.5, 90.0, 10.0, 3.0}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,sa,unr,lip");
}

}  // namespace
}  // namespace graftcert
