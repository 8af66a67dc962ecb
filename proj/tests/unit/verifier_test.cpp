#include <gtest/gtest.h>

#include "graftcert/bounds.hpp"
#include "graftcert/error.hpp"
#include "graftcert/robust_train.hpp"
#include "graftcert/verifier.hpp"
#include "test_support.hpp"

namespace graftcert {
namespace {

using testing::make_layer;

double min_margin_at(const Network& net, const Vector& p, int label) {
  const Vector y = forward(net, p);
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    if (r != label) m = std::min(m, y(label) - y(r));
  }
  return m;
}

bool in_box(const Vector& p, const Vector& x, double eps) { return (p - x).cwiseAbs().maxCoeff() <= eps + 1e-12; }

TEST(CertifyIncomplete, ZeroEpsCorrectIsVerified) {
  std::mt19937_64 rng(1);
  const Network net = testing::random_network({3, 8, 8, 3}, rng);
  for (int t = 0; t < 20; ++t) {
    const Vector x = testing::random_point(3, rng);
    const int y = predict(net, x);
    EXPECT_EQ(certify_incomplete(net, x, y, 0.0).verdict, Verdict::Verified);
    EXPECT_EQ(certify_bab(net, x, y, 0.0).verdict, Verdict::Verified);
  }
}

TEST(CertifyIncomplete, MisclassifiedIsFalsifiedAtX) {
  std::mt19937_64 rng(2);
  const Network net = testing::random_network({3, 8, 3}, rng);
  const Vector x = testing::random_point(3, rng);
  const int wrong = (predict(net, x) + 1) % 3;
  for (const Certificate& c : {certify_incomplete(net, x, wrong, 0.1), certify_bab(net, x, wrong, 0.1)}) {
    EXPECT_EQ(c.verdict, Verdict::Falsified);
    ASSERT_TRUE(c.counterexample.has_value());
    EXPECT_EQ(*c.counterexample, x);
  }
}

TEST(CertifyIncomplete, LinearClassifierClosedForm) {
  std::mt19937_64 rng(3);
  int verified = 0, unknown = 0;
  for (int t = 0; t < 500; ++t) {
    Layer l;
    l.weights = Matrix::NullaryExpr(3, 4, [&] { return std::uniform_real_distribution<double>(-1, 1)(rng); });
    l.bias = Vector::NullaryExpr(3, [&] { return std::uniform_real_distribution<double>(-0.3, 0.3)(rng); });
    l.activations.assign(3, Activation::identity());
    const Network net(4, {l});
    const Vector x = testing::random_point(4, rng);
    const int y = predict(net, x);
    const double eps = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    double worst = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 3; ++r) {
      if (r == y) continue;
      const Vector d = (l.weights.row(y) - l.weights.row(r)).transpose();
      worst = std::min(worst, d.dot(x) + l.bias(y) - l.bias(r) - eps * d.lpNorm<1>());
    }
    if (std::abs(worst) < 1e-9) continue;
    const Certificate c = certify_incomplete(net, x, y, eps);
    EXPECT_EQ(c.verdict, worst > 0 ? Verdict::Verified : Verdict::Unknown) << "instance " << t;
    (worst > 0 ? verified : unknown) += 1;
  }
  EXPECT_GT(verified, 50);
  EXPECT_GT(unknown, 50);
}

TEST(CertifyIncomplete, MarginsMatchCrownSpec) {
  std::mt19937_64 rng(4);
  const Network net = testing::random_network({3, 8, 3}, rng);
  const Vector x = testing::random_point(3, rng);
  const int y = predict(net, x);
  const Certificate c = certify_incomplete(net, x, y, 0.02);
  ASSERT_EQ(c.margin_lower.size(), 3u);
  EXPECT_EQ(c.margin_lower[static_cast<std::size_t>(y)], 0.0);
  const Matrix C = margin_spec(3, y);
  EXPECT_EQ(C.rows(), 2);
  for (Eigen::Index r = 0; r < C.rows(); ++r) EXPECT_EQ(C(r, y), 1.0);
}

// Random tiny instance with a handful of unstable neurons.
struct Instance {
  Network net;
  Vector x;
  int label = 0;
  double eps = 0.0;
};

Instance tiny_instance(std::mt19937_64& rng, int width = 6) {
  Instance in;
  in.net = testing::random_network({2, width, width, 2}, rng, 2.0, 0.4);
  in.x = testing::random_point(2, rng);
  in.label = predict(in.net, in.x);
  in.eps = std::uniform_real_distribution<double>(0.02, 0.15)(rng);
  return in;
}

int ibp_unstable(const Instance& in) { return neuron_status(in.net, ibp(in.net, in.x, in.eps)).unstable; }

TEST(CertifyBab, AgreesWithExhaustiveOracle) {
  std::mt19937_64 rng(5);
  int compared = 0, verified = 0, falsified = 0;
  BabBudget budget;
  budget.max_branches = 100000;
  budget.max_seconds = 60.0;
  while (compared < 200) {
    const Instance in = tiny_instance(rng);
    if (ibp_unstable(in) > 10) continue;
    const OracleResult o = exhaustive_oracle(in.net, in.x, in.label, in.eps);
    if (std::abs(o.min_margin) < 1e-7) continue;
    const Certificate c = certify_bab(in.net, in.x, in.label, in.eps, budget);
    EXPECT_EQ(c.verdict, o.verdict) << "instance " << compared << " oracle margin " << o.min_margin;
    if (c.verdict == Verdict::Falsified) {
      ASSERT_TRUE(c.counterexample.has_value());
      EXPECT_TRUE(in_box(*c.counterexample, in.x, in.eps));
      EXPECT_NE(predict(in.net, *c.counterexample), in.label);
      ++falsified;
    } else if (c.verdict == Verdict::Verified) {
      ++verified;
    }
    ++compared;
  }
  EXPECT_GT(verified, 20);
  EXPECT_GT(falsified, 10);
}

TEST(CertifyBab, SplittingNeverLoosens) {
  std::mt19937_64 rng(6);
  int children = 0;
  for (int t = 0; t < 200; ++t) {
    Instance in = tiny_instance(rng, 8);
    in.eps *= 2.0;
    BabTrace trace;
    BabBudget budget;
    budget.max_branches = 400;
    // Without the root attack, falsifiable instances are branched as well.
    budget.attack = {0, 0.0, 1};
    certify_bab_traced(in.net, in.x, in.label, in.eps, budget, &trace);
    for (const BabTrace::Node& n : trace.nodes) {
      if (n.parent_margin_lower.empty()) continue;
      ++children;
      for (std::size_t r = 0; r < n.margin_lower.size(); ++r) {
        EXPECT_GE(n.margin_lower[r], n.parent_margin_lower[r] - 1e-9);
      }
    }
  }
  EXPECT_GT(children, 50);
}

TEST(CertifyBab, NoUnstableNeuronsReducesToIncomplete) {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int t = 0; t < 200 && checked < 20; ++t) {
    Instance in = tiny_instance(rng);
    in.eps = 0.002;
    if (ibp_unstable(in) != 0) continue;
    const Certificate a = certify_incomplete(in.net, in.x, in.label, in.eps);
    const Certificate b = certify_bab(in.net, in.x, in.label, in.eps);
    EXPECT_EQ(a.verdict, b.verdict);
    EXPECT_EQ(b.branches, 0);
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(CertifyBab, BudgetValidationAndExhaustion) {
  std::mt19937_64 rng(8);
  const Instance in = tiny_instance(rng);
  BabBudget b;
  b.max_branches = 0;
  EXPECT_THROW(certify_bab(in.net, in.x, in.label, in.eps, b), ConfigError);
  b = {};
  b.max_seconds = 0.0;
  EXPECT_THROW(certify_bab(in.net, in.x, in.label, in.eps, b), ConfigError);
  // A single branch cannot finish a hard instance: unknown, never a crash.
  int unknown = 0;
  for (int t = 0; t < 100; ++t) {
    const Instance hard = tiny_instance(rng, 10);
    BabBudget one;
    one.max_branches = 1;
    one.attack = {0, 0.0, 1};
    const Certificate c = certify_bab(hard.net, hard.x, hard.label, hard.eps, one);
    if (c.verdict == Verdict::Unknown) {
      ++unknown;
      EXPECT_LE(c.branches, 1);
    }
  }
  EXPECT_GT(unknown, 0);
}

TEST(CertifyBab, LargerBudgetNeverLosesVerification) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 80; ++t) {
    const Instance in = tiny_instance(rng, 8);
    BabBudget small;
    small.max_branches = 8;
    BabBudget large = small;
    large.max_branches = 2000;
    const Verdict a = certify_bab(in.net, in.x, in.label, in.eps, small).verdict;
    const Verdict b = certify_bab(in.net, in.x, in.label, in.eps, large).verdict;
    if (a != Verdict::Unknown) {
      EXPECT_EQ(b, a) << "instance " << t;
    }
  }
}

TEST(Certificates, VerifiedSamplesResistAttacksAndSampling) {
  std::mt19937_64 rng(10);
  int verified = 0;
  for (int t = 0; t < 60 && verified < 10; ++t) {
    const Instance in = tiny_instance(rng);
    if (certify_bab(in.net, in.x, in.label, in.eps).verdict != Verdict::Verified) continue;
    ++verified;
    const Vector adv = pgd_attack(in.net, in.x, in.label, in.eps, 50, 0.0, 10, static_cast<std::uint64_t>(t));
    EXPECT_EQ(predict(in.net, adv), in.label);
    int broken = 0;
    for (int s = 0; s < 10000; ++s) {
      const Vector p = s % 4 == 0 ? testing::corner_of_ball(in.x, in.eps, rng) : testing::point_in_ball(in.x, in.eps, rng);
      broken += predict(in.net, p) != in.label;
    }
    EXPECT_EQ(broken, 0);
  }
  EXPECT_EQ(verified, 10);
}

TEST(Oracle, AllStableIsAffineIntervalArithmetic) {
  Layer l0 = make_layer({{1.0, 0.5}, {-0.5, 1.0}}, {2.0, 2.0});
  const Layer l1 = make_layer({{1.0, -2.0}, {0.5, 1.0}}, {0.1, -0.1}, Activation::identity());
  const Network net(2, {l0, l1});
  Vector x(2);
  x << 0.5, 0.5;
  const double eps = 0.1;
  const OracleResult o = exhaustive_oracle(net, x, predict(net, x), eps);
  EXPECT_EQ(o.patterns, 1u);
  EXPECT_TRUE(o.exact_arithmetic);
  const Matrix A = l1.weights * l0.weights;
  const Vector c = A * x + l1.weights * l0.bias + l1.bias;
  const Vector r = eps * A.cwiseAbs().rowwise().sum();
  EXPECT_TRUE(o.output_range.lower.isApprox(c - r, 1e-12));
  EXPECT_TRUE(o.output_range.upper.isApprox(c + r, 1e-12));
}

TEST(Oracle, OneUnstableNeuronMatchesGridHull) {
  const Layer l0 = make_layer({{1.0, 0.0}, {0.0, 1.0}}, {-0.5, 2.0});
  const Layer l1 = make_layer({{1.0, -1.0}, {2.0, 1.0}}, {0.0, 0.0}, Activation::identity());
  const Network net(2, {l0, l1});
  Vector x(2);
  x << 0.5, 0.5;
  const double eps = 0.25;
  ASSERT_EQ(neuron_status(net, ibp(net, x, eps)).unstable, 1);
  const OracleResult o = exhaustive_oracle(net, x, predict(net, x), eps);
  EXPECT_EQ(o.patterns, 2u);
  const int n = 200;
  Vector lo = Vector::Constant(2, 1e9), hi = Vector::Constant(2, -1e9);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      Vector p(2);
      p << x(0) - eps + 2 * eps * i / n, x(1) - eps + 2 * eps * j / n;
      const Vector y = forward(net, p);
      lo = lo.cwiseMin(y);
      hi = hi.cwiseMax(y);
    }
  }
  // Output Lipschitz is below 3, grid spacing 2 * eps / n.
  const double tol = 3.0 * 2 * eps / n;
  EXPECT_TRUE((o.output_range.lower.array() <= lo.array() + 1e-12).all());
  EXPECT_TRUE((o.output_range.upper.array() >= hi.array() - 1e-12).all());
  EXPECT_TRUE(((lo - o.output_range.lower).array() <= tol).all());
  EXPECT_TRUE(((o.output_range.upper - hi).array() <= tol).all());
}

TEST(Oracle, RangeInsideRelaxationsAndMarginAboveCrown) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const Instance in = tiny_instance(rng);
    if (ibp_unstable(in) > 10) continue;
    const OracleResult o = exhaustive_oracle(in.net, in.x, in.label, in.eps);
    const BoundsCache box = ibp(in.net, in.x, in.eps);
    const BoundsCache crown = crown_bounds(in.net, in.x, in.eps, {LowerSlope::Adaptive, true});
    for (const BoundsCache* b : {&box, &crown}) {
      EXPECT_TRUE((b->logits().lower.array() <= o.output_range.lower.array() + 1e-9).all());
      EXPECT_TRUE((b->logits().upper.array() >= o.output_range.upper.array() - 1e-9).all());
    }
    const Certificate c = certify_incomplete(in.net, in.x, in.label, in.eps);
    double crown_min = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < c.margin_lower.size(); ++r) {
      if (static_cast<int>(r) != in.label) crown_min = std::min(crown_min, c.margin_lower[r]);
    }
    EXPECT_GE(o.min_margin, crown_min - 1e-9);
    // The exact minimum is attained: a sampled point never goes below it.
    for (int s = 0; s < 200; ++s) {
      EXPECT_GE(min_margin_at(in.net, testing::point_in_ball(in.x, in.eps, rng), in.label), o.min_margin - 1e-9);
    }
    if (o.counterexample) {
      EXPECT_TRUE(in_box(*o.counterexample, in.x, in.eps));
      EXPECT_LE(min_margin_at(in.net, *o.counterexample, in.label), 1e-9);
    }
  }
}

TEST(Oracle, RationalAndDoubleAgree) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 30; ++t) {
    const Instance in = tiny_instance(rng);
    if (ibp_unstable(in) > 8) continue;
    const OracleResult exact = exhaustive_oracle(in.net, in.x, in.label, in.eps, 14, 8);
    const OracleResult approx = exhaustive_oracle(in.net, in.x, in.label, in.eps, 14, 1);
    EXPECT_TRUE(exact.exact_arithmetic);
    EXPECT_FALSE(approx.exact_arithmetic);
    // The double path relaxes each constraint by 1e-7, so it can only dip lower.
    EXPECT_LE(approx.min_margin, exact.min_margin + 1e-12);
    EXPECT_NEAR(exact.min_margin, approx.min_margin, 1e-5);
    EXPECT_EQ(exact.patterns, approx.patterns);
  }
}

TEST(Oracle, RefusesLargeProblems) {
  std::mt19937_64 rng(13);
  const Network net = testing::random_network({2, 20, 20, 2}, rng, 2.0);
  const Vector x = testing::random_point(2, rng);
  ASSERT_GT(neuron_status(net, ibp(net, x, 0.5)).unstable, 14);
  EXPECT_THROW(exhaustive_oracle(net, x, predict(net, x), 0.5), SizeError);
}

TEST(Suite, AccuracyOrdering) {
  std::mt19937_64 rng(14);
  const Network net = testing::random_network({2, 8, 8, 2}, rng, 2.0, 0.4);
  const Matrix X = Matrix::NullaryExpr(2, 40, [&] { return std::uniform_real_distribution<double>(0, 1)(rng); });
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[static_cast<std::size_t>(i)] = (i % 3 == 0) ? 1 - predict(net, X.col(i)) : predict(net, X.col(i));
  for (double eps : {0.0, 0.02, 0.08}) {
    const SuiteResult r = evaluate_suite(net, X, y, eps);
    const SuiteMetrics& m = r.metrics;
    EXPECT_LE(m.va, m.ra);
    EXPECT_LE(m.ra, m.sa);
    EXPECT_EQ(m.samples, 40);
    EXPECT_EQ(r.certificates.size(), 40u);
    if (eps == 0.0) {
      EXPECT_EQ(m.va, m.sa);
      EXPECT_EQ(m.ra, m.sa);
      EXPECT_EQ(m.unr, 0.0);
    }
    for (std::size_t i = 0; i < r.certificates.size(); ++i) {
      const Certificate& c = r.certificates[i];
      if (c.verdict == Verdict::Falsified) {
        ASSERT_TRUE(c.counterexample.has_value());
        EXPECT_NE(predict(net, *c.counterexample), y[i]);
      }
    }
  }
}

TEST(Serialization, CertificateAndMetricsRoundTrip) {
  Certificate c;
  c.verdict = Verdict::Falsified;
  c.margin_lower = {0.0, -0.125, 1.0 / 3.0};
  c.branches = 17;
  c.seconds = 0.25;
  c.counterexample = (Vector(2) << 0.1, 0.7).finished();
  const Certificate back = certificate_from_json(certificate_to_json(c));
  EXPECT_EQ(back.verdict, c.verdict);
  EXPECT_EQ(back.margin_lower, c.margin_lower);
  EXPECT_EQ(back.branches, 17);
  ASSERT_TRUE(back.counterexample.has_value());
  EXPECT_EQ(*back.counterexample, *c.counterexample);
  SuiteMetrics m{91.0, 81.0, 80.5, 1.75, 0.0123, 100, 2};
  const SuiteMetrics mb = metrics_from_json(metrics_to_json(m));
  EXPECT_EQ(mb.sa, m.sa);
  EXPECT_EQ(mb.va, m.va);
  EXPECT_EQ(mb.time_sec, m.time_sec);
  EXPECT_EQ(mb.unknown, 2);
  for (const char* key : {"\"sa\"", "\"ra\"", "\"va\"", "\"unr\"", "\"time_sec\""}) {
    EXPECT_NE(metrics_to_json(m).find(key), std::string::npos) << key;
  }
  EXPECT_EQ(parse_verdict(to_string(Verdict::Unknown)), Verdict::Unknown);
  EXPECT_THROW(parse_verdict("maybe"), ParseError);
}

}  // namespace
}  // namespace graftcert
