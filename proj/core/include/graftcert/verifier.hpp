#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graftcert/bounds.hpp"
#include "graftcert/network.hpp"
#include "graftcert/robust_train.hpp"

namespace graftcert {

enum class Verdict { Verified, Falsified, Unknown };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

struct Certificate {
  Verdict verdict = Verdict::Unknown;
  // Lower bounds on f_label - f_rival for each class (label entry is 0).
  std::vector<double> margin_lower;
  int branches = 0;
  double seconds = 0.0;
  std::optional<Vector> counterexample;
};

// Margin specification rows e_label - e_rival for every rival class.
Matrix margin_spec(int classes, int label);

// Incomplete check: verified when every CROWN margin lower bound is positive.
// Misclassified inputs are reported falsified with x as the counterexample.
Certificate certify_incomplete(const Network& net, const Eigen::Ref<const Vector>& x, int label,
                               double eps, const CrownOptions& options = {});

struct BabBudget {
  int max_branches = 2000;
  double max_seconds = 10.0;
  // Attack run before branching; any misclassified point in the box falsifies.
  PgdConfig attack{20, 0.0, 5};
  CrownOptions crown{LowerSlope::Adaptive, true};
  std::uint64_t seed = 0;

  void validate() const;
};

// Complete check by depth-first branch and bound over unstable ReLUs. A
// domain whose relaxation cannot decide it and has no unstable neuron left is
// solved exactly as a linear program over its activation region.
Certificate certify_bab(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                        const BabBudget& budget = {});

// Observer for tests: called for every evaluated domain with its splits,
// its own margin lower bounds and the parent's.
struct BabTrace {
  struct Node {
    std::vector<Split> splits;
    std::vector<double> margin_lower;
    std::vector<double> parent_margin_lower;
  };
  std::vector<Node> nodes;
};

Certificate certify_bab_traced(const Network& net, const Eigen::Ref<const Vector>& x, int label,
                               double eps, const BabBudget& budget, BabTrace* trace);

struct OracleResult {
  Verdict verdict = Verdict::Unknown;  // Verified or Falsified
  double min_margin = 0.0;             // exact min over the box of min_r f_label - f_r
  Interval output_range;               // exact range of each logit over the box
  std::size_t patterns = 0;            // feasible activation patterns
  bool exact_arithmetic = false;       // rationals rather than doubles
  std::optional<Vector> counterexample;
};

// Exhaustive activation-pattern enumeration with one exact LP per pattern.
// Refuses (SizeError) when IBP reports more than max_unstable unstable
// neurons. exact_width_limit decides when rationals are used: all layer
// widths (input included) must not exceed it.
OracleResult exhaustive_oracle(const Network& net, const Eigen::Ref<const Vector>& x, int label,
                               double eps, int max_unstable = 14, int exact_width_limit = 8);

struct SuiteConfig {
  PgdConfig attack{20, 0.0, 5};
  BabBudget budget;
  std::uint64_t seed = 0;
};

struct SuiteMetrics {
  double sa = 0.0;
  double ra = 0.0;
  double va = 0.0;
  double unr = 0.0;
  double time_sec = 0.0;
  int samples = 0;
  int unknown = 0;
};

struct SuiteResult {
  SuiteMetrics metrics;
  std::vector<Certificate> certificates;
};

// SA, RA, VA in percent over all samples (columns of inputs); UNR is the mean
// IBP unstable ratio; time_sec averages over samples that were certified
// (correct and not broken by the attack).
SuiteResult evaluate_suite(const Network& net, const Matrix& inputs, const std::vector<int>& labels,
                           double eps, const SuiteConfig& config = {});

std::string certificate_to_json(const Certificate& cert);
Certificate certificate_from_json(const std::string& text);
std::string metrics_to_json(const SuiteMetrics& m);
SuiteMetrics metrics_from_json(const std::string& text);

}  // namespace graftcert
