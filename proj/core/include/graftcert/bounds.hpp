#pragma once

#include <vector>

#include "graftcert/network.hpp"
#include "graftcert/types.hpp"

namespace graftcert {

struct Interval {
  Vector lower;
  Vector upper;
};

// Pre-activation bounds of every layer (including the logits layer) over the
// input box [x - eps, x + eps].
struct BoundsCache {
  Vector x;
  double eps = 0.0;
  std::vector<Interval> pre;
  // Set when split constraints make the box empty; all bounds are then void.
  bool infeasible = false;

  const Interval& logits() const { return pre.back(); }
};

enum class NeuronStatus { Active, Inactive, Unstable, Linear };

// Status of one neuron given its activation and pre-activation bounds.
// Strict inequalities define instability: lb < 0 < ub.
NeuronStatus classify(const Activation& act, double lb, double ub);

// Lower-line slope for an unstable ReLU in the backward relaxation.
enum class LowerSlope { Adaptive, Zero, One };

// Linear bounds of one ReLU over [lb, ub]:
//   lower_slope * z <= relu(z) <= upper_slope * z + upper_intercept.
struct ReluRelaxation {
  NeuronStatus status = NeuronStatus::Active;
  double upper_slope = 1.0;
  double upper_intercept = 0.0;
  double lower_slope = 1.0;
};

ReluRelaxation relax_relu(double lb, double ub, LowerSlope policy = LowerSlope::Adaptive);

// Branch-and-bound split: the neuron's pre-activation is constrained to be
// non-negative (active) or non-positive (inactive).
struct Split {
  NeuronId neuron;
  bool active = true;

  friend bool operator==(const Split&, const Split&) = default;
};

// Interval bound propagation. With splits, the split neurons' bounds are
// intersected with their half-line before propagating further.
BoundsCache ibp(const Network& net, const Eigen::Ref<const Vector>& x, double eps,
                const std::vector<Split>& splits = {});

// Output-side linear bounds A_L x' + b_L <= C z(x') <= A_U x' + b_U for x' in
// the box.
struct LinearBounds {
  Matrix lower_A;
  Vector lower_b;
  Matrix upper_A;
  Vector upper_b;
};

struct CrownOptions {
  LowerSlope lower_slope = LowerSlope::Adaptive;
  // Refine every intermediate layer's bounds by backward substitution
  // instead of keeping the IBP ones.
  bool refine_intermediate = false;
};

// Backward linear relaxation of spec * z^{(target_layer)} where z is the
// pre-activation of target_layer (default: logits). spec defaults to the
// identity. `intermediate` must hold bounds for every layer below target.
LinearBounds crown_backward(const Network& net, const BoundsCache& intermediate,
                            const Matrix* spec = nullptr, int target_layer = -1,
                            const CrownOptions& options = {});

// Interval form of linear bounds over the box: A x -/+ eps * ||A_row||_1 + b.
Interval concretize(const LinearBounds& bounds, const Eigen::Ref<const Vector>& x, double eps);

// Bounds for every layer computed with backward substitution (intermediate
// layers refined when options.refine_intermediate) and intersected with the
// IBP bounds. Honors splits like ibp().
BoundsCache crown_bounds(const Network& net, const Eigen::Ref<const Vector>& x, double eps,
                         const CrownOptions& options = {}, const std::vector<Split>& splits = {});

// Applies the split constraints to layer `layer` of the cache in place.
// Returns false when a split empties an interval.
bool apply_splits(BoundsCache& cache, int layer, const std::vector<Split>& splits);

struct StatusReport {
  std::vector<std::vector<NeuronStatus>> status;  // hidden layers only
  int unstable = 0;
  int total = 0;
  // Unstable neurons over all hidden neurons, in percent.
  double unr() const { return total == 0 ? 0.0 : 100.0 * unstable / total; }
};

// Grafted and Identity neurons are never unstable.
StatusReport neuron_status(const Network& net, const BoundsCache& cache);

}  // namespace graftcert
