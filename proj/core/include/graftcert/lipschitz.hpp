#pragma once

#include <cstdint>

#include "graftcert/network.hpp"
#include "graftcert/types.hpp"

namespace graftcert {

// How unstable ReLUs pass interval widths through the recurrence.
//   Pre:  an unstable ReLU passes its pre-activation interval unchanged; the
//         recurrence is then a sound upper bound on the local Lipschitz
//         constant and is monotone under grafting with 0 <= slope <= 1.
//   Post: standard IBP post-activation intervals (clipped at zero). Tighter,
//         but it measures the output range over the ball and is not a
//         Lipschitz upper bound in general.
enum class LipWidth { Pre, Post };

struct LipschitzBound {
  Vector per_output;  // width of output j over the ball, divided by 2 eps
  double max = 0.0;
};

// l_inf local Lipschitz bound from layerwise interval widths, starting at
// width 2 eps per input. Inactive ReLUs (ub <= 0) pass zero width, active ones
// their full width, grafted neurons |slope| times their width.
// Throws ConfigError when eps <= 0.
LipschitzBound interval_lipschitz(const Network& net, const Eigen::Ref<const Vector>& x, double eps,
                                  LipWidth mode = LipWidth::Pre);

// Lower bound on the local Lipschitz constant: the largest difference
// quotient ||f(a)-f(b)||_inf / ||a-b||_inf over n_pairs random pairs in the
// ball, together with the Jacobian norm max_j ||grad f_j||_1 at each sampled
// point. Deterministic for a fixed seed.
double sampled_lipschitz_lower(const Network& net, const Eigen::Ref<const Vector>& x, double eps,
                               int n_pairs, std::uint64_t seed);

// Jacobian of the network on the linear piece containing x (ReLU kinks use
// derivative 0).
Matrix local_jacobian(const Network& net, const Eigen::Ref<const Vector>& x);

struct LipschitzEstimate {
  double upper = 0.0;
  double lower = 0.0;
  Vector x;
  double eps = 0.0;
};

LipschitzEstimate estimate_lipschitz(const Network& net, const Eigen::Ref<const Vector>& x, double eps,
                                     int n_pairs, std::uint64_t seed, LipWidth mode = LipWidth::Pre);

}  // namespace graftcert
