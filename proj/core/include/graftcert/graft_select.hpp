#pragma once

#include <vector>

#include "graftcert/bounds.hpp"
#include "graftcert/graft_set.hpp"
#include "graftcert/network.hpp"

namespace graftcert {

// Instability counts and widest pre-activation interval per hidden neuron,
// accumulated over a calibration set in one pass. The weighted interval
// score against any selected next-layer set follows from max_width without
// revisiting the samples, because |w| does not depend on the sample.
class ScoreAccumulator {
 public:
  explicit ScoreAccumulator(const Network& net);

  void add(const BoundsCache& bounds);
  // Associative and commutative merge of two partial accumulations.
  void merge(const ScoreAccumulator& other);

  int calibration_size() const { return samples_; }
  const std::vector<std::vector<int>>& instability() const { return instability_; }
  const std::vector<std::vector<double>>& max_width() const { return max_width_; }

 private:
  std::vector<std::vector<int>> instability_;
  std::vector<std::vector<double>> max_width_;
  int samples_ = 0;
};

struct ScoreTable {
  std::vector<std::vector<int>> instability;           // s_u per hidden layer
  std::vector<std::vector<double>> weighted_interval;  // s_wi per hidden layer
  int calibration_size = 0;
};

// Pre-activation bounds for each calibration sample (columns of inputs).
enum class ScoreBounds { Ibp, Crown };

std::vector<BoundsCache> calibration_bounds(const Network& net, const Matrix& inputs, double eps,
                                            ScoreBounds source = ScoreBounds::Ibp);

// s_u: number of calibration inputs for which lb < 0 < ub.
std::vector<std::vector<int>> instability_score(const Network& net, const Matrix& inputs, double eps);

// s_wi of hidden layer `layer` against the selected neurons of layer+1:
// max over inputs and selected k of |W^{(layer+1)}_{k,j}| * (ub_j - lb_j).
// For the last hidden layer, selected_next indexes the outputs. Throws
// ConfigError when selected_next is empty.
std::vector<double> weighted_interval_score(const Network& net, const Matrix& inputs, double eps,
                                            int layer, const std::vector<int>& selected_next);
std::vector<double> weighted_interval_score(const Network& net, const ScoreAccumulator& acc, int layer,
                                            const std::vector<int>& selected_next);

struct SelectionConfig {
  double pool = 0.8;          // fraction of hidden neurons kept by s_u, network-wide
  double influential = 0.15;  // fraction of a layer chosen by s_wi
  double last_retain = 0.7;   // kept in the last hidden layer when the pool covers it
  double graft_ratio = 0.5;   // per-layer budget for earlier layers
  bool always_retain = false; // apply last_retain even when the pool is partial
  ScoreBounds bounds = ScoreBounds::Ibp;

  // Throws ConfigError unless every ratio lies in (0, 1].
  void validate() const;
};

// Backward neuron selection over a calibration set. Requires at least two
// hidden layers.
GraftSet backward_select(const Network& net, const Matrix& inputs, double eps,
                         const SelectionConfig& config = {});
GraftSet backward_select(const Network& net, const ScoreAccumulator& scores,
                         const SelectionConfig& config = {});

// Scores as used by backward_select: s_u everywhere and s_wi against the
// chosen set of the following layer (zero for the last hidden layer).
ScoreTable score_table(const Network& net, const ScoreAccumulator& scores, const GraftSet& selection);

// Returns a copy of net whose selected neurons become GraftedLinear with the
// given slope and intercept. Throws ValidationError for out-of-range or
// Identity neurons.
Network apply_graft(const Network& net, const GraftSet& set, double init_slope = 0.4,
                    double init_intercept = 0.0);

// Applies a set using its own per-neuron slopes and intercepts.
Network apply_graft_parameters(const Network& net, const GraftSet& set);

// The grafted neurons of net with their current slopes and intercepts.
GraftSet grafted_neurons(const Network& net);

// Reference output for pruning comparisons: net with the outgoing weights of
// every neuron in set zeroed.
Network zero_outgoing(const Network& net, const GraftSet& set);

}  // namespace graftcert
