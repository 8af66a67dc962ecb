#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graftcert/autodiff.hpp"
#include "graftcert/bounds.hpp"
#include "graftcert/network.hpp"

namespace graftcert {

enum class SlopeLossKind { Verbatim, Symmetric, Off };

SlopeLossKind parse_slope_loss_kind(const std::string& name);
std::string to_string(SlopeLossKind kind);

struct PgdConfig {
  int steps = 10;
  double step_size = 0.0;  // 0 selects 2.5 * eps / steps
  int restarts = 1;
};

struct LrSchedule {
  double base = 0.1;
  std::vector<int> decay_epochs = {25, 35};
  double factor = 0.1;

  double at(int epoch) const;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 128;
  LrSchedule lr;
  double lr_graft = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda_slope = 5e-5;
  double lambda_l1 = 1e-4;
  double slope_k = 2.0;
  SlopeLossKind slope_kind = SlopeLossKind::Verbatim;
  PgdConfig pgd;
  double prune_ratio = 0.30;
  double eps_train = 0.05;
  double slope_cap = 10.0;
  int monitor_size = 200;
  std::uint64_t seed = 0;

  // Throws ConfigError on non-positive rates or prune_ratio outside [0, 1).
  void validate() const;
};

// 1 - tanh(k (1 - s)^2) (verbatim) or 1 - tanh(4 k (s - 1/2)^2) (symmetric).
double slope_loss_value(double s, double k, SlopeLossKind kind = SlopeLossKind::Verbatim);

// Mean slope loss over the neurons it applies to: unstable ReLUs with
// s = ub / (ub - lb) and grafted neurons with s = slope. Stable ReLUs do not
// contribute. Returns 0 when nothing applies.
double slope_loss(const Network& net, const BoundsCache& bounds, double k,
                  SlopeLossKind kind = SlopeLossKind::Verbatim);

// The same quantity on a tape, averaged over every (sample, neuron) pair of a
// batch of pre-activation bounds.
Tape::Var tape_slope_loss(Tape& tape, const Network& net, const ParamVars& params,
                          const std::vector<IntervalVars>& bounds, double k, SlopeLossKind kind);

// Sum of |w| over all weight matrices; biases excluded.
double l1_reg(const Network& net);
Tape::Var tape_l1(Tape& tape, const ParamVars& params);

// Zeroes the smallest-|w| fraction `ratio` of all weights network-wide (ties
// by layer, row, column) and records them in each layer's weight_mask.
Network small_weight_prune(const Network& net, double ratio);

// Projected gradient ascent on the cross-entropy inside the l_inf ball,
// clipped to [0, 1]. Restarts begin at uniform points of the ball; the
// returned point has the largest loss seen. Deterministic for a seed.
Vector pgd_attack(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                  int steps, double step_size, int restarts, std::uint64_t seed);

// Column-batched attack with the same contract.
Matrix pgd_attack_batch(const Network& net, const Matrix& inputs, const std::vector<int>& labels,
                        double eps, const PgdConfig& pgd, std::uint64_t seed);

// Terms of the training objective evaluated on a fixed (already attacked)
// batch. bounds_eps is the radius used for the slope loss bounds around
// clean_inputs.
struct LossTerms {
  bool cross_entropy = true;
  double lambda_slope = 0.0;
  double lambda_l1 = 0.0;
  double slope_k = 2.0;
  SlopeLossKind slope_kind = SlopeLossKind::Verbatim;
  double bounds_eps = 0.0;
};

// Parses a comma list of term names ("adv_ce,slope,l1"); unknown names throw
// ConfigError.
LossTerms parse_loss_terms(const std::string& names, const TrainConfig& cfg);

// adv/clean inputs share labels; clean_inputs feed the slope loss bounds.
LossFn make_loss(const LossTerms& terms, const Matrix& clean_inputs);

// adv-CE(batch under PGD) + lambda_slope * slope_loss + lambda_l1 * l1_reg.
GradResult total_loss(const Network& net, const Batch& batch, const TrainConfig& cfg, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double sa = 0.0;
  double unr = 0.0;
  double lip = 0.0;
};

struct TrainResult {
  Network net;
  std::vector<EpochLog> log;
  bool diverged = false;
  std::string message;
};

struct TrainData {
  Matrix inputs;  // d_0 x n
  std::vector<int> labels;
};

// PGD adversarial training of every weight and bias (no slope loss).
TrainResult adversarial_train(const Network& net, const TrainData& data, const TrainConfig& cfg);

// Fine-tunes a grafted network with the composite loss. Grafted slopes and
// intercepts use lr_graft; masked weights stay zero. Stops at the last good
// epoch if the loss becomes non-finite.
TrainResult finetune(const Network& net, const TrainData& data, const TrainConfig& cfg);

std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace graftcert
