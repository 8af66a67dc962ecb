#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <utility>
#include <vector>

#include "graftcert/network.hpp"
#include "graftcert/types.hpp"

namespace graftcert {

// Subgradient conventions used by every primitive on the tape.
namespace subgradient_policy {
// Derivative of ReLU; 0 at the kink.
inline double relu(double z) { return z > 0.0 ? 1.0 : 0.0; }
// max/min route the gradient to the attaining argument, first one on ties.
inline bool max_takes_first(double a, double b) { return a >= b; }
inline bool min_takes_first(double a, double b) { return a <= b; }
// d|x|/dx; 0 at the origin.
inline double abs(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace subgradient_policy

// Append-only reverse-mode tape over dense matrix values. Nodes are created in
// topological order by construction; backward() walks them in reverse.
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Matrix value);
  Var variable(Matrix value);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const;
  // Gradient of the last backward() root w.r.t. v (zeros if v is constant).
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Root must be 1x1.
  void backward(Var root);

  // W * H + b (b broadcast over columns).
  Var affine(Var weights, Var inputs, Var bias);
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var cdiv(Var a, Var b);
  Var scale(Var a, double alpha);
  Var add_scalar(Var a, double alpha);
  Var relu(Var a);
  Var maximum(Var a, Var b);
  Var minimum(Var a, Var b);
  Var abs(Var a);
  Var tanh(Var a);
  Var square(Var a);
  Var sum(Var a);
  Var mean(Var a);
  // Selected (row, col) entries stacked into a k x 1 column.
  Var gather(Var a, const std::vector<std::pair<int, int>>& entries);

  // Per-row activation of a pre-activation batch z (d x B). slopes and
  // intercepts are d x 1 nodes; only rows whose kind is Grafted read them.
  Var activation(Var z, const std::vector<Activation>& kinds, Var slopes, Var intercepts);

  // Interval image of an affine map: lower = W+ lo + W- hi + b,
  // upper = W+ hi + W- lo + b. The sign split of W is fixed at its value.
  std::pair<Var, Var> interval_affine(Var weights, Var lo, Var hi, Var bias);

  // Interval image of the per-row activation (ReLU clips at zero; grafted
  // rows scale by the slope, swapping endpoints when it is negative).
  std::pair<Var, Var> interval_activation(Var lo, Var hi, const std::vector<Activation>& kinds,
                                          Var slopes, Var intercepts);

  // Mean softmax cross-entropy of logits (C x B) against labels.
  Var cross_entropy(Var logits, const std::vector<int>& labels);

 private:
  using Pullback = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Matrix value;
    Matrix adjoint;
    bool requires_grad = false;
    std::string_view op;
    Pullback pullback;
  };

  Var push(std::string_view op, Matrix value, bool requires_grad, Pullback pullback);
  void accumulate(std::size_t id, const Matrix& g);
  const Matrix& adjoint(std::size_t id) const { return nodes_[id].adjoint; }
  bool any_grad(std::initializer_list<Var> vars) const;

  std::vector<Node> nodes_;
};

// Gradient with the exact shapes of a Network's parameters.
struct LayerGrad {
  Matrix weights;
  Vector bias;
  Vector slopes;
  Vector intercepts;
};

struct ParamGrad {
  std::vector<LayerGrad> layers;

  static ParamGrad zeros_like(const Network& net);
  ParamGrad& operator+=(const ParamGrad& other);
  ParamGrad& operator*=(double alpha);
  bool all_finite() const;
};

// Tape leaves for every trainable parameter of a network.
struct LayerVars {
  Tape::Var weights;
  Tape::Var bias;
  Tape::Var slopes;
  Tape::Var intercepts;
};

struct ParamVars {
  std::vector<LayerVars> layers;
};

// trainable = false binds the parameters as constants (e.g. for input
// gradients during attacks).
ParamVars bind_parameters(Tape& tape, const Network& net, bool trainable = true);
ParamGrad collect_gradients(const Tape& tape, const Network& net, const ParamVars& params);

// Logits of a column batch.
Tape::Var tape_forward(Tape& tape, const Network& net, const ParamVars& params, Tape::Var inputs);

struct IntervalVars {
  Tape::Var lower;
  Tape::Var upper;
};

// Differentiable interval bound propagation from the box [lo, hi] (d_0 x B).
// Returns the pre-activation bounds of every layer.
std::vector<IntervalVars> tape_ibp(Tape& tape, const Network& net, const ParamVars& params,
                                   Tape::Var lo, Tape::Var hi);

struct Batch {
  Matrix inputs;            // d_0 x B
  std::vector<int> labels;  // B
};

using LossFn = std::function<Tape::Var(Tape&, const Network&, const ParamVars&, const Batch&)>;

struct GradResult {
  double loss = 0.0;
  ParamGrad grad;
};

// Evaluates loss_fn on a fresh tape and differentiates it w.r.t. every
// parameter of net, grafted slopes and intercepts included.
GradResult grad(const LossFn& loss_fn, const Network& net, const Batch& batch);

// Flat parameter vector (weights row-major, bias, slopes, intercepts per
// layer); used for optimisation and finite-difference checks.
std::vector<double> flatten_parameters(const Network& net);
Network with_parameters(const Network& net, const std::vector<double>& flat);
std::vector<double> flatten_gradient(const ParamGrad& g);

}  // namespace graftcert
