#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "graftcert/types.hpp"

namespace graftcert {

// Per-neuron nonlinearity. A grafted neuron computes slope * z + intercept
// for every z, whatever its sign.
struct Activation {
  enum class Kind { Relu, Grafted, Identity };

  Kind kind = Kind::Relu;
  double slope = 0.0;
  double intercept = 0.0;

  static constexpr Activation relu() { return {Kind::Relu, 0.0, 0.0}; }
  static constexpr Activation identity() { return {Kind::Identity, 0.0, 0.0}; }
  static constexpr Activation grafted(double slope, double intercept) {
    return {Kind::Grafted, slope, intercept};
  }

  bool is_relu() const { return kind == Kind::Relu; }
  bool is_grafted() const { return kind == Kind::Grafted; }
  bool is_identity() const { return kind == Kind::Identity; }

  double apply(double z) const {
    switch (kind) {
      case Kind::Relu: return z > 0.0 ? z : 0.0;
      case Kind::Grafted: return slope * z + intercept;
      case Kind::Identity: return z;
    }
    return z;
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

std::string_view activation_tag(Activation::Kind kind);

// One dense layer: z = W h + b followed by a per-neuron activation.
// weight_mask, when non-empty, has the shape of weights; zero entries are
// pruned connections that training must leave at zero.
struct Layer {
  Matrix weights;
  Vector bias;
  std::vector<Activation> activations;
  Matrix weight_mask;

  Eigen::Index out_dim() const { return weights.rows(); }
  Eigen::Index in_dim() const { return weights.cols(); }
  bool has_mask() const { return weight_mask.size() != 0; }
};

struct NeuronId {
  int layer = 0;
  int index = 0;

  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
};

// Feedforward network of dense layers. Layers 0..L-2 are hidden; layer L-1
// produces the logits and is all Identity.
class Network {
 public:
  Network() = default;
  // Throws ValidationError when shapes do not chain or the output layer is
  // not all Identity.
  Network(int input_dim, std::vector<Layer> layers);

  int input_dim() const { return input_dim_; }
  int output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_hidden_layers() const { return layers_.empty() ? 0 : layers_.size() - 1; }
  std::size_t hidden_neuron_count() const;

  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  const std::vector<Layer>& layers() const { return layers_; }

  // Mutable access for trainers. Callers must keep shapes intact.
  Layer& mutable_layer(std::size_t i) { return layers_.at(i); }

  // Width of every layer including the input: {d_0, d_1, ..., d_{L}}.
  std::vector<int> widths() const;

  void validate() const;

 private:
  int input_dim_ = 0;
  std::vector<Layer> layers_;
};

// Pre-activation z and post-activation h for every layer. post.back() is
// the network output.
struct Trace {
  std::vector<Vector> pre;
  std::vector<Vector> post;
};

Vector forward(const Network& net, const Eigen::Ref<const Vector>& x);

// Column-batched forward: inputs is d_0 x B, result is d_out x B.
Matrix forward_batch(const Network& net, const Eigen::Ref<const Matrix>& inputs);

Trace forward_trace(const Network& net, const Eigen::Ref<const Vector>& x);

// Index of the largest logit; ties resolve to the lower index.
int predict(const Network& net, const Eigen::Ref<const Vector>& x);

// Random He-initialised MLP with ReLU hidden layers and an Identity output.
// dims = {d_0, d_1, ..., d_out}.
Network make_mlp(const std::vector<int>& dims, std::uint64_t seed);

}  // namespace graftcert
