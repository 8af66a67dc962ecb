#include "graftcert/network.hpp"

#include <cmath>
#include <random>
#include <string>

#include "graftcert/error.hpp"
#include "graftcert/random.hpp"

namespace graftcert {

std::string_view activation_tag(Activation::Kind kind) {
  switch (kind) {
    case Activation::Kind::Relu: return "relu";
    case Activation::Kind::Grafted: return "grafted";
    case Activation::Kind::Identity: return "identity";
  }
  return "relu";
}

Network::Network(int input_dim, std::vector<Layer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
  validate();
}

int Network::output_dim() const {
  return layers_.empty() ? input_dim_ : static_cast<int>(layers_.back().out_dim());
}

std::size_t Network::hidden_neuron_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) n += static_cast<std::size_t>(layers_[l].out_dim());
  return n;
}

std::vector<int> Network::widths() const {
  std::vector<int> w{input_dim_};
  for (const auto& layer : layers_) w.push_back(static_cast<int>(layer.out_dim()));
  return w;
}

void Network::validate() const {
  if (input_dim_ <= 0) throw ValidationError("input_dim must be positive");
  if (layers_.empty()) throw ValidationError("network has no layers");
  Eigen::Index prev = input_dim_;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const std::string where = "layer " + std::to_string(l);
    if (layer.weights.rows() == 0) throw ValidationError(where + ": empty weight matrix");
    if (layer.weights.cols() != prev) {
      throw ValidationError(where + ": weights have " + std::to_string(layer.weights.cols()) +
                            " columns, previous layer outputs " + std::to_string(prev));
    }
    if (layer.bias.size() != layer.weights.rows()) throw ValidationError(where + ": bias length mismatch");
    if (static_cast<Eigen::Index>(layer.activations.size()) != layer.weights.rows()) {
      throw ValidationError(where + ": activations length mismatch");
    }
    if (layer.has_mask() &&
        (layer.weight_mask.rows() != layer.weights.rows() || layer.weight_mask.cols() != layer.weights.cols())) {
      throw ValidationError(where + ": weight_mask shape mismatch");
    }
    const bool last = l + 1 == layers_.size();
    for (const Activation& a : layer.activations) {
      if (last && !a.is_identity()) throw ValidationError(where + ": output layer must be all identity");
      if (a.is_grafted() && !std::isfinite(a.slope)) throw ValidationError(where + ": non-finite graft slope");
    }
    prev = layer.weights.rows();
  }
}

namespace {

void check_input(const Network& net, Eigen::Index rows) {
  if (rows != net.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(rows) + ", network expects " +
                     std::to_string(net.input_dim()));
  }
}

template <class Derived>
void activate(const Layer& layer, Eigen::MatrixBase<Derived>& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Activation& a = layer.activations[static_cast<std::size_t>(i)];
    if (a.is_identity()) continue;
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(i, c) = a.apply(z(i, c));
  }
}

}  // namespace

Vector forward(const Network& net, const Eigen::Ref<const Vector>& x) {
  check_input(net, x.size());
  Vector h = x;
  for (const Layer& layer : net.layers()) {
    Vector z = layer.weights * h + layer.bias;
    activate(layer, z);
    h = std::move(z);
  }
  return h;
}

Matrix forward_batch(const Network& net, const Eigen::Ref<const Matrix>& inputs) {
  check_input(net, inputs.rows());
  Matrix h = inputs;
  for (const Layer& layer : net.layers()) {
    Matrix z = layer.weights * h;
    z.colwise() += layer.bias;
    activate(layer, z);
    h = std::move(z);
  }
  return h;
}

Trace forward_trace(const Network& net, const Eigen::Ref<const Vector>& x) {
  check_input(net, x.size());
  Trace t;
  Vector h = x;
  for (const Layer& layer : net.layers()) {
    Vector z = layer.weights * h + layer.bias;
    t.pre.push_back(z);
    activate(layer, z);
    t.post.push_back(z);
    h = std::move(z);
  }
  return t;
}

int predict(const Network& net, const Eigen::Ref<const Vector>& x) {
  Vector out = forward(net, x);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < out.size(); ++i) {
    if (out(i) > out(best)) best = i;
  }
  return static_cast<int>(best);
}

Network make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  auto rng = make_rng(seed, "init");
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    if (dims[l] <= 0 || dims[l - 1] <= 0) throw ConfigError("layer widths must be positive");
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / dims[l - 1]));
    Layer layer;
    layer.weights.resize(dims[l], dims[l - 1]);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = normal(rng);
    }
    layer.bias = Vector::Zero(dims[l]);
    const bool last = l + 1 == dims.size();
    layer.activations.assign(static_cast<std::size_t>(dims[l]), last ? Activation::identity() : Activation::relu());
    layers.push_back(std::move(layer));
  }
  return Network(dims[0], std::move(layers));
}

}  // namespace graftcert
