#include "graftcert/autodiff.hpp"

#include <cmath>
#include <string>

#include "graftcert/error.hpp"

namespace graftcert {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Tape::Var Tape::push(std::string_view op, Matrix value, bool requires_grad, Pullback pullback) {
  if (!value.allFinite()) {
    throw NumericError("tape node #" + std::to_string(nodes_.size()) + " (" + std::string(op) +
                       ") produced a non-finite value");
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.op = op;
  if (requires_grad) node.pullback = std::move(pullback);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

bool Tape::any_grad(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (nodes_.at(v.id).requires_grad) return true;
  }
  return false;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.adjoint.size() == 0) {
    n.adjoint = g;
  } else {
    n.adjoint += g;
  }
}

Tape::Var Tape::constant(Matrix value) { return push("constant", std::move(value), false, nullptr); }

Tape::Var Tape::variable(Matrix value) {
  return push("variable", std::move(value), true, [](Tape&, std::size_t) {});
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("scalar(): node is not 1x1");
  return m(0, 0);
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.adjoint.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::backward(Var root) {
  const Matrix& r = value(root);
  if (r.rows() != 1 || r.cols() != 1) throw ShapeError("backward(): root must be a 1x1 node");
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  if (!nodes_[root.id].requires_grad) return;
  nodes_[root.id].adjoint = Matrix::Ones(1, 1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.adjoint.size() == 0 || !n.pullback) continue;
    n.pullback(*this, i);
    if (!n.adjoint.allFinite()) {
      throw NumericError("tape node #" + std::to_string(i) + " (" + std::string(n.op) + ") has a non-finite gradient");
    }
  }
}

Tape::Var Tape::affine(Var w, Var h, Var b) {
  const Matrix& W = value(w);
  const Matrix& H = value(h);
  const Matrix& B = value(b);
  if (W.cols() != H.rows() || B.rows() != W.rows() || B.cols() != 1) throw ShapeError("affine: shape mismatch");
  Matrix z = W * H;
  z.colwise() += B.col(0);
  return push("affine", std::move(z), any_grad({w, h, b}), [w, h, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(w)) t.accumulate(w.id, g * t.value(h).transpose());
    if (t.requires_grad(h)) t.accumulate(h.id, t.value(w).transpose() * g);
    if (t.requires_grad(b)) t.accumulate(b.id, g.rowwise().sum());
  });
}

Tape::Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ShapeError("matmul: inner dimensions differ");
  return push("matmul", value(a) * value(b), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(a)) t.accumulate(a.id, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b.id, t.value(a).transpose() * g);
  });
}

Tape::Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push("add", value(a) + value(b), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.adjoint(self));
    t.accumulate(b.id, t.adjoint(self));
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push("sub", value(a) - value(b), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.adjoint(self));
    t.accumulate(b.id, -t.adjoint(self));
  });
}

Tape::Var Tape::cmul(Var a, Var b) {
  require_same_shape(value(a), value(b), "cmul");
  return push("cmul", value(a).cwiseProduct(value(b)), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(a)) t.accumulate(a.id, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b.id, g.cwiseProduct(t.value(a)));
  });
}

Tape::Var Tape::cdiv(Var a, Var b) {
  require_same_shape(value(a), value(b), "cdiv");
  return push("cdiv", value(a).cwiseQuotient(value(b)), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& B = t.value(b);
    if (t.requires_grad(a)) t.accumulate(a.id, g.cwiseQuotient(B));
    if (t.requires_grad(b)) {
      t.accumulate(b.id, -g.cwiseProduct(t.value(a)).cwiseQuotient(B.cwiseProduct(B)));
    }
  });
}

Tape::Var Tape::scale(Var a, double alpha) {
  return push("scale", alpha * value(a), any_grad({a}),
              [a, alpha](Tape& t, std::size_t self) { t.accumulate(a.id, alpha * t.adjoint(self)); });
}

Tape::Var Tape::add_scalar(Var a, double alpha) {
  Matrix v = value(a).array() + alpha;
  return push("add_scalar", std::move(v), any_grad({a}),
              [a](Tape& t, std::size_t self) { t.accumulate(a.id, t.adjoint(self)); });
}

Tape::Var Tape::relu(Var a) {
  Matrix v = value(a).cwiseMax(0.0);
  return push("relu", std::move(v), any_grad({a}), [a](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.adjoint(self).cwiseProduct(
                           t.value(a).unaryExpr([](double z) { return subgradient_policy::relu(z); })));
  });
}

Tape::Var Tape::maximum(Var a, Var b) {
  require_same_shape(value(a), value(b), "maximum");
  Matrix v = value(a).cwiseMax(value(b));
  return push("maximum", std::move(v), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    Matrix ga = Matrix::Zero(g.rows(), g.cols());
    Matrix gb = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (subgradient_policy::max_takes_first(A(i), B(i))) {
        ga(i) = g(i);
      } else {
        gb(i) = g(i);
      }
    }
    t.accumulate(a.id, ga);
    t.accumulate(b.id, gb);
  });
}

Tape::Var Tape::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  Matrix v = value(a).cwiseMin(value(b));
  return push("minimum", std::move(v), any_grad({a, b}), [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    Matrix ga = Matrix::Zero(g.rows(), g.cols());
    Matrix gb = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (subgradient_policy::min_takes_first(A(i), B(i))) {
        ga(i) = g(i);
      } else {
        gb(i) = g(i);
      }
    }
    t.accumulate(a.id, ga);
    t.accumulate(b.id, gb);
  });
}

Tape::Var Tape::abs(Var a) {
  return push("abs", value(a).cwiseAbs(), any_grad({a}), [a](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.adjoint(self).cwiseProduct(
                           t.value(a).unaryExpr([](double x) { return subgradient_policy::abs(x); })));
  });
}

Tape::Var Tape::tanh(Var a) {
  Matrix v = value(a).array().tanh().matrix();
  return push("tanh", std::move(v), any_grad({a}), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{self});
    t.accumulate(a.id, t.adjoint(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Tape::Var Tape::square(Var a) {
  return push("square", value(a).array().square().matrix(), any_grad({a}), [a](Tape& t, std::size_t self) {
    t.accumulate(a.id, 2.0 * t.adjoint(self).cwiseProduct(t.value(a)));
  });
}

Tape::Var Tape::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = value(a).sum();
  return push("sum", std::move(v), any_grad({a}), [a](Tape& t, std::size_t self) {
    const Matrix& A = t.value(a);
    t.accumulate(a.id, Matrix::Constant(A.rows(), A.cols(), t.adjoint(self)(0, 0)));
  });
}

Tape::Var Tape::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  if (n == 0) throw ShapeError("mean: empty node");
  return scale(sum(a), 1.0 / n);
}

Tape::Var Tape::gather(Var a, const std::vector<std::pair<int, int>>& entries) {
  const Matrix& A = value(a);
  Matrix v(static_cast<Eigen::Index>(entries.size()), 1);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto [r, c] = entries[k];
    if (r < 0 || c < 0 || r >= A.rows() || c >= A.cols()) throw ShapeError("gather: entry out of range");
    v(static_cast<Eigen::Index>(k), 0) = A(r, c);
  }
  return push("gather", std::move(v), any_grad({a}), [a, entries](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    const Matrix& A = t.value(a);
    Matrix ga = Matrix::Zero(A.rows(), A.cols());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      ga(entries[k].first, entries[k].second) += g(static_cast<Eigen::Index>(k), 0);
    }
    t.accumulate(a.id, ga);
  });
}

Tape::Var Tape::activation(Var z, const std::vector<Activation>& kinds, Var slopes, Var intercepts) {
  const Matrix& Z = value(z);
  if (static_cast<Eigen::Index>(kinds.size()) != Z.rows() || value(slopes).rows() != Z.rows() ||
      value(intercepts).rows() != Z.rows()) {
    throw ShapeError("activation: row count mismatch");
  }
  const Matrix& S = value(slopes);
  const Matrix& C = value(intercepts);
  Matrix h = Z;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    switch (kinds[static_cast<std::size_t>(i)].kind) {
      case Activation::Kind::Relu: h.row(i) = Z.row(i).cwiseMax(0.0); break;
      case Activation::Kind::Grafted: h.row(i) = (S(i, 0) * Z.row(i).array() + C(i, 0)).matrix(); break;
      case Activation::Kind::Identity: break;
    }
  }
  return push("activation", std::move(h), any_grad({z, slopes, intercepts}),
              [z, slopes, intercepts, kinds](Tape& t, std::size_t self) {
                const Matrix& g = t.adjoint(self);
                const Matrix& Z = t.value(z);
                const Matrix& S = t.value(slopes);
                Matrix gz = Matrix::Zero(Z.rows(), Z.cols());
                Matrix gs = Matrix::Zero(S.rows(), 1);
                Matrix gc = Matrix::Zero(S.rows(), 1);
                for (Eigen::Index i = 0; i < Z.rows(); ++i) {
                  switch (kinds[static_cast<std::size_t>(i)].kind) {
                    case Activation::Kind::Relu:
                      for (Eigen::Index c = 0; c < Z.cols(); ++c) gz(i, c) = g(i, c) * subgradient_policy::relu(Z(i, c));
                      break;
                    case Activation::Kind::Grafted:
                      gz.row(i) = S(i, 0) * g.row(i);
                      gs(i, 0) = g.row(i).dot(Z.row(i));
                      gc(i, 0) = g.row(i).sum();
                      break;
                    case Activation::Kind::Identity: gz.row(i) = g.row(i); break;
                  }
                }
                t.accumulate(z.id, gz);
                t.accumulate(slopes.id, gs);
                t.accumulate(intercepts.id, gc);
              });
}

std::pair<Tape::Var, Tape::Var> Tape::interval_affine(Var w, Var lo, Var hi, Var b) {
  const Matrix& W = value(w);
  const Matrix& L = value(lo);
  const Matrix& H = value(hi);
  const Matrix& B = value(b);
  if (W.cols() != L.rows() || L.rows() != H.rows() || L.cols() != H.cols() || B.rows() != W.rows() || B.cols() != 1) {
    throw ShapeError("interval_affine: shape mismatch");
  }
  // Sign split frozen at the forward value: w >= 0 is treated as positive.
  const Matrix pos = W.cwiseMax(0.0);
  const Matrix neg = W.cwiseMin(0.0);
  Matrix lower = pos * L + neg * H;
  Matrix upper = pos * H + neg * L;
  lower.colwise() += B.col(0);
  upper.colwise() += B.col(0);
  const bool rg = any_grad({w, lo, hi, b});
  auto pull = [w, lo, hi, b](bool is_lower) {
    return [w, lo, hi, b, is_lower](Tape& t, std::size_t self) {
      const Matrix& g = t.adjoint(self);
      const Matrix& W = t.value(w);
      const Matrix& first = is_lower ? t.value(lo) : t.value(hi);   // multiplies W+
      const Matrix& second = is_lower ? t.value(hi) : t.value(lo);  // multiplies W-
      if (t.requires_grad(w)) {
        Matrix gp = g * first.transpose();
        Matrix gn = g * second.transpose();
        Matrix gw(W.rows(), W.cols());
        for (Eigen::Index i = 0; i < W.size(); ++i) gw(i) = W(i) >= 0.0 ? gp(i) : gn(i);
        t.accumulate(w.id, gw);
      }
      const Matrix pos = W.cwiseMax(0.0);
      const Matrix neg = W.cwiseMin(0.0);
      const Var first_var = is_lower ? lo : hi;
      const Var second_var = is_lower ? hi : lo;
      if (t.requires_grad(first_var)) t.accumulate(first_var.id, pos.transpose() * g);
      if (t.requires_grad(second_var)) t.accumulate(second_var.id, neg.transpose() * g);
      if (t.requires_grad(b)) t.accumulate(b.id, g.rowwise().sum());
    };
  };
  Var vl = push("interval_affine.lower", std::move(lower), rg, pull(true));
  Var vu = push("interval_affine.upper", std::move(upper), rg, pull(false));
  return {vl, vu};
}

std::pair<Tape::Var, Tape::Var> Tape::interval_activation(Var lo, Var hi, const std::vector<Activation>& kinds,
                                                          Var slopes, Var intercepts) {
  const Matrix& L = value(lo);
  const Matrix& H = value(hi);
  if (static_cast<Eigen::Index>(kinds.size()) != L.rows() || L.rows() != H.rows() || L.cols() != H.cols()) {
    throw ShapeError("interval_activation: shape mismatch");
  }
  const Matrix& S = value(slopes);
  const Matrix& C = value(intercepts);
  Matrix out_lo = L;
  Matrix out_hi = H;
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    switch (kinds[static_cast<std::size_t>(i)].kind) {
      case Activation::Kind::Relu:
        out_lo.row(i) = L.row(i).cwiseMax(0.0);
        out_hi.row(i) = H.row(i).cwiseMax(0.0);
        break;
      case Activation::Kind::Grafted: {
        const double s = S(i, 0);
        const double c = C(i, 0);
        const auto& first = s >= 0.0 ? L : H;
        const auto& second = s >= 0.0 ? H : L;
        out_lo.row(i) = (s * first.row(i).array() + c).matrix();
        out_hi.row(i) = (s * second.row(i).array() + c).matrix();
        break;
      }
      case Activation::Kind::Identity: break;
    }
  }
  const bool rg = any_grad({lo, hi, slopes, intercepts});
  auto pull = [lo, hi, slopes, intercepts, kinds](bool is_lower) {
    return [lo, hi, slopes, intercepts, kinds, is_lower](Tape& t, std::size_t self) {
      const Matrix& g = t.adjoint(self);
      const Matrix& L = t.value(lo);
      const Matrix& H = t.value(hi);
      const Matrix& S = t.value(slopes);
      Matrix gl = Matrix::Zero(L.rows(), L.cols());
      Matrix gh = Matrix::Zero(L.rows(), L.cols());
      Matrix gs = Matrix::Zero(S.rows(), 1);
      Matrix gc = Matrix::Zero(S.rows(), 1);
      for (Eigen::Index i = 0; i < L.rows(); ++i) {
        switch (kinds[static_cast<std::size_t>(i)].kind) {
          case Activation::Kind::Relu: {
            const Matrix& src = is_lower ? L : H;
            Matrix& dst = is_lower ? gl : gh;
            for (Eigen::Index c = 0; c < L.cols(); ++c) dst(i, c) = g(i, c) * subgradient_policy::relu(src(i, c));
            break;
          }
          case Activation::Kind::Grafted: {
            const double s = S(i, 0);
            // lower endpoint reads lo when s >= 0, hi otherwise; upper the reverse.
            const bool reads_lo = (s >= 0.0) == is_lower;
            const Matrix& src = reads_lo ? L : H;
            Matrix& dst = reads_lo ? gl : gh;
            dst.row(i) = s * g.row(i);
            gs(i, 0) = g.row(i).dot(src.row(i));
            gc(i, 0) = g.row(i).sum();
            break;
          }
          case Activation::Kind::Identity:
            (is_lower ? gl : gh).row(i) = g.row(i);
            break;
        }
      }
      t.accumulate(lo.id, gl);
      t.accumulate(hi.id, gh);
      t.accumulate(slopes.id, gs);
      t.accumulate(intercepts.id, gc);
    };
  };
  Var vl = push("interval_activation.lower", std::move(out_lo), rg, pull(true));
  Var vu = push("interval_activation.upper", std::move(out_hi), rg, pull(false));
  return {vl, vu};
}

Tape::Var Tape::cross_entropy(Var logits, const std::vector<int>& labels) {
  const Matrix& Z = value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != Z.cols()) throw ShapeError("cross_entropy: label count mismatch");
  if (Z.cols() == 0) throw ShapeError("cross_entropy: empty batch");
  Matrix probs(Z.rows(), Z.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    if (y < 0 || y >= Z.rows()) throw ShapeError("cross_entropy: label out of range");
    const double m = Z.col(c).maxCoeff();
    const Vector e = (Z.col(c).array() - m).exp();
    const double s = e.sum();
    probs.col(c) = e / s;
    total += (m + std::log(s)) - Z(y, c);
  }
  Matrix v(1, 1);
  v(0, 0) = total / static_cast<double>(Z.cols());
  return push("cross_entropy", std::move(v), any_grad({logits}),
              [logits, labels, probs](Tape& t, std::size_t self) {
                Matrix g = probs;
                for (Eigen::Index c = 0; c < g.cols(); ++c) g(labels[static_cast<std::size_t>(c)], c) -= 1.0;
                g *= t.adjoint(self)(0, 0) / static_cast<double>(g.cols());
                t.accumulate(logits.id, g);
              });
}

// ----------------------------------------------------------------------------

ParamGrad ParamGrad::zeros_like(const Network& net) {
  ParamGrad g;
  for (const Layer& layer : net.layers()) {
    LayerGrad lg;
    lg.weights = Matrix::Zero(layer.weights.rows(), layer.weights.cols());
    lg.bias = Vector::Zero(layer.bias.size());
    lg.slopes = Vector::Zero(layer.bias.size());
    lg.intercepts = Vector::Zero(layer.bias.size());
    g.layers.push_back(std::move(lg));
  }
  return g;
}

ParamGrad& ParamGrad::operator+=(const ParamGrad& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("ParamGrad: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights += other.layers[l].weights;
    layers[l].bias += other.layers[l].bias;
    layers[l].slopes += other.layers[l].slopes;
    layers[l].intercepts += other.layers[l].intercepts;
  }
  return *this;
}

ParamGrad& ParamGrad::operator*=(double alpha) {
  for (auto& l : layers) {
    l.weights *= alpha;
    l.bias *= alpha;
    l.slopes *= alpha;
    l.intercepts *= alpha;
  }
  return *this;
}

bool ParamGrad::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weights.allFinite() || !l.bias.allFinite() || !l.slopes.allFinite() || !l.intercepts.allFinite()) {
      return false;
    }
  }
  return true;
}

ParamVars bind_parameters(Tape& tape, const Network& net, bool trainable) {
  ParamVars p;
  for (const Layer& layer : net.layers()) {
    Matrix slopes(layer.bias.size(), 1);
    Matrix intercepts(layer.bias.size(), 1);
    for (std::size_t i = 0; i < layer.activations.size(); ++i) {
      slopes(static_cast<Eigen::Index>(i), 0) = layer.activations[i].slope;
      intercepts(static_cast<Eigen::Index>(i), 0) = layer.activations[i].intercept;
    }
    Matrix bias = layer.bias;
    auto leaf = [&](Matrix m) { return trainable ? tape.variable(std::move(m)) : tape.constant(std::move(m)); };
    LayerVars lv;
    lv.weights = leaf(layer.weights);
    lv.bias = leaf(std::move(bias));
    lv.slopes = leaf(std::move(slopes));
    lv.intercepts = leaf(std::move(intercepts));
    p.layers.push_back(lv);
  }
  return p;
}

ParamGrad collect_gradients(const Tape& tape, const Network& net, const ParamVars& params) {
  ParamGrad g = ParamGrad::zeros_like(net);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerVars& lv = params.layers[l];
    g.layers[l].weights = tape.grad(lv.weights);
    g.layers[l].bias = tape.grad(lv.bias).col(0);
    g.layers[l].slopes = tape.grad(lv.slopes).col(0);
    g.layers[l].intercepts = tape.grad(lv.intercepts).col(0);
  }
  return g;
}

Tape::Var tape_forward(Tape& tape, const Network& net, const ParamVars& params, Tape::Var inputs) {
  Tape::Var h = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const LayerVars& lv = params.layers[l];
    Tape::Var z = tape.affine(lv.weights, h, lv.bias);
    h = tape.activation(z, net.layer(l).activations, lv.slopes, lv.intercepts);
  }
  return h;
}

std::vector<IntervalVars> tape_ibp(Tape& tape, const Network& net, const ParamVars& params, Tape::Var lo,
                                   Tape::Var hi) {
  std::vector<IntervalVars> out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const LayerVars& lv = params.layers[l];
    auto [zl, zu] = tape.interval_affine(lv.weights, lo, hi, lv.bias);
    out.push_back({zl, zu});
    if (l + 1 == net.num_layers()) break;
    auto [hl, hu] = tape.interval_activation(zl, zu, net.layer(l).activations, lv.slopes, lv.intercepts);
    lo = hl;
    hi = hu;
  }
  return out;
}

GradResult grad(const LossFn& loss_fn, const Network& net, const Batch& batch) {
  if (batch.inputs.cols() == 0) throw ShapeError("grad: empty batch");
  Tape tape;
  ParamVars params = bind_parameters(tape, net, true);
  Tape::Var loss = loss_fn(tape, net, params, batch);
  tape.backward(loss);
  GradResult r;
  r.loss = tape.scalar(loss);
  r.grad = collect_gradients(tape, net, params);
  return r;
}

std::vector<double> flatten_parameters(const Network& net) {
  std::vector<double> flat;
  for (const Layer& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) flat.push_back(layer.weights(r, c));
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) flat.push_back(layer.bias(i));
    for (const auto& a : layer.activations) flat.push_back(a.slope);
    for (const auto& a : layer.activations) flat.push_back(a.intercept);
  }
  return flat;
}

Network with_parameters(const Network& net, const std::vector<double>& flat) {
  Network out = net;
  std::size_t k = 0;
  auto next = [&]() {
    if (k >= flat.size()) throw ShapeError("with_parameters: flat vector too short");
    return flat[k++];
  };
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    Layer& layer = out.mutable_layer(l);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = next();
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = next();
    for (auto& a : layer.activations) a.slope = next();
    for (auto& a : layer.activations) a.intercept = next();
  }
  if (k != flat.size()) throw ShapeError("with_parameters: flat vector too long");
  return out;
}

std::vector<double> flatten_gradient(const ParamGrad& g) {
  std::vector<double> flat;
  for (const LayerGrad& lg : g.layers) {
    for (Eigen::Index r = 0; r < lg.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < lg.weights.cols(); ++c) flat.push_back(lg.weights(r, c));
    }
    for (Eigen::Index i = 0; i < lg.bias.size(); ++i) flat.push_back(lg.bias(i));
    for (Eigen::Index i = 0; i < lg.slopes.size(); ++i) flat.push_back(lg.slopes(i));
    for (Eigen::Index i = 0; i < lg.intercepts.size(); ++i) flat.push_back(lg.intercepts(i));
  }
  return flat;
}

}  // namespace graftcert
