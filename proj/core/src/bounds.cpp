#include "graftcert/bounds.hpp"

#include <algorithm>
#include <string>

#include "graftcert/error.hpp"

namespace graftcert {

NeuronStatus classify(const Activation& act, double lb, double ub) {
  if (!act.is_relu()) return NeuronStatus::Linear;
  if (lb >= 0.0) return NeuronStatus::Active;
  if (ub <= 0.0) return NeuronStatus::Inactive;
  return NeuronStatus::Unstable;
}

ReluRelaxation relax_relu(double lb, double ub, LowerSlope policy) {
  ReluRelaxation r;
  if (lb >= 0.0) {
    r.status = NeuronStatus::Active;
    return r;
  }
  if (ub <= 0.0) {
    r.status = NeuronStatus::Inactive;
    r.upper_slope = 0.0;
    r.lower_slope = 0.0;
    return r;
  }
  r.status = NeuronStatus::Unstable;
  r.upper_slope = ub / (ub - lb);
  r.upper_intercept = -r.upper_slope * lb;
  switch (policy) {
    case LowerSlope::Adaptive: r.lower_slope = (-lb > ub) ? 0.0 : 1.0; break;
    case LowerSlope::Zero: r.lower_slope = 0.0; break;
    case LowerSlope::One: r.lower_slope = 1.0; break;
  }
  return r;
}

namespace {

void check_input(const Network& net, Eigen::Index n, double eps) {
  if (n != net.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(n) + ", network expects " +
                     std::to_string(net.input_dim()));
  }
  if (!(eps >= 0.0)) throw ConfigError("eps must be non-negative");
}

// Post-activation interval of one layer.
void activation_interval(const Layer& layer, const Interval& pre, Vector& lo, Vector& hi) {
  lo = pre.lower;
  hi = pre.upper;
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    const Activation& a = layer.activations[static_cast<std::size_t>(i)];
    switch (a.kind) {
      case Activation::Kind::Relu:
        lo(i) = std::max(lo(i), 0.0);
        hi(i) = std::max(hi(i), 0.0);
        break;
      case Activation::Kind::Grafted: {
        const double p = a.slope * pre.lower(i) + a.intercept;
        const double q = a.slope * pre.upper(i) + a.intercept;
        lo(i) = std::min(p, q);
        hi(i) = std::max(p, q);
        break;
      }
      case Activation::Kind::Identity: break;
    }
  }
}

Interval affine_interval(const Layer& layer, const Vector& lo, const Vector& hi) {
  const Matrix pos = layer.weights.cwiseMax(0.0);
  const Matrix neg = layer.weights.cwiseMin(0.0);
  Interval out;
  out.lower = pos * lo + neg * hi + layer.bias;
  out.upper = pos * hi + neg * lo + layer.bias;
  return out;
}

}  // namespace

bool apply_splits(BoundsCache& cache, int layer, const std::vector<Split>& splits) {
  Interval& iv = cache.pre.at(static_cast<std::size_t>(layer));
  bool ok = true;
  for (const Split& s : splits) {
    if (s.neuron.layer != layer) continue;
    const auto j = static_cast<Eigen::Index>(s.neuron.index);
    if (j < 0 || j >= iv.lower.size()) throw ShapeError("split refers to a neuron outside the layer");
    if (s.active) {
      iv.lower(j) = std::max(iv.lower(j), 0.0);
    } else {
      iv.upper(j) = std::min(iv.upper(j), 0.0);
    }
    if (iv.lower(j) > iv.upper(j)) ok = false;
  }
  return ok;
}

BoundsCache ibp(const Network& net, const Eigen::Ref<const Vector>& x, double eps, const std::vector<Split>& splits) {
  check_input(net, x.size(), eps);
  BoundsCache cache;
  cache.x = x;
  cache.eps = eps;
  Vector lo = x.array() - eps;
  Vector hi = x.array() + eps;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    cache.pre.push_back(affine_interval(layer, lo, hi));
    if (!splits.empty() && !apply_splits(cache, static_cast<int>(l), splits)) {
      cache.infeasible = true;
      Interval& iv = cache.pre.back();
      iv.upper = iv.upper.cwiseMax(iv.lower);
    }
    if (l + 1 < net.num_layers()) activation_interval(layer, cache.pre.back(), lo, hi);
  }
  return cache;
}

namespace {

// Per-neuron factors applied to positive and negative backward coefficients.
struct Relaxed {
  Vector pos_mult, pos_bias, neg_mult, neg_bias;
};

Relaxed relaxation_factors(const Layer& layer, const Interval& pre, bool for_lower, LowerSlope policy) {
  const Eigen::Index n = pre.lower.size();
  Relaxed r{Vector::Ones(n), Vector::Zero(n), Vector::Ones(n), Vector::Zero(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Activation& a = layer.activations[static_cast<std::size_t>(j)];
    switch (a.kind) {
      case Activation::Kind::Identity: break;
      case Activation::Kind::Grafted:
        r.pos_mult(j) = r.neg_mult(j) = a.slope;
        r.pos_bias(j) = r.neg_bias(j) = a.intercept;
        break;
      case Activation::Kind::Relu: {
        const ReluRelaxation rel = relax_relu(pre.lower(j), pre.upper(j), policy);
        if (rel.status == NeuronStatus::Active) break;
        if (rel.status == NeuronStatus::Inactive) {
          r.pos_mult(j) = r.neg_mult(j) = 0.0;
          break;
        }
        // A lower bound takes the lower line where the coefficient is
        // positive and the upper line where it is negative; an upper bound
        // the reverse.
        if (for_lower) {
          r.pos_mult(j) = rel.lower_slope;
          r.neg_mult(j) = rel.upper_slope;
          r.neg_bias(j) = rel.upper_intercept;
        } else {
          r.pos_mult(j) = rel.upper_slope;
          r.pos_bias(j) = rel.upper_intercept;
          r.neg_mult(j) = rel.lower_slope;
        }
        break;
      }
    }
  }
  return r;
}

void backward_pass(const Network& net, const BoundsCache& cache, int target, bool for_lower, LowerSlope policy,
                   Matrix& lambda, Vector& bias) {
  for (int l = target; l >= 0; --l) {
    const Layer& layer = net.layer(static_cast<std::size_t>(l));
    bias += lambda * layer.bias;
    lambda = lambda * layer.weights;
    if (l == 0) break;
    const Layer& prev = net.layer(static_cast<std::size_t>(l - 1));
    const Relaxed r = relaxation_factors(prev, cache.pre[static_cast<std::size_t>(l - 1)], for_lower, policy);
    const Matrix pos = lambda.cwiseMax(0.0);
    const Matrix neg = lambda.cwiseMin(0.0);
    bias += pos * r.pos_bias + neg * r.neg_bias;
    lambda = pos * r.pos_mult.asDiagonal() + neg * r.neg_mult.asDiagonal();
  }
}

}  // namespace

LinearBounds crown_backward(const Network& net, const BoundsCache& intermediate, const Matrix* spec, int target_layer,
                            const CrownOptions& options) {
  const int L = static_cast<int>(net.num_layers());
  const int target = target_layer < 0 ? L - 1 : target_layer;
  if (target >= L) throw ShapeError("crown_backward: target layer out of range");
  if (static_cast<int>(intermediate.pre.size()) < target) throw ShapeError("crown_backward: missing intermediate bounds");
  const Eigen::Index d = net.layer(static_cast<std::size_t>(target)).out_dim();
  Matrix C = spec != nullptr ? *spec : Matrix::Identity(d, d);
  if (C.cols() != d) throw ShapeError("crown_backward: spec columns do not match target width");

  LinearBounds out;
  out.lower_A = C;
  out.lower_b = Vector::Zero(C.rows());
  backward_pass(net, intermediate, target, true, options.lower_slope, out.lower_A, out.lower_b);
  out.upper_A = C;
  out.upper_b = Vector::Zero(C.rows());
  backward_pass(net, intermediate, target, false, options.lower_slope, out.upper_A, out.upper_b);
  return out;
}

Interval concretize(const LinearBounds& bounds, const Eigen::Ref<const Vector>& x, double eps) {
  if (bounds.lower_A.cols() != x.size() || bounds.upper_A.cols() != x.size()) {
    throw ShapeError("concretize: coefficient columns do not match input");
  }
  Interval out;
  out.lower = bounds.lower_A * x + bounds.lower_b - eps * bounds.lower_A.cwiseAbs().rowwise().sum();
  out.upper = bounds.upper_A * x + bounds.upper_b + eps * bounds.upper_A.cwiseAbs().rowwise().sum();
  return out;
}

BoundsCache crown_bounds(const Network& net, const Eigen::Ref<const Vector>& x, double eps, const CrownOptions& options,
                         const std::vector<Split>& splits) {
  BoundsCache cache = ibp(net, x, eps, splits);
  if (cache.infeasible) return cache;
  const int L = static_cast<int>(net.num_layers());
  const int first = options.refine_intermediate ? 1 : L - 1;
  for (int l = std::max(first, 1); l < L; ++l) {
    const Interval refined = concretize(crown_backward(net, cache, nullptr, l, options), x, eps);
    Interval& iv = cache.pre[static_cast<std::size_t>(l)];
    iv.lower = iv.lower.cwiseMax(refined.lower);
    iv.upper = iv.upper.cwiseMin(refined.upper);
    // Floating-point rounding can cross the two sources by an ulp.
    iv.upper = iv.upper.cwiseMax(iv.lower);
    if (!splits.empty() && !apply_splits(cache, l, splits)) {
      cache.infeasible = true;
      return cache;
    }
  }
  return cache;
}

StatusReport neuron_status(const Network& net, const BoundsCache& cache) {
  StatusReport rep;
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    const Interval& iv = cache.pre.at(l);
    std::vector<NeuronStatus> st;
    for (Eigen::Index j = 0; j < iv.lower.size(); ++j) {
      const NeuronStatus s = classify(layer.activations[static_cast<std::size_t>(j)], iv.lower(j), iv.upper(j));
      if (s == NeuronStatus::Unstable) ++rep.unstable;
      st.push_back(s);
    }
    rep.total += static_cast<int>(st.size());
    rep.status.push_back(std::move(st));
  }
  return rep;
}

}  // namespace graftcert
