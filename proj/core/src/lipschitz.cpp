#include "graftcert/lipschitz.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "graftcert/error.hpp"
#include "graftcert/random.hpp"

namespace graftcert {

LipschitzBound interval_lipschitz(const Network& net, const Eigen::Ref<const Vector>& x, double eps, LipWidth mode) {
  if (!(eps > 0.0)) throw ConfigError("interval_lipschitz: eps must be positive");
  if (x.size() != net.input_dim()) throw ShapeError("interval_lipschitz: input dimension mismatch");
  Vector lo = x.array() - eps;
  Vector hi = x.array() + eps;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    const Matrix pos = layer.weights.cwiseMax(0.0);
    const Matrix neg = layer.weights.cwiseMin(0.0);
    Vector zl = pos * lo + neg * hi + layer.bias;
    Vector zu = pos * hi + neg * lo + layer.bias;
    if (l + 1 == net.num_layers()) {
      LipschitzBound out;
      out.per_output = (zu - zl) / (2.0 * eps);
      out.max = out.per_output.maxCoeff();
      return out;
    }
    for (Eigen::Index j = 0; j < zl.size(); ++j) {
      const Activation& a = layer.activations[static_cast<std::size_t>(j)];
      switch (a.kind) {
        case Activation::Kind::Relu:
          if (zu(j) <= 0.0) {
            zl(j) = zu(j) = 0.0;
          } else if (mode == LipWidth::Post) {
            zl(j) = std::max(zl(j), 0.0);
          }
          break;
        case Activation::Kind::Grafted: {
          const double p = a.slope * zl(j) + a.intercept;
          const double q = a.slope * zu(j) + a.intercept;
          zl(j) = std::min(p, q);
          zu(j) = std::max(p, q);
          break;
        }
        case Activation::Kind::Identity: break;
      }
    }
    lo = std::move(zl);
    hi = std::move(zu);
  }
  return {};
}

Matrix local_jacobian(const Network& net, const Eigen::Ref<const Vector>& x) {
  if (x.size() != net.input_dim()) throw ShapeError("local_jacobian: input dimension mismatch");
  Matrix J = Matrix::Identity(net.input_dim(), net.input_dim());
  Vector h = x;
  for (const Layer& layer : net.layers()) {
    Vector z = layer.weights * h + layer.bias;
    J = layer.weights * J;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const Activation& a = layer.activations[static_cast<std::size_t>(j)];
      double d = 1.0;
      if (a.is_relu()) d = z(j) > 0.0 ? 1.0 : 0.0;
      if (a.is_grafted()) d = a.slope;
      J.row(j) *= d;
      z(j) = a.apply(z(j));
    }
    h = std::move(z);
  }
  return J;
}

double sampled_lipschitz_lower(const Network& net, const Eigen::Ref<const Vector>& x, double eps, int n_pairs,
                               std::uint64_t seed) {
  if (n_pairs < 1) throw ConfigError("sampled_lipschitz_lower: n_pairs must be >= 1");
  if (!(eps > 0.0)) return local_jacobian(net, x).cwiseAbs().rowwise().sum().maxCoeff();
  auto rng = make_rng(seed, "lipschitz");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto draw = [&] {
    Vector p(x.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = x(i) + eps * unit(rng);
    return p;
  };
  double best = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    const Vector a = draw();
    const Vector b = draw();
    const double dx = (a - b).cwiseAbs().maxCoeff();
    if (dx > 0.0) best = std::max(best, (forward(net, a) - forward(net, b)).cwiseAbs().maxCoeff() / dx);
    best = std::max(best, local_jacobian(net, a).cwiseAbs().rowwise().sum().maxCoeff());
  }
  return best;
}

LipschitzEstimate estimate_lipschitz(const Network& net, const Eigen::Ref<const Vector>& x, double eps, int n_pairs,
                                     std::uint64_t seed, LipWidth mode) {
  LipschitzEstimate e;
  e.upper = interval_lipschitz(net, x, eps, mode).max;
  e.lower = sampled_lipschitz_lower(net, x, eps, n_pairs, seed);
  e.x = x;
  e.eps = eps;
  return e;
}

}  // namespace graftcert
