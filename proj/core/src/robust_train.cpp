#include "graftcert/robust_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <limits>
#include <string_view>
#include <tuple>

#include "graftcert/error.hpp"
#include "graftcert/lipschitz.hpp"
#include "graftcert/model_io.hpp"
#include "graftcert/random.hpp"

namespace graftcert {

SlopeLossKind parse_slope_loss_kind(const std::string& name) {
  if (name == "verbatim") return SlopeLossKind::Verbatim;
  if (name == "symmetric") return SlopeLossKind::Symmetric;
  if (name == "off") return SlopeLossKind::Off;
  throw ConfigError("unknown slope loss '" + name + "' (expected verbatim, symmetric or off)");
}

std::string to_string(SlopeLossKind kind) {
  switch (kind) {
    case SlopeLossKind::Verbatim: return "verbatim";
    case SlopeLossKind::Symmetric: return "symmetric";
    case SlopeLossKind::Off: return "off";
  }
  return "verbatim";
}

double LrSchedule::at(int epoch) const {
  double lr = base;
  for (int d : decay_epochs) {
    if (epoch >= d) lr *= factor;
  }
  return lr;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("train.") + name + " must be positive");
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0)) throw ConfigError(std::string("train.") + name + " must be non-negative");
  };
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  positive(lr.base, "lr");
  positive(lr.factor, "lr_factor");
  positive(lr_graft, "lr_graft");
  positive(slope_k, "slope_k");
  positive(slope_cap, "slope_cap");
  non_negative(weight_decay, "weight_decay");
  non_negative(lambda_slope, "lambda_slope");
  non_negative(lambda_l1, "lambda_l1");
  non_negative(eps_train, "eps_train");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) throw ConfigError("train.prune_ratio must lie in [0, 1)");
  if (pgd.steps < 0) throw ConfigError("train.pgd.steps must be non-negative");
  if (pgd.restarts < 1) throw ConfigError("train.pgd.restarts must be >= 1");
  non_negative(pgd.step_size, "pgd.step_size");
  if (monitor_size < 0) throw ConfigError("train.monitor_size must be non-negative");
}

double slope_loss_value(double s, double k, SlopeLossKind kind) {
  switch (kind) {
    case SlopeLossKind::Verbatim: return 1.0 - std::tanh(k * (1.0 - s) * (1.0 - s));
    case SlopeLossKind::Symmetric: return 1.0 - std::tanh(4.0 * k * (s - 0.5) * (s - 0.5));
    case SlopeLossKind::Off: return 0.0;
  }
  return 0.0;
}

double slope_loss(const Network& net, const BoundsCache& bounds, double k, SlopeLossKind kind) {
  if (kind == SlopeLossKind::Off) return 0.0;
  if (!(k > 0.0)) throw ConfigError("slope_loss: k must be positive");
  double total = 0.0;
  int count = 0;
  for (std::size_t l = 0; l < net.num_hidden_layers(); ++l) {
    const Layer& layer = net.layer(l);
    const Interval& iv = bounds.pre.at(l);
    for (std::size_t j = 0; j < layer.activations.size(); ++j) {
      const Activation& a = layer.activations[j];
      const auto e = static_cast<Eigen::Index>(j);
      if (a.is_grafted()) {
        total += slope_loss_value(a.slope, k, kind);
        ++count;
      } else if (a.is_relu() && iv.lower(e) < 0.0 && iv.upper(e) > 0.0) {
        total += slope_loss_value(iv.upper(e) / (iv.upper(e) - iv.lower(e)), k, kind);
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : total / count;
}

Tape::Var tape_slope_loss(Tape& tape, const Network& net, const ParamVars& params,
                          const std::vector<IntervalVars>& bounds, double k, SlopeLossKind kind) {
  if (kind == SlopeLossKind::Off) return tape.constant(Matrix::Zero(1, 1));
  if (!(k > 0.0)) throw ConfigError("slope_loss: k must be positive");
  std::vector<Tape::Var> parts;
  std::size_t count = 0;
  for (std::size_t l = 0; l < net.num_hidden_layers(); ++l) {
    const Layer& layer = net.layer(l);
    const Matrix& lo = tape.value(bounds.at(l).lower);
    const Matrix& hi = tape.value(bounds.at(l).upper);
    std::vector<std::pair<int, int>> unstable;
    std::vector<std::pair<int, int>> grafted;
    for (Eigen::Index j = 0; j < lo.rows(); ++j) {
      const Activation& a = layer.activations[static_cast<std::size_t>(j)];
      for (Eigen::Index b = 0; b < lo.cols(); ++b) {
        if (a.is_grafted()) {
          grafted.emplace_back(static_cast<int>(j), 0);
        } else if (a.is_relu() && lo(j, b) < 0.0 && hi(j, b) > 0.0) {
          unstable.emplace_back(static_cast<int>(j), static_cast<int>(b));
        }
      }
    }
    if (!unstable.empty()) {
      const Tape::Var ub = tape.gather(bounds[l].upper, unstable);
      const Tape::Var lb = tape.gather(bounds[l].lower, unstable);
      parts.push_back(tape.cdiv(ub, tape.sub(ub, lb)));
      count += unstable.size();
    }
    if (!grafted.empty()) {
      parts.push_back(tape.gather(params.layers[l].slopes, grafted));
      count += grafted.size();
    }
  }
  if (count == 0) return tape.constant(Matrix::Zero(1, 1));
  Tape::Var total = tape.constant(Matrix::Zero(1, 1));
  for (Tape::Var s : parts) {
    Tape::Var q = kind == SlopeLossKind::Verbatim ? tape.scale(tape.square(tape.add_scalar(tape.scale(s, -1.0), 1.0)), k)
                                                   : tape.scale(tape.square(tape.add_scalar(s, -0.5)), 4.0 * k);
    Tape::Var term = tape.add_scalar(tape.scale(tape.tanh(q), -1.0), 1.0);
    total = tape.add(total, tape.sum(term));
  }
  return tape.scale(total, 1.0 / static_cast<double>(count));
}

double l1_reg(const Network& net) {
  double s = 0.0;
  for (const Layer& layer : net.layers()) s += layer.weights.cwiseAbs().sum();
  return s;
}

Tape::Var tape_l1(Tape& tape, const ParamVars& params) {
  Tape::Var total = tape.constant(Matrix::Zero(1, 1));
  for (const LayerVars& lv : params.layers) total = tape.add(total, tape.sum(tape.abs(lv.weights)));
  return total;
}

Network small_weight_prune(const Network& net, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("prune ratio must lie in [0, 1)");
  std::vector<std::tuple<double, int, Eigen::Index, Eigen::Index>> all;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& W = net.layer(l).weights;
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) all.emplace_back(std::abs(W(r, c)), static_cast<int>(l), r, c);
    }
  }
  std::vector<Layer> layers = net.layers();
  if (ratio == 0.0) return net;
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(all.size())));
  std::sort(all.begin(), all.end());
  for (Layer& layer : layers) {
    if (!layer.has_mask()) layer.weight_mask = Matrix::Ones(layer.weights.rows(), layer.weights.cols());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [mag, l, r, c] = all[i];
    layers[static_cast<std::size_t>(l)].weights(r, c) = 0.0;
    layers[static_cast<std::size_t>(l)].weight_mask(r, c) = 0.0;
  }
  return Network(net.input_dim(), std::move(layers));
}

namespace {

// Per-column cross-entropy and its gradient with respect to the inputs.
std::pair<Vector, Matrix> input_gradient(const Network& net, const Matrix& X, const std::vector<int>& labels) {
  std::vector<Matrix> pre;
  Matrix h = X;
  for (const Layer& layer : net.layers()) {
    Matrix z = layer.weights * h;
    z.colwise() += layer.bias;
    pre.push_back(z);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Activation& a = layer.activations[static_cast<std::size_t>(i)];
      for (Eigen::Index c = 0; c < z.cols(); ++c) z(i, c) = a.apply(z(i, c));
    }
    h = std::move(z);
  }
  Vector loss(X.cols());
  Matrix g(h.rows(), h.cols());
  for (Eigen::Index c = 0; c < h.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    const double m = h.col(c).maxCoeff();
    const Vector e = (h.col(c).array() - m).exp();
    const double s = e.sum();
    loss(c) = m + std::log(s) - h(y, c);
    g.col(c) = e / s;
    g(y, c) -= 1.0;
  }
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const Layer& layer = net.layer(l);
    const Matrix& z = pre[l];
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Activation& a = layer.activations[static_cast<std::size_t>(i)];
      if (a.is_relu()) {
        for (Eigen::Index c = 0; c < z.cols(); ++c) g(i, c) *= subgradient_policy::relu(z(i, c));
      } else if (a.is_grafted()) {
        g.row(i) *= a.slope;
      }
    }
    g = layer.weights.transpose() * g;
  }
  return {loss, g};
}

}  // namespace

Matrix pgd_attack_batch(const Network& net, const Matrix& inputs, const std::vector<int>& labels, double eps,
                        const PgdConfig& pgd, std::uint64_t seed) {
  if (inputs.rows() != net.input_dim()) throw ShapeError("pgd_attack: input dimension mismatch");
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols()) throw ShapeError("pgd_attack: label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= net.output_dim()) throw ShapeError("pgd_attack: label out of range");
  }
  if (!(eps > 0.0) || inputs.cols() == 0) return inputs;
  const double alpha = pgd.step_size > 0.0 ? pgd.step_size : 2.5 * eps / std::max(1, pgd.steps);
  Matrix lo = (inputs.array() - eps).cwiseMax(0.0);
  Matrix hi = (inputs.array() + eps).cwiseMin(1.0);
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo(i) > hi(i)) lo(i) = hi(i) = inputs(i);
  }
  auto rng = make_rng(seed, "pgd");
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix best = inputs;
  Vector best_loss = Vector::Constant(inputs.cols(), -std::numeric_limits<double>::infinity());
  auto record = [&](const Matrix& X, const Vector& loss) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      if (loss(c) > best_loss(c)) {
        best_loss(c) = loss(c);
        best.col(c) = X.col(c);
      }
    }
  };
  for (int r = 0; r < std::max(1, pgd.restarts); ++r) {
    Matrix X = inputs.cwiseMax(lo).cwiseMin(hi);
    if (r > 0) {
      for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
    }
    for (int s = 0;; ++s) {
      auto [loss, g] = input_gradient(net, X, labels);
      record(X, loss);
      if (s == pgd.steps) break;
      X = (X.array() + alpha * g.array().sign()).matrix().cwiseMax(lo).cwiseMin(hi);
    }
  }
  return best;
}

Vector pgd_attack(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps, int steps,
                  double step_size, int restarts, std::uint64_t seed) {
  Matrix X = x;
  return pgd_attack_batch(net, X, {label}, eps, PgdConfig{steps, step_size, restarts}, seed).col(0);
}

LossTerms parse_loss_terms(const std::string& names, const TrainConfig& cfg) {
  LossTerms t;
  t.cross_entropy = false;
  t.slope_k = cfg.slope_k;
  t.slope_kind = cfg.slope_kind;
  t.bounds_eps = cfg.eps_train;
  std::stringstream in(names);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "adv_ce") {
      t.cross_entropy = true;
    } else if (item == "slope") {
      t.lambda_slope = cfg.lambda_slope;
    } else if (item == "l1") {
      t.lambda_l1 = cfg.lambda_l1;
    } else {
      throw ConfigError("unknown loss term '" + item + "' (expected adv_ce, slope or l1)");
    }
  }
  return t;
}

LossFn make_loss(const LossTerms& terms, const Matrix& clean_inputs) {
  return [terms, clean_inputs](Tape& tape, const Network& net, const ParamVars& params, const Batch& batch) {
    Tape::Var total = tape.constant(Matrix::Zero(1, 1));
    if (terms.cross_entropy) {
      const Tape::Var x = tape.constant(batch.inputs);
      total = tape.add(total, tape.cross_entropy(tape_forward(tape, net, params, x), batch.labels));
    }
    if (terms.lambda_slope > 0.0 && terms.slope_kind != SlopeLossKind::Off) {
      const Matrix& clean = clean_inputs.size() != 0 ? clean_inputs : batch.inputs;
      const Tape::Var lo = tape.constant((clean.array() - terms.bounds_eps).matrix());
      const Tape::Var hi = tape.constant((clean.array() + terms.bounds_eps).matrix());
      const auto bounds = tape_ibp(tape, net, params, lo, hi);
      total = tape.add(total, tape.scale(tape_slope_loss(tape, net, params, bounds, terms.slope_k, terms.slope_kind),
                                         terms.lambda_slope));
    }
    if (terms.lambda_l1 > 0.0) total = tape.add(total, tape.scale(tape_l1(tape, params), terms.lambda_l1));
    return total;
  };
}

GradResult total_loss(const Network& net, const Batch& batch, const TrainConfig& cfg, std::uint64_t seed) {
  const Matrix adv = pgd_attack_batch(net, batch.inputs, batch.labels, cfg.eps_train, cfg.pgd, seed);
  const LossTerms terms = parse_loss_terms("adv_ce,slope,l1", cfg);
  return grad(make_loss(terms, batch.inputs), net, Batch{adv, batch.labels});
}

namespace {

struct Momentum {
  std::vector<LayerGrad> v;
};

void sgd_step(Network& net, const ParamGrad& g, Momentum& m, double lr, double lr_graft, const TrainConfig& cfg,
              bool train_graft) {
  if (m.v.empty()) m.v = ParamGrad::zeros_like(net).layers;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Layer& layer = net.mutable_layer(l);
    const LayerGrad& gl = g.layers[l];
    LayerGrad& vl = m.v[l];
    Matrix gw = gl.weights + cfg.weight_decay * layer.weights;
    if (layer.has_mask()) gw = gw.cwiseProduct(layer.weight_mask);
    vl.weights = cfg.momentum * vl.weights + gw;
    layer.weights -= lr * vl.weights;
    if (layer.has_mask()) layer.weights = layer.weights.cwiseProduct(layer.weight_mask);
    vl.bias = cfg.momentum * vl.bias + gl.bias + cfg.weight_decay * layer.bias;
    layer.bias -= lr * vl.bias;
    if (!train_graft) continue;
    for (std::size_t j = 0; j < layer.activations.size(); ++j) {
      Activation& a = layer.activations[j];
      if (!a.is_grafted()) continue;
      const auto e = static_cast<Eigen::Index>(j);
      vl.slopes(e) = cfg.momentum * vl.slopes(e) + gl.slopes(e);
      vl.intercepts(e) = cfg.momentum * vl.intercepts(e) + gl.intercepts(e);
      a.slope = std::clamp(a.slope - lr_graft * vl.slopes(e), -cfg.slope_cap, cfg.slope_cap);
      a.intercept -= lr_graft * vl.intercepts(e);
    }
  }
}

EpochLog monitor(const Network& net, const TrainData& data, const TrainConfig& cfg, int epoch, double loss) {
  EpochLog log;
  log.epoch = epoch;
  log.loss = loss;
  const Eigen::Index n = std::min<Eigen::Index>(data.inputs.cols(), cfg.monitor_size);
  if (n == 0) return log;
  int correct = 0;
  double unr = 0.0;
  double lip = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = data.inputs.col(i);
    if (predict(net, x) == data.labels[static_cast<std::size_t>(i)]) ++correct;
    if (cfg.eps_train > 0.0) {
      unr += neuron_status(net, ibp(net, x, cfg.eps_train)).unr();
      lip += interval_lipschitz(net, x, cfg.eps_train).max;
    }
  }
  log.sa = 100.0 * correct / static_cast<double>(n);
  log.unr = unr / static_cast<double>(n);
  log.lip = lip / static_cast<double>(n);
  return log;
}

bool finite(const Network& net) {
  for (const Layer& layer : net.layers()) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
    for (const Activation& a : layer.activations) {
      if (!std::isfinite(a.slope) || !std::isfinite(a.intercept)) return false;
    }
  }
  return true;
}

TrainResult train_loop(const Network& start, const TrainData& data, const TrainConfig& cfg, const LossTerms& terms,
                       bool train_graft, std::string_view stream) {
  cfg.validate();
  if (data.inputs.rows() != start.input_dim()) throw ShapeError("training data dimension mismatch");
  if (static_cast<Eigen::Index>(data.labels.size()) != data.inputs.cols()) {
    throw ShapeError("training data label count mismatch");
  }
  TrainResult result;
  result.net = start;
  if (cfg.epochs == 0 || data.inputs.cols() == 0) return result;
  Network net = start;
  Momentum mom;
  std::vector<std::size_t> order(static_cast<std::size_t>(data.inputs.cols()));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Network good = net;
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(cfg.seed, std::string(stream) + ".shuffle." + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr.at(epoch);
    const double lr_graft = cfg.lr_graft * (lr / cfg.lr.base);
    double loss_sum = 0.0;
    int batches = 0;
    bool ok = true;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      Batch batch;
      batch.inputs.resize(data.inputs.rows(), static_cast<Eigen::Index>(end - begin));
      for (std::size_t i = begin; i < end; ++i) {
        batch.inputs.col(static_cast<Eigen::Index>(i - begin)) = data.inputs.col(static_cast<Eigen::Index>(order[i]));
        batch.labels.push_back(data.labels[order[i]]);
      }
      const std::uint64_t pgd_seed = substream_seed(
          cfg.seed, std::string(stream) + ".pgd." + std::to_string(epoch) + "." + std::to_string(batches));
      try {
        const Matrix adv = pgd_attack_batch(net, batch.inputs, batch.labels, cfg.eps_train, cfg.pgd, pgd_seed);
        const GradResult gr = grad(make_loss(terms, batch.inputs), net, Batch{adv, batch.labels});
        if (!std::isfinite(gr.loss) || !gr.grad.all_finite()) {
          ok = false;
          break;
        }
        sgd_step(net, gr.grad, mom, lr, lr_graft, cfg, train_graft);
        if (!finite(net)) {
          ok = false;
          break;
        }
        loss_sum += gr.loss;
      } catch (const NumericError&) {
        ok = false;
        break;
      }
      ++batches;
    }
    if (!ok) {
      result.net = good;
      result.diverged = true;
      result.message = "loss became non-finite in epoch " + std::to_string(epoch) + "; kept the previous epoch";
      return result;
    }
    result.log.push_back(monitor(net, data, cfg, epoch, batches == 0 ? 0.0 : loss_sum / batches));
  }
  result.net = std::move(net);
  return result;
}

}  // namespace

TrainResult adversarial_train(const Network& net, const TrainData& data, const TrainConfig& cfg) {
  return train_loop(net, data, cfg, parse_loss_terms("adv_ce", cfg), false, "train");
}

TrainResult finetune(const Network& net, const TrainData& data, const TrainConfig& cfg) {
  return train_loop(net, data, cfg, parse_loss_terms("adv_ce,slope,l1", cfg), true, "finetune");
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,sa,unr,lip\n";
  for (const EpochLog& e : log) {
    out += std::to_string(e.epoch) + "," + format_real(e.loss) + "," + format_real(e.sa) + "," + format_real(e.unr) +
           "," + format_real(e.lip) + "\n";
  }
  return out;
}

}  // namespace graftcert
