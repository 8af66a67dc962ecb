#include "graftcert/graft_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "graftcert/error.hpp"
#include "graftcert/parallel.hpp"

namespace graftcert {

ScoreAccumulator::ScoreAccumulator(const Network& net) {
  for (std::size_t l = 0; l < net.num_hidden_layers(); ++l) {
    const auto d = static_cast<std::size_t>(net.layer(l).out_dim());
    instability_.emplace_back(d, 0);
    max_width_.emplace_back(d, 0.0);
  }
}

void ScoreAccumulator::add(const BoundsCache& bounds) {
  if (bounds.pre.size() < instability_.size()) throw ShapeError("ScoreAccumulator: bounds have too few layers");
  for (std::size_t l = 0; l < instability_.size(); ++l) {
    const Interval& iv = bounds.pre[l];
    if (static_cast<std::size_t>(iv.lower.size()) != instability_[l].size()) {
      throw ShapeError("ScoreAccumulator: layer " + std::to_string(l) + " width mismatch");
    }
    for (std::size_t j = 0; j < instability_[l].size(); ++j) {
      const double lb = iv.lower(static_cast<Eigen::Index>(j));
      const double ub = iv.upper(static_cast<Eigen::Index>(j));
      if (lb < 0.0 && ub > 0.0) ++instability_[l][j];
      max_width_[l][j] = std::max(max_width_[l][j], ub - lb);
    }
  }
  ++samples_;
}

void ScoreAccumulator::merge(const ScoreAccumulator& other) {
  if (other.instability_.size() != instability_.size()) throw ShapeError("ScoreAccumulator: merge shape mismatch");
  for (std::size_t l = 0; l < instability_.size(); ++l) {
    if (other.instability_[l].size() != instability_[l].size()) {
      throw ShapeError("ScoreAccumulator: merge shape mismatch");
    }
    for (std::size_t j = 0; j < instability_[l].size(); ++j) {
      instability_[l][j] += other.instability_[l][j];
      max_width_[l][j] = std::max(max_width_[l][j], other.max_width_[l][j]);
    }
  }
  samples_ += other.samples_;
}

std::vector<BoundsCache> calibration_bounds(const Network& net, const Matrix& inputs, double eps,
                                            ScoreBounds source) {
  if (inputs.rows() != net.input_dim()) throw ShapeError("calibration_bounds: input dimension mismatch");
  std::vector<BoundsCache> out(static_cast<std::size_t>(inputs.cols()));
  parallel_for(out.size(), [&](std::size_t i) {
    const Vector x = inputs.col(static_cast<Eigen::Index>(i));
    out[i] = source == ScoreBounds::Ibp ? ibp(net, x, eps)
                                        : crown_bounds(net, x, eps, CrownOptions{LowerSlope::Adaptive, true});
  });
  return out;
}

namespace {

ScoreAccumulator accumulate(const Network& net, const Matrix& inputs, double eps, ScoreBounds source) {
  if (inputs.cols() == 0) throw ConfigError("calibration set is empty");
  ScoreAccumulator acc(net);
  for (const BoundsCache& b : calibration_bounds(net, inputs, eps, source)) acc.add(b);
  return acc;
}

}  // namespace

std::vector<std::vector<int>> instability_score(const Network& net, const Matrix& inputs, double eps) {
  return accumulate(net, inputs, eps, ScoreBounds::Ibp).instability();
}

std::vector<double> weighted_interval_score(const Network& net, const ScoreAccumulator& acc, int layer,
                                            const std::vector<int>& selected_next) {
  const int hidden = static_cast<int>(net.num_hidden_layers());
  if (layer < 0 || layer >= hidden) {
    throw ConfigError("weighted_interval_score: layer " + std::to_string(layer) + " is not a hidden layer");
  }
  if (selected_next.empty()) throw ConfigError("weighted_interval_score: selected_next is empty");
  const Matrix& W = net.layer(static_cast<std::size_t>(layer + 1)).weights;
  const auto& width = acc.max_width().at(static_cast<std::size_t>(layer));
  std::vector<double> out(width.size(), 0.0);
  for (std::size_t j = 0; j < out.size(); ++j) {
    double w = 0.0;
    for (int k : selected_next) {
      if (k < 0 || k >= W.rows()) throw ConfigError("weighted_interval_score: selected index out of range");
      w = std::max(w, std::abs(W(k, static_cast<Eigen::Index>(j))));
    }
    out[j] = w * width[j];
  }
  return out;
}

std::vector<double> weighted_interval_score(const Network& net, const Matrix& inputs, double eps, int layer,
                                            const std::vector<int>& selected_next) {
  return weighted_interval_score(net, accumulate(net, inputs, eps, ScoreBounds::Ibp), layer, selected_next);
}

void SelectionConfig::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string("selection.") + name + " must lie in (0, 1]");
  };
  check(pool, "pool");
  check(influential, "influential");
  check(last_retain, "last_retain");
  check(graft_ratio, "graft_ratio");
}

namespace {

// Indices of `candidates` ordered by descending score, ties to the lower index.
template <typename Score>
std::vector<int> rank(std::vector<int> candidates, const std::vector<Score>& score) {
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    const auto sa = score[static_cast<std::size_t>(a)];
    const auto sb = score[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  return candidates;
}

}  // namespace

GraftSet backward_select(const Network& net, const ScoreAccumulator& scores, const SelectionConfig& config) {
  config.validate();
  const int hidden = static_cast<int>(net.num_hidden_layers());
  if (hidden < 2) throw ConfigError("backward_select needs at least two hidden layers");
  const auto& su = scores.instability();

  // Network-wide candidate pool.
  std::vector<NeuronId> all;
  for (int l = 0; l < hidden; ++l) {
    for (int j = 0; j < static_cast<int>(su[static_cast<std::size_t>(l)].size()); ++j) all.push_back({l, j});
  }
  auto score_of = [&](NeuronId n) { return su[static_cast<std::size_t>(n.layer)][static_cast<std::size_t>(n.index)]; };
  std::stable_sort(all.begin(), all.end(), [&](NeuronId a, NeuronId b) {
    return score_of(a) != score_of(b) ? score_of(a) > score_of(b) : a < b;
  });
  const auto pool_size = static_cast<std::size_t>(std::floor(config.pool * static_cast<double>(all.size())));
  std::vector<std::vector<int>> pool(static_cast<std::size_t>(hidden));
  for (std::size_t i = 0; i < std::min(pool_size, all.size()); ++i) {
    if (score_of(all[i]) <= 0) break;
    pool[static_cast<std::size_t>(all[i].layer)].push_back(all[i].index);
  }
  for (auto& p : pool) std::sort(p.begin(), p.end());

  std::vector<std::vector<int>> chosen(static_cast<std::size_t>(hidden));
  {
    const int last = hidden - 1;
    const auto& layer_su = su[static_cast<std::size_t>(last)];
    std::vector<int> sel = pool[static_cast<std::size_t>(last)];
    if (!sel.empty() && (sel.size() == layer_su.size() || config.always_retain)) {
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(config.last_retain * static_cast<double>(sel.size()))));
      sel = rank(sel, layer_su);
      sel.resize(std::min(keep, sel.size()));
      std::sort(sel.begin(), sel.end());
    }
    chosen[static_cast<std::size_t>(last)] = sel;
  }

  for (int l = hidden - 2; l >= 0; --l) {
    const auto& layer_su = su[static_cast<std::size_t>(l)];
    const auto d = layer_su.size();
    const auto& candidates = pool[static_cast<std::size_t>(l)];
    std::vector<int> sel;
    if (!candidates.empty()) {
      const std::size_t n_inf =
          std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(config.influential * static_cast<double>(d))));
      const auto& next = chosen[static_cast<std::size_t>(l + 1)];
      std::vector<int> ranked = next.empty() ? rank(candidates, layer_su)
                                             : rank(candidates, weighted_interval_score(net, scores, l, next));
      ranked.resize(std::min(n_inf, ranked.size()));
      sel = ranked;
    }
    const auto budget = static_cast<std::size_t>(std::floor(config.graft_ratio * static_cast<double>(d)));
    if (sel.size() < budget) {
      std::vector<int> unstable;
      for (int j = 0; j < static_cast<int>(d); ++j) {
        if (layer_su[static_cast<std::size_t>(j)] > 0 && std::find(sel.begin(), sel.end(), j) == sel.end()) {
          unstable.push_back(j);
        }
      }
      for (int j : rank(unstable, layer_su)) {
        if (sel.size() >= budget) break;
        sel.push_back(j);
      }
    }
    std::sort(sel.begin(), sel.end());
    chosen[static_cast<std::size_t>(l)] = sel;
  }

  GraftSet out;
  for (int l = 0; l < hidden; ++l) {
    for (int j : chosen[static_cast<std::size_t>(l)]) out.insert(l, j, 0.4, 0.0);
  }
  return out;
}

GraftSet backward_select(const Network& net, const Matrix& inputs, double eps, const SelectionConfig& config) {
  config.validate();
  return backward_select(net, accumulate(net, inputs, eps, config.bounds), config);
}

ScoreTable score_table(const Network& net, const ScoreAccumulator& scores, const GraftSet& selection) {
  ScoreTable t;
  t.instability = scores.instability();
  t.calibration_size = scores.calibration_size();
  const int hidden = static_cast<int>(net.num_hidden_layers());
  for (int l = 0; l < hidden; ++l) {
    const auto d = scores.max_width()[static_cast<std::size_t>(l)].size();
    auto it = selection.layers.find(l + 1);
    if (l + 1 < hidden && it != selection.layers.end() && !it->second.indices.empty()) {
      t.weighted_interval.push_back(weighted_interval_score(net, scores, l, it->second.indices));
    } else {
      t.weighted_interval.emplace_back(d, 0.0);
    }
  }
  return t;
}

namespace {

void check_target(const Network& net, int layer, int index) {
  if (layer < 0 || layer >= static_cast<int>(net.num_layers())) {
    throw ValidationError("graft set refers to missing layer " + std::to_string(layer));
  }
  const Layer& L = net.layer(static_cast<std::size_t>(layer));
  if (index < 0 || index >= L.out_dim()) {
    throw ValidationError("graft set index " + std::to_string(index) + " out of range in layer " +
                          std::to_string(layer));
  }
  if (L.activations[static_cast<std::size_t>(index)].is_identity()) {
    throw ValidationError("cannot graft identity neuron " + std::to_string(layer) + ":" + std::to_string(index));
  }
}

}  // namespace

Network apply_graft(const Network& net, const GraftSet& set, double init_slope, double init_intercept) {
  std::vector<Layer> layers = net.layers();
  for (const auto& [l, entry] : set.layers) {
    for (int j : entry.indices) {
      check_target(net, l, j);
      layers[static_cast<std::size_t>(l)].activations[static_cast<std::size_t>(j)] =
          Activation::grafted(init_slope, init_intercept);
    }
  }
  return Network(net.input_dim(), std::move(layers));
}

Network apply_graft_parameters(const Network& net, const GraftSet& set) {
  std::vector<Layer> layers = net.layers();
  for (const auto& [l, entry] : set.layers) {
    if (entry.slopes.size() != entry.indices.size() || entry.intercepts.size() != entry.indices.size()) {
      throw ValidationError("graft set layer " + std::to_string(l) + ": parameter arrays differ in length");
    }
    for (std::size_t i = 0; i < entry.indices.size(); ++i) {
      const int j = entry.indices[i];
      check_target(net, l, j);
      layers[static_cast<std::size_t>(l)].activations[static_cast<std::size_t>(j)] =
          Activation::grafted(entry.slopes[i], entry.intercepts[i]);
    }
  }
  return Network(net.input_dim(), std::move(layers));
}

GraftSet grafted_neurons(const Network& net) {
  GraftSet out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& acts = net.layer(l).activations;
    for (std::size_t j = 0; j < acts.size(); ++j) {
      if (acts[j].is_grafted()) out.insert(static_cast<int>(l), static_cast<int>(j), acts[j].slope, acts[j].intercept);
    }
  }
  return out;
}

Network zero_outgoing(const Network& net, const GraftSet& set) {
  std::vector<Layer> layers = net.layers();
  for (const auto& [l, entry] : set.layers) {
    for (int j : entry.indices) {
      check_target(net, l, j);
      layers[static_cast<std::size_t>(l) + 1].weights.col(j).setZero();
    }
  }
  return Network(net.input_dim(), std::move(layers));
}

}  // namespace graftcert
