#include "graftcert/verifier.hpp"

#include <gmpxx.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "graftcert/error.hpp"
#include "graftcert/exact_lp.hpp"
#include "graftcert/parallel.hpp"
#include "graftcert/random.hpp"
#include "json_util.hpp"

namespace graftcert {

using nlohmann::json;

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Verified: return "verified";
    case Verdict::Falsified: return "falsified";
    case Verdict::Unknown: return "unknown";
  }
  return "unknown";
}

Verdict parse_verdict(const std::string& s) {
  if (s == "verified") return Verdict::Verified;
  if (s == "falsified") return Verdict::Falsified;
  if (s == "unknown") return Verdict::Unknown;
  throw ParseError("verdict: unknown value '" + s + "'");
}

Matrix margin_spec(int classes, int label) {
  if (classes < 2) throw ShapeError("margin_spec: need at least two classes");
  if (label < 0 || label >= classes) throw ShapeError("margin_spec: label out of range");
  Matrix C = Matrix::Zero(classes - 1, classes);
  int row = 0;
  for (int r = 0; r < classes; ++r) {
    if (r == label) continue;
    C(row, label) = 1.0;
    C(row, r) = -1.0;
    ++row;
  }
  return C;
}

namespace {

void check_query(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps) {
  if (x.size() != net.input_dim()) throw ShapeError("input dimension mismatch");
  if (label < 0 || label >= net.output_dim()) throw ShapeError("label out of range");
  if (!(eps >= 0.0)) throw ConfigError("eps must be non-negative");
}

// Margin lower bounds (label entry 0) from a bounds cache: the better of the
// backward relaxation of the margin and the interval difference of logits.
std::vector<double> margins_from(const Network& net, const BoundsCache& cache, const Eigen::Ref<const Vector>& x,
                                 double eps, int label, const CrownOptions& options) {
  const int C = net.output_dim();
  const Matrix spec = margin_spec(C, label);
  const Interval lin = concretize(crown_backward(net, cache, &spec, -1, options), x, eps);
  const Interval& logits = cache.logits();
  std::vector<double> out(static_cast<std::size_t>(C), 0.0);
  int row = 0;
  for (int r = 0; r < C; ++r) {
    if (r == label) continue;
    out[static_cast<std::size_t>(r)] = std::max(lin.lower(row), logits.lower(label) - logits.upper(r));
    ++row;
  }
  return out;
}

bool all_positive(const std::vector<double>& m, int label) {
  for (std::size_t r = 0; r < m.size(); ++r) {
    if (static_cast<int>(r) != label && !(m[r] > 0.0)) return false;
  }
  return true;
}

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------
// Affine form of the network on a fixed activation region, in field T.

// Phase of each hidden neuron: +1 passes z, 0 outputs zero, 2 uses the
// neuron's own linear activation.
using Pattern = std::vector<std::vector<int>>;

template <class T>
struct Affine {
  std::vector<std::vector<T>> A;  // d x n
  std::vector<T> b;
};

template <class T>
T to_field(double v) {
  return T(v);
}

// Pre-activation affine maps of layers 0..upto given the pattern of every
// earlier hidden layer.
template <class T>
std::vector<Affine<T>> affine_layers(const Network& net, const Pattern& pattern, std::size_t upto) {
  const auto n = static_cast<std::size_t>(net.input_dim());
  std::vector<std::vector<T>> H(n, std::vector<T>(n, T(0)));
  for (std::size_t i = 0; i < n; ++i) H[i][i] = T(1);
  std::vector<T> hb(n, T(0));
  std::vector<Affine<T>> out;
  for (std::size_t l = 0; l <= upto; ++l) {
    const Layer& layer = net.layer(l);
    const auto d = static_cast<std::size_t>(layer.out_dim());
    const auto in = H.size();
    Affine<T> z;
    z.A.assign(d, std::vector<T>(n, T(0)));
    z.b.assign(d, T(0));
    for (std::size_t r = 0; r < d; ++r) {
      T acc_b = to_field<T>(layer.bias(static_cast<Eigen::Index>(r)));
      for (std::size_t k = 0; k < in; ++k) {
        const double w = layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
        if (w == 0.0) continue;
        const T wt = to_field<T>(w);
        for (std::size_t c = 0; c < n; ++c) z.A[r][c] += wt * H[k][c];
        acc_b += wt * hb[k];
      }
      z.b[r] = acc_b;
    }
    out.push_back(z);
    if (l == upto || l + 1 == net.num_layers()) break;
    H = z.A;
    hb = z.b;
    for (std::size_t r = 0; r < d; ++r) {
      const Activation& a = layer.activations[r];
      const int phase = pattern[l][r];
      if (a.is_grafted()) {
        const T s = to_field<T>(a.slope);
        for (T& v : H[r]) v *= s;
        hb[r] = hb[r] * s + to_field<T>(a.intercept);
      } else if (a.is_relu() && phase == 0) {
        for (T& v : H[r]) v = T(0);
        hb[r] = T(0);
      }
    }
  }
  return out;
}

// LP over y = x' - lo in [0, 2 eps]^n with extra rows.
template <class T>
struct RegionLp {
  std::vector<T> lo;
  T width;
  std::vector<std::vector<T>> rows;
  std::vector<T> rhs;
  T slack{0};

  RegionLp(const Eigen::Ref<const Vector>& x, double eps, T slack_) : width(to_field<T>(eps) * T(2)), slack(slack_) {
    lo.reserve(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) lo.push_back(to_field<T>(x(i)) - to_field<T>(eps));
  }

  T offset(const std::vector<T>& a, const T& b) const {
    T v = b;
    for (std::size_t i = 0; i < a.size(); ++i) v += a[i] * lo[i];
    return v;
  }

  // Constrains a.x' + b >= 0 (active) or <= 0 (inactive).
  void add_sign(const std::vector<T>& a, const T& b, bool active) {
    const T off = offset(a, b);
    std::vector<T> row(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) row[i] = active ? T(-a[i]) : a[i];
    rows.push_back(std::move(row));
    rhs.push_back((active ? off : T(-off)) + slack);
  }

  void pop() {
    rows.pop_back();
    rhs.pop_back();
  }

  lp::Problem<T> problem(const std::vector<T>& c) const {
    lp::Problem<T> p;
    const std::size_t n = lo.size();
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T> row(n, T(0));
      row[i] = T(1);
      p.A.push_back(std::move(row));
      p.b.push_back(width);
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      p.A.push_back(rows[k]);
      p.b.push_back(rhs[k]);
    }
    p.c = c;
    return p;
  }

  bool feasible() const {
    if (rows.empty()) return true;
    return lp::solve(problem(std::vector<T>(lo.size(), T(0)))).status == lp::Status::Optimal;
  }

  // Minimum of a.x' + b over the region, with the minimiser.
  std::optional<std::pair<T, std::vector<T>>> minimise(const std::vector<T>& a, const T& b) const {
    const lp::Solution<T> s = lp::solve(problem(a));
    if (s.status != lp::Status::Optimal) return std::nullopt;
    std::vector<T> point(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) point[i] = lo[i] + s.y[i];
    return std::make_pair(T(s.objective + offset(a, b)), point);
  }
};

template <class T>
double to_double(const T& v) {
  if constexpr (std::is_floating_point_v<T>) return v;
  else return v.get_d();
}

template <class T>
Vector to_vector(const std::vector<T>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = to_double(v[i]);
  return out;
}

template <class T>
std::vector<T> row_difference(const Affine<T>& f, int p, int q) {
  std::vector<T> out(f.A[static_cast<std::size_t>(p)].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f.A[static_cast<std::size_t>(p)][i] - f.A[static_cast<std::size_t>(q)][i];
  }
  return out;
}

Pattern pattern_from_cache(const Network& net, const BoundsCache& cache) {
  Pattern p;
  for (std::size_t l = 0; l < net.num_hidden_layers(); ++l) {
    const Interval& iv = cache.pre[l];
    std::vector<int> row(static_cast<std::size_t>(iv.lower.size()), 1);
    for (Eigen::Index j = 0; j < iv.lower.size(); ++j) {
      const Activation& a = net.layer(l).activations[static_cast<std::size_t>(j)];
      if (!a.is_relu()) row[static_cast<std::size_t>(j)] = 2;
      else row[static_cast<std::size_t>(j)] = iv.upper(j) <= 0.0 ? 0 : 1;
    }
    p.push_back(std::move(row));
  }
  return p;
}

// Exact check of a domain without unstable neurons: the network is affine on
// box intersected with the split half-spaces.
Certificate solve_leaf(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                       const BoundsCache& cache, const std::vector<Split>& splits, const std::vector<double>& margins) {
  constexpr double band = 1e-9;
  Certificate cert;
  const Pattern pattern = pattern_from_cache(net, cache);
  RegionLp<double> region(x, eps, 0.0);
  const auto maps = affine_layers<double>(net, pattern, net.num_layers() - 1);
  for (const Split& s : splits) {
    const Affine<double>& z = maps[static_cast<std::size_t>(s.neuron.layer)];
    region.add_sign(z.A[static_cast<std::size_t>(s.neuron.index)], z.b[static_cast<std::size_t>(s.neuron.index)],
                    s.active);
  }
  const Affine<double>& logits = maps.back();
  bool undecided = false;
  for (int r = 0; r < net.output_dim(); ++r) {
    if (r == label || margins[static_cast<std::size_t>(r)] > 0.0) continue;
    const auto best =
        region.minimise(row_difference(logits, label, r),
                        logits.b[static_cast<std::size_t>(label)] - logits.b[static_cast<std::size_t>(r)]);
    if (!best) {
      cert.verdict = Verdict::Verified;  // empty region
      return cert;
    }
    if (best->first > band) continue;
    const Vector point = to_vector(best->second);
    if (best->first < -band && predict(net, point) != label) {
      cert.verdict = Verdict::Falsified;
      cert.counterexample = point;
      return cert;
    }
    undecided = true;
  }
  cert.verdict = undecided ? Verdict::Unknown : Verdict::Verified;
  return cert;
}

struct Domain {
  std::vector<Split> splits;
  BoundsCache cache;
  std::vector<double> margins;
};

// Bounds of a child domain, tightened by the parent's. Returns false when the
// domain is empty.
bool bound_domain(const Network& net, const Eigen::Ref<const Vector>& x, double eps, int label,
                  const CrownOptions& options, const Domain* parent, Domain& d) {
  d.cache = crown_bounds(net, x, eps, options, d.splits);
  if (d.cache.infeasible) return false;
  if (parent != nullptr) {
    for (std::size_t l = 0; l < d.cache.pre.size(); ++l) {
      Interval& iv = d.cache.pre[l];
      const Interval& pv = parent->cache.pre[l];
      iv.lower = iv.lower.cwiseMax(pv.lower);
      iv.upper = iv.upper.cwiseMin(pv.upper).cwiseMax(iv.lower);
    }
  }
  d.margins = margins_from(net, d.cache, x, eps, label, options);
  if (parent != nullptr) {
    for (std::size_t r = 0; r < d.margins.size(); ++r) d.margins[r] = std::max(d.margins[r], parent->margins[r]);
  }
  return true;
}

// Widest unstable neuron weighted by its influence on the worst margin.
std::optional<NeuronId> branch_neuron(const Network& net, const Domain& d, int label) {
  int worst = -1;
  for (int r = 0; r < static_cast<int>(d.margins.size()); ++r) {
    if (r == label) continue;
    if (worst < 0 || d.margins[static_cast<std::size_t>(r)] < d.margins[static_cast<std::size_t>(worst)]) worst = r;
  }
  const int hidden = static_cast<int>(net.num_hidden_layers());
  std::optional<NeuronId> best;
  double best_score = -1.0;
  for (int l = 0; l < hidden; ++l) {
    const Interval& iv = d.cache.pre[static_cast<std::size_t>(l)];
    const Layer& layer = net.layer(static_cast<std::size_t>(l));
    const Matrix& W = net.layer(static_cast<std::size_t>(l) + 1).weights;
    for (Eigen::Index j = 0; j < iv.lower.size(); ++j) {
      if (!layer.activations[static_cast<std::size_t>(j)].is_relu()) continue;
      if (!(iv.lower(j) < 0.0 && iv.upper(j) > 0.0)) continue;
      const double w = l + 1 == hidden ? std::abs(W(label, j) - W(worst, j)) : W.col(j).cwiseAbs().maxCoeff();
      const double score = (iv.upper(j) - iv.lower(j)) * w;
      if (score > best_score) {
        best_score = score;
        best = NeuronId{l, static_cast<int>(j)};
      }
    }
  }
  return best;
}

}  // namespace

Certificate certify_incomplete(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                               const CrownOptions& options) {
  check_query(net, x, label, eps);
  const auto t0 = Clock::now();
  Certificate cert;
  if (predict(net, x) != label) {
    cert.verdict = Verdict::Falsified;
    cert.counterexample = Vector(x);
    cert.margin_lower.assign(static_cast<std::size_t>(net.output_dim()), 0.0);
    cert.seconds = since(t0);
    return cert;
  }
  const BoundsCache cache = crown_bounds(net, x, eps, options);
  cert.margin_lower = margins_from(net, cache, x, eps, label, options);
  cert.verdict = all_positive(cert.margin_lower, label) ? Verdict::Verified : Verdict::Unknown;
  cert.seconds = since(t0);
  return cert;
}

void BabBudget::validate() const {
  if (max_branches < 1) throw ConfigError("budget.branches must be positive");
  if (!(max_seconds > 0.0)) throw ConfigError("budget.seconds must be positive");
  if (attack.steps < 0 || attack.restarts < 1) throw ConfigError("budget.attack needs steps >= 0 and restarts >= 1");
}

Certificate certify_bab_traced(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                               const BabBudget& budget, BabTrace* trace) {
  check_query(net, x, label, eps);
  budget.validate();
  const auto t0 = Clock::now();
  Certificate cert;
  auto finish = [&](Verdict v) {
    cert.verdict = v;
    cert.seconds = since(t0);
    return cert;
  };
  if (predict(net, x) != label) {
    cert.counterexample = Vector(x);
    cert.margin_lower.assign(static_cast<std::size_t>(net.output_dim()), 0.0);
    return finish(Verdict::Falsified);
  }

  Domain root;
  bound_domain(net, x, eps, label, budget.crown, nullptr, root);
  cert.margin_lower = root.margins;
  if (trace != nullptr) trace->nodes.push_back({root.splits, root.margins, {}});
  if (all_positive(root.margins, label)) return finish(Verdict::Verified);

  if (eps > 0.0) {
    const Vector adv = pgd_attack(net, x, label, eps, budget.attack.steps, budget.attack.step_size,
                                  budget.attack.restarts, substream_seed(budget.seed, "bab.attack"));
    if (predict(net, adv) != label) {
      cert.counterexample = adv;
      return finish(Verdict::Falsified);
    }
  }

  bool unknown_leaf = false;
  std::vector<Domain> stack;
  stack.push_back(std::move(root));
  while (!stack.empty()) {
    Domain d = std::move(stack.back());
    stack.pop_back();
    if (all_positive(d.margins, label)) continue;
    const std::optional<NeuronId> n = branch_neuron(net, d, label);
    if (!n) {
      const Certificate leaf = solve_leaf(net, x, label, eps, d.cache, d.splits, d.margins);
      if (leaf.verdict == Verdict::Falsified) {
        cert.counterexample = leaf.counterexample;
        return finish(Verdict::Falsified);
      }
      if (leaf.verdict == Verdict::Unknown) unknown_leaf = true;
      continue;
    }
    for (bool active : {false, true}) {
      if (cert.branches >= budget.max_branches || since(t0) > budget.max_seconds) return finish(Verdict::Unknown);
      ++cert.branches;
      Domain child;
      child.splits = d.splits;
      child.splits.push_back({*n, active});
      if (!bound_domain(net, x, eps, label, budget.crown, &d, child)) continue;
      if (trace != nullptr) trace->nodes.push_back({child.splits, child.margins, d.margins});
      if (!all_positive(child.margins, label)) stack.push_back(std::move(child));
    }
  }
  return finish(unknown_leaf ? Verdict::Unknown : Verdict::Verified);
}

Certificate certify_bab(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                        const BabBudget& budget) {
  return certify_bab_traced(net, x, label, eps, budget, nullptr);
}

namespace {

template <class T>
struct Enumerator {
  const Network& net;
  int label;
  std::vector<NeuronId> unstable;
  RegionLp<T> region;
  Pattern pattern;

  bool have_min = false;
  T min_margin{};
  std::vector<T> argmin{};
  std::vector<T> out_lo{};
  std::vector<T> out_hi{};
  bool have_range = false;
  std::size_t patterns = 0;

  void leaf() {
    const auto maps = affine_layers<T>(net, pattern, net.num_layers() - 1);
    const Affine<T>& f = maps.back();
    bool any = false;
    for (int r = 0; r < net.output_dim(); ++r) {
      if (r == label) continue;
      const auto best = region.minimise(row_difference(f, label, r),
                                        T(f.b[static_cast<std::size_t>(label)] - f.b[static_cast<std::size_t>(r)]));
      if (!best) return;
      any = true;
      if (!have_min || best->first < min_margin) {
        have_min = true;
        min_margin = best->first;
        argmin = best->second;
      }
    }
    if (!any) return;
    ++patterns;
    const auto C = static_cast<std::size_t>(net.output_dim());
    if (!have_range) {
      out_lo.assign(C, T(0));
      out_hi.assign(C, T(0));
    }
    for (std::size_t k = 0; k < C; ++k) {
      const auto lo = region.minimise(f.A[k], f.b[k]);
      std::vector<T> neg(f.A[k].size());
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -f.A[k][i];
      const auto hi = region.minimise(neg, T(-f.b[k]));
      if (!lo || !hi) continue;
      const T hv = -hi->first;
      if (!have_range || lo->first < out_lo[k]) out_lo[k] = lo->first;
      if (!have_range || hv > out_hi[k]) out_hi[k] = hv;
    }
    have_range = true;
  }

  void dfs(std::size_t k) {
    if (k == unstable.size()) {
      leaf();
      return;
    }
    const NeuronId u = unstable[k];
    const auto maps = affine_layers<T>(net, pattern, static_cast<std::size_t>(u.layer));
    const Affine<T>& z = maps.back();
    for (bool active : {true, false}) {
      pattern[static_cast<std::size_t>(u.layer)][static_cast<std::size_t>(u.index)] = active ? 1 : 0;
      region.add_sign(z.A[static_cast<std::size_t>(u.index)], z.b[static_cast<std::size_t>(u.index)], active);
      if (region.feasible()) dfs(k + 1);
      region.pop();
    }
  }
};

template <class T>
OracleResult run_oracle(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                        const BoundsCache& cache, const std::vector<NeuronId>& unstable, T slack) {
  Enumerator<T> e{net, label, unstable, RegionLp<T>(x, eps, slack), pattern_from_cache(net, cache)};
  e.dfs(0);
  if (!e.have_min) throw NumericError("exhaustive_oracle: no feasible activation pattern");
  OracleResult out;
  out.min_margin = to_double(e.min_margin);
  out.verdict = e.min_margin > T(0) ? Verdict::Verified : Verdict::Falsified;
  out.patterns = e.patterns;
  out.output_range.lower = to_vector(e.out_lo);
  out.output_range.upper = to_vector(e.out_hi);
  if (out.verdict == Verdict::Falsified) out.counterexample = to_vector(e.argmin);
  return out;
}

}  // namespace

OracleResult exhaustive_oracle(const Network& net, const Eigen::Ref<const Vector>& x, int label, double eps,
                               int max_unstable, int exact_width_limit) {
  check_query(net, x, label, eps);
  const BoundsCache cache = ibp(net, x, eps);
  std::vector<NeuronId> unstable;
  for (std::size_t l = 0; l < net.num_hidden_layers(); ++l) {
    const Interval& iv = cache.pre[l];
    for (Eigen::Index j = 0; j < iv.lower.size(); ++j) {
      if (net.layer(l).activations[static_cast<std::size_t>(j)].is_relu() && iv.lower(j) < 0.0 && iv.upper(j) > 0.0) {
        unstable.push_back({static_cast<int>(l), static_cast<int>(j)});
      }
    }
  }
  if (static_cast<int>(unstable.size()) > max_unstable) {
    throw SizeError("exhaustive_oracle: " + std::to_string(unstable.size()) + " unstable neurons exceed the limit of " +
                    std::to_string(max_unstable));
  }
  const auto widths = net.widths();
  const bool exact = std::all_of(widths.begin(), widths.end(), [&](int w) { return w <= exact_width_limit; });
  OracleResult out = exact ? run_oracle<mpq_class>(net, x, label, eps, cache, unstable, mpq_class(0))
                           : run_oracle<double>(net, x, label, eps, cache, unstable, 1e-7);
  out.exact_arithmetic = exact;
  return out;
}

SuiteResult evaluate_suite(const Network& net, const Matrix& inputs, const std::vector<int>& labels, double eps,
                           const SuiteConfig& config) {
  if (inputs.rows() != net.input_dim()) throw ShapeError("evaluate_suite: input dimension mismatch");
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols()) throw ShapeError("evaluate_suite: label count mismatch");
  config.budget.validate();
  const auto n = static_cast<std::size_t>(inputs.cols());
  SuiteResult result;
  result.certificates.resize(n);
  std::vector<int> correct(n, 0), robust(n, 0);
  std::vector<double> unr(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const Vector x = inputs.col(static_cast<Eigen::Index>(i));
    const int y = labels[i];
    unr[i] = neuron_status(net, ibp(net, x, eps)).unr();
    Certificate& cert = result.certificates[i];
    if (predict(net, x) != y) {
      cert.verdict = Verdict::Falsified;
      cert.counterexample = x;
      return;
    }
    correct[i] = 1;
    const std::uint64_t seed = substream_seed(config.seed, "suite." + std::to_string(i));
    if (eps > 0.0) {
      const Vector adv = pgd_attack(net, x, y, eps, config.attack.steps, config.attack.step_size,
                                    config.attack.restarts, seed);
      if (predict(net, adv) != y) {
        cert.verdict = Verdict::Falsified;
        cert.counterexample = adv;
        return;
      }
    }
    robust[i] = 1;
    BabBudget budget = config.budget;
    budget.seed = seed;
    cert = certify_bab(net, x, y, eps, budget);
  });
  SuiteMetrics& m = result.metrics;
  m.samples = static_cast<int>(n);
  int c = 0, r = 0, v = 0, timed = 0;
  double time = 0.0, unr_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c += correct[i];
    unr_sum += unr[i];
    if (!robust[i]) continue;
    const Certificate& cert = result.certificates[i];
    ++timed;
    time += cert.seconds;
    if (cert.verdict == Verdict::Verified) {
      ++v;
      ++r;
    } else if (cert.verdict == Verdict::Unknown) {
      ++m.unknown;
      ++r;
    }
  }
  if (n > 0) {
    const double scale = 100.0 / static_cast<double>(n);
    m.sa = c * scale;
    m.ra = r * scale;
    m.va = v * scale;
    m.unr = unr_sum / static_cast<double>(n);
  }
  m.time_sec = timed == 0 ? 0.0 : time / timed;
  return result;
}

std::string certificate_to_json(const Certificate& cert) {
  json j;
  j["verdict"] = to_string(cert.verdict);
  j["margin_lower"] = cert.margin_lower;
  j["branches"] = cert.branches;
  j["seconds"] = cert.seconds;
  if (cert.counterexample) {
    j["counterexample"] = std::vector<double>(cert.counterexample->data(),
                                              cert.counterexample->data() + cert.counterexample->size());
  }
  return j.dump(2);
}

Certificate certificate_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("certificate: ") + e.what());
  }
  Certificate c;
  c.verdict = parse_verdict(detail::get_string(j, "verdict", "certificate"));
  c.margin_lower = detail::get_real_array(j, "margin_lower", "certificate");
  c.branches = static_cast<int>(detail::get_int(j, "branches", "certificate"));
  c.seconds = detail::get_real(j, "seconds", "certificate");
  if (j.contains("counterexample")) {
    const auto v = detail::get_real_array(j, "counterexample", "certificate");
    c.counterexample = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return c;
}

std::string metrics_to_json(const SuiteMetrics& m) {
  json j;
  j["sa"] = m.sa;
  j["ra"] = m.ra;
  j["va"] = m.va;
  j["unr"] = m.unr;
  j["time_sec"] = m.time_sec;
  j["samples"] = m.samples;
  j["unknown"] = m.unknown;
  return j.dump(2);
}

SuiteMetrics metrics_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("metrics: ") + e.what());
  }
  SuiteMetrics m;
  m.sa = detail::get_real(j, "sa", "metrics");
  m.ra = detail::get_real(j, "ra", "metrics");
  m.va = detail::get_real(j, "va", "metrics");
  m.unr = detail::get_real(j, "unr", "metrics");
  m.time_sec = detail::get_real(j, "time_sec", "metrics");
  m.samples = static_cast<int>(detail::get_int(j, "samples", "metrics"));
  m.unknown = static_cast<int>(detail::get_int(j, "unknown", "metrics"));
  return m;
}

}  // namespace graftcert
