#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "graftcert/bounds.hpp"
#include "graftcert/exact_lp.hpp"
#include "graftcert/graft_select.hpp"
#include "graftcert/lipschitz.hpp"
#include "graftcert/network.hpp"
#include "graftcert/verifier.hpp"

namespace {

using namespace graftcert;

Network net_of_width(int width, int inputs = 16) { return make_mlp({inputs, width, width, 10}, 7); }

Vector point(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(dim);
  for (int i = 0; i < dim; ++i) x(i) = u(rng);
  return x;
}

void BM_Ibp(benchmark::State& state) {
  const Network net = net_of_width(static_cast<int>(state.range(0)));
  const Vector x = point(16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ibp(net, x, 0.05));
}
BENCHMARK(BM_Ibp)->Arg(16)->Arg(64)->Arg(256);

void BM_Crown(benchmark::State& state) {
  const Network net = net_of_width(static_cast<int>(state.range(0)));
  const Vector x = point(16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(crown_bounds(net, x, 0.05));
}
BENCHMARK(BM_Crown)->Arg(16)->Arg(64)->Arg(256);

void BM_IntervalLipschitz(benchmark::State& state) {
  const Network net = net_of_width(static_cast<int>(state.range(0)));
  const Vector x = point(16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(interval_lipschitz(net, x, 0.05));
}
BENCHMARK(BM_IntervalLipschitz)->Arg(16)->Arg(64)->Arg(256);

void BM_BackwardSelect(benchmark::State& state) {
  const Network net = net_of_width(32);
  const auto n = static_cast<int>(state.range(0));
  Matrix inputs(16, n);
  for (int k = 0; k < n; ++k) inputs.col(k) = point(16, static_cast<std::uint64_t>(k));
  for (auto _ : state) benchmark::DoNotOptimize(backward_select(net, inputs, 0.05));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_BackwardSelect)->Arg(100)->Arg(500);

void BM_CertifyBab(benchmark::State& state) {
  const Network net = make_mlp({2, 16, 16, 2}, 3);
  const Vector x = point(2, 5);
  const int label = predict(net, x);
  BabBudget budget;
  budget.max_branches = 500;
  budget.max_seconds = 5.0;
  const double eps = static_cast<double>(state.range(0)) / 1000.0;
  for (auto _ : state) benchmark::DoNotOptimize(certify_bab(net, x, label, eps, budget));
}
BENCHMARK(BM_CertifyBab)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

// Random feasible LP: A >= 0 with b > 0 so y = 0 is feasible, and a negative
// cost so the optimum lies on the boundary.
lp::Problem<double> random_lp(int rows, int cols) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  lp::Problem<double> p;
  p.A.assign(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
  for (auto& row : p.A) {
    for (auto& a : row) a = u(rng);
  }
  p.b.resize(static_cast<std::size_t>(rows));
  for (auto& b : p.b) b = u(rng) * cols;
  p.c.resize(static_cast<std::size_t>(cols));
  for (auto& c : p.c) c = -u(rng);
  return p;
}

void BM_LpSolve(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const lp::Problem<double> p = random_lp(2 * n, n);
  for (auto _ : state) benchmark::DoNotOptimize(lp::solve(p));
}
BENCHMARK(BM_LpSolve)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
