#pragma once

#include <cstddef>
#include <vector>

namespace graftcert::lp {

enum class Status { Optimal, Infeasible, Unbounded };

// minimize c^T y  subject to  A y <= b,  y >= 0.
// Dense two-phase tableau simplex with Bland's rule, templated on the field:
// double (pivot tolerance `tol`) or an exact rational type such as mpq_class
// (tol ignored; comparisons are exact).
template <class T>
struct Problem {
  std::vector<std::vector<T>> A;
  std::vector<T> b;
  std::vector<T> c;
};

template <class T>
struct Solution {
  Status status = Status::Infeasible;
  T objective{};
  std::vector<T> y;
};

template <class T>
Solution<T> solve(const Problem<T>& problem, double tol = 1e-9);

}  // namespace graftcert::lp
