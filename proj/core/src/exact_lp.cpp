#include "graftcert/exact_lp.hpp"

#include <gmpxx.h>

#include <cmath>
#include <type_traits>

#include "graftcert/error.hpp"

namespace graftcert::lp {

namespace {

template <class T>
struct Field {
  double tol;
  bool negative(const T& v) const {
    if constexpr (std::is_floating_point_v<T>) return v < -tol;
    else return sgn(v) < 0;
  }
  bool positive(const T& v) const {
    if constexpr (std::is_floating_point_v<T>) return v > tol;
    else return sgn(v) > 0;
  }
  bool zero(const T& v) const { return !negative(v) && !positive(v); }
  bool less(const T& a, const T& b) const {
    if constexpr (std::is_floating_point_v<T>) return a < b - tol;
    else return a < b;
  }
};

template <class T>
class Tableau {
 public:
  Tableau(const Problem<T>& p, Field<T> f) : f_(f), m_(p.b.size()), n_(p.c.size()) {
    for (const auto& row : p.A) {
      if (row.size() != n_) throw ShapeError("lp: constraint row length differs from objective length");
    }
    if (p.A.size() != m_) throw ShapeError("lp: row count differs from rhs length");
    std::size_t artificial = 0;
    for (const T& bi : p.b) artificial += f_.negative(bi) ? 1 : 0;
    cols_ = n_ + m_ + artificial;
    rows_.assign(m_, std::vector<T>(cols_ + 1, T(0)));
    basis_.assign(m_, 0);
    std::size_t a = n_ + m_;
    for (std::size_t i = 0; i < m_; ++i) {
      const bool flip = f_.negative(p.b[i]);
      auto& r = rows_[i];
      for (std::size_t j = 0; j < n_; ++j) r[j] = flip ? T(-p.A[i][j]) : p.A[i][j];
      r[n_ + i] = flip ? T(-1) : T(1);
      r[cols_] = flip ? T(-p.b[i]) : p.b[i];
      if (flip) {
        r[a] = T(1);
        basis_[i] = a++;
      } else {
        basis_[i] = n_ + i;
      }
    }
  }

  Solution<T> run(const std::vector<T>& c) {
    Solution<T> out;
    if (cols_ > n_ + m_) {
      std::vector<T> phase1(cols_, T(0));
      for (std::size_t j = n_ + m_; j < cols_; ++j) phase1[j] = T(1);
      set_objective(phase1);
      if (!optimise(cols_)) throw NumericError("lp: phase one reported unbounded");
      if (f_.positive(T(-obj_[cols_]))) {
        out.status = Status::Infeasible;
        return out;
      }
      evict_artificials();
    }
    std::vector<T> full(cols_, T(0));
    for (std::size_t j = 0; j < n_; ++j) full[j] = c[j];
    set_objective(full);
    if (!optimise(n_ + m_)) {
      out.status = Status::Unbounded;
      return out;
    }
    out.status = Status::Optimal;
    out.objective = -obj_[cols_];
    out.y.assign(n_, T(0));
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < n_) out.y[basis_[i]] = rows_[i][cols_];
    }
    return out;
  }

 private:
  void set_objective(const std::vector<T>& c) {
    obj_.assign(cols_ + 1, T(0));
    for (std::size_t j = 0; j < cols_; ++j) obj_[j] = c[j];
    for (std::size_t i = 0; i < m_; ++i) {
      const T cb = c[basis_[i]];
      if (cb == T(0)) continue;
      for (std::size_t j = 0; j <= cols_; ++j) obj_[j] -= cb * rows_[i][j];
    }
  }

  void pivot(std::size_t r, std::size_t e) {
    const T p = rows_[r][e];
    for (T& v : rows_[r]) v /= p;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      const T factor = rows_[i][e];
      if (factor == T(0)) continue;
      for (std::size_t j = 0; j <= cols_; ++j) rows_[i][j] -= factor * rows_[r][j];
    }
    const T factor = obj_[e];
    if (factor != T(0)) {
      for (std::size_t j = 0; j <= cols_; ++j) obj_[j] -= factor * rows_[r][j];
    }
    basis_[r] = e;
  }

  // Bland's rule over columns [0, allowed). Returns false when unbounded.
  bool optimise(std::size_t allowed) {
    for (;;) {
      std::size_t e = allowed;
      for (std::size_t j = 0; j < allowed; ++j) {
        if (f_.negative(obj_[j])) {
          e = j;
          break;
        }
      }
      if (e == allowed) return true;
      std::size_t r = m_;
      T best{};
      for (std::size_t i = 0; i < m_; ++i) {
        if (!f_.positive(rows_[i][e])) continue;
        const T ratio = rows_[i][cols_] / rows_[i][e];
        if (r == m_ || f_.less(ratio, best) || (!f_.less(best, ratio) && basis_[i] < basis_[r])) {
          r = i;
          best = ratio;
        }
      }
      if (r == m_) return false;
      pivot(r, e);
    }
  }

  void evict_artificials() {
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < n_ + m_) continue;
      for (std::size_t j = 0; j < n_ + m_; ++j) {
        if (!f_.zero(rows_[i][j])) {
          pivot(i, j);
          break;
        }
      }
    }
  }

  Field<T> f_;
  std::size_t m_;
  std::size_t n_;
  std::size_t cols_ = 0;
  std::vector<std::vector<T>> rows_;
  std::vector<T> obj_;
  std::vector<std::size_t> basis_;
};

}  // namespace

template <class T>
Solution<T> solve(const Problem<T>& problem, double tol) {
  Tableau<T> t(problem, Field<T>{tol});
  return t.run(problem.c);
}

template Solution<double> solve<double>(const Problem<double>&, double);
template Solution<mpq_class> solve<mpq_class>(const Problem<mpq_class>&, double);

}  // namespace graftcert::lp
