#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "stochdual/la.hpp"

namespace stochdual {

// Dense two-phase tableau simplex over free variables,
//
//   minimize c.z  subject to  A z <= b,  E z = d,  z in R^n,
//
// with Bland's pivoting rule, so it terminates on degenerate problems and is
// fully deterministic. Instantiated with S = double it is a conventional
// solver with a small pivot tolerance; with S = Rational every comparison is
// exact and the returned primal/dual pair is an exact optimum.
//
// Multipliers satisfy c + A^T lambda + E^T nu = 0 with lambda >= 0.

enum class LpStatus { Optimal, Infeasible, Unbounded };

template <class S>
struct LpResult {
  LpStatus status = LpStatus::Optimal;
  VecX<S> z;
  S objective{0};
  VecX<S> lambda;  // inequality multipliers, >= 0
  VecX<S> nu;      // equality multipliers
  VecX<S> ray;     // improving recession direction when Unbounded
  S infeasibility{0};  // phase-1 optimum when Infeasible
};

template <class S>
class SimplexSolver {
 public:
  static S pivot_tol() {
    if constexpr (std::is_same_v<S, double>) return 1e-11;
    return S(0);
  }

  LpResult<S> solve(const MatX<S>& A, const VecX<S>& b, const MatX<S>& E, const VecX<S>& d,
                    const VecX<S>& c) {
    const int n = static_cast<int>(c.size());
    const int m1 = static_cast<int>(A.rows());
    const int m2 = static_cast<int>(E.rows());
    const int m = m1 + m2;
    nstruct_ = 2 * n + m1;  // z+, z-, slacks
    ncols_ = nstruct_ + m;  // + artificials
    rows_ = m;
    n_ = n;
    m1_ = m1;

    // Standard form rows with nonnegative right-hand sides; sign_[i] records
    // whether row i was flipped.
    tab_.assign(static_cast<std::size_t>(m + 1) * (ncols_ + 1), S(0));
    sign_.assign(m, S(1));
    basis_.assign(m, -1);
    for (int i = 0; i < m; ++i) {
      const bool ineq = i < m1;
      VecX<S> row = ineq ? VecX<S>(A.row(i)) : VecX<S>(E.row(i - m1));
      S rhs = ineq ? b[i] : d[i - m1];
      if (rhs < S(0)) {
        row = -row;
        rhs = -rhs;
        sign_[i] = S(-1);
      }
      for (int j = 0; j < n; ++j) {
        at(i, j) = row[j];
        at(i, n + j) = -row[j];
      }
      if (ineq) at(i, 2 * n + i) = sign_[i];
      at(i, nstruct_ + i) = S(1);  // artificial
      at(i, ncols_) = rhs;
      basis_[i] = nstruct_ + i;
    }

    // Phase 1: minimize the sum of artificials.
    set_costs_phase1();
    run(/*allow_artificial=*/true);
    if (-at(rows_, ncols_) > phase1_tol()) {
      LpResult<S> res;
      res.status = LpStatus::Infeasible;
      res.infeasibility = -at(rows_, ncols_);
      return res;
    }
    drive_out_artificials();

    // Phase 2.
    set_costs_phase2(c);
    const bool bounded = run(/*allow_artificial=*/false);
    LpResult<S> res;
    if (!bounded) {
      res.status = LpStatus::Unbounded;
      res.ray = extract_ray();
      return res;
    }
    res.status = LpStatus::Optimal;
    res.z = VecX<S>::Zero(n);
    for (int i = 0; i < rows_; ++i) {
      const int bj = basis_[i];
      if (bj < n)
        res.z[bj] += at(i, ncols_);
      else if (bj < 2 * n)
        res.z[bj - n] -= at(i, ncols_);
    }
    res.objective = -at(rows_, ncols_);
    // Row prices from the artificial columns' reduced costs.
    res.lambda = VecX<S>::Zero(m1);
    res.nu = VecX<S>::Zero(m2);
    for (int i = 0; i < m; ++i) {
      S pi = -at(rows_, nstruct_ + i);
      S mult = -sign_[i] * pi;
      if (i < m1)
        res.lambda[i] = mult;
      else
        res.nu[i - m1] = mult;
    }
    if constexpr (std::is_same_v<S, double>) {
      for (int i = 0; i < m1; ++i) res.lambda[i] = std::max(res.lambda[i], 0.0);
    }
    return res;
  }

 private:
  static S phase1_tol() {
    if constexpr (std::is_same_v<S, double>) return 1e-8;
    return S(0);
  }

  S& at(int i, int j) { return tab_[static_cast<std::size_t>(i) * (ncols_ + 1) + j]; }

  void set_costs_phase1() {
    for (int j = 0; j <= ncols_; ++j) at(rows_, j) = S(0);
    for (int j = nstruct_; j < ncols_; ++j) at(rows_, j) = S(1);
    for (int i = 0; i < rows_; ++i) eliminate_basic_cost(i);
  }

  void set_costs_phase2(const VecX<S>& c) {
    for (int j = 0; j <= ncols_; ++j) at(rows_, j) = S(0);
    for (int j = 0; j < n_; ++j) {
      at(rows_, j) = c[j];
      at(rows_, n_ + j) = -c[j];
    }
    for (int i = 0; i < rows_; ++i) eliminate_basic_cost(i);
  }

  void eliminate_basic_cost(int row) {
    const int bj = basis_[row];
    const S coef = at(rows_, bj);
    if (coef == S(0)) return;
    for (int j = 0; j <= ncols_; ++j) at(rows_, j) -= coef * at(row, j);
  }

  void pivot(int row, int col) {
    const S piv = at(row, col);
    for (int j = 0; j <= ncols_; ++j) at(row, j) /= piv;
    for (int i = 0; i <= rows_; ++i) {
      if (i == row) continue;
      const S f = at(i, col);
      if (f == S(0)) continue;
      for (int j = 0; j <= ncols_; ++j) at(i, j) -= f * at(row, j);
    }
    basis_[row] = col;
  }

  // Returns false when the objective is unbounded below; records the
  // offending column in unbounded_col_.
  bool run(bool allow_artificial) {
    const int limit = 200000;
    for (int iter = 0; iter < limit; ++iter) {
      int enter = -1;
      const int jmax = allow_artificial ? ncols_ : nstruct_;
      for (int j = 0; j < jmax; ++j) {
        if (at(rows_, j) < -pivot_tol()) {
          enter = j;
          break;  // Bland: lowest eligible index
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      for (int i = 0; i < rows_; ++i) {
        if (at(i, enter) > pivot_tol()) {
          if (leave < 0) {
            leave = i;
            continue;
          }
          const S lhs = at(i, ncols_) * at(leave, enter);
          const S rhs = at(leave, ncols_) * at(i, enter);
          if (lhs < rhs || (lhs == rhs && basis_[i] < basis_[leave])) leave = i;
        }
      }
      if (leave < 0) {
        unbounded_col_ = enter;
        return false;
      }
      pivot(leave, enter);
    }
    throw std::runtime_error("simplex: iteration limit exceeded");
  }

  void drive_out_artificials() {
    for (int i = 0; i < rows_; ++i) {
      if (basis_[i] < nstruct_) continue;
      int col = -1;
      for (int j = 0; j < nstruct_; ++j) {
        if (abs_val(at(i, j)) > pivot_tol()) {
          col = j;
          break;
        }
      }
      // A redundant row keeps its artificial basic at level zero.
      if (col >= 0) pivot(i, col);
    }
  }

  VecX<S> extract_ray() {
    VecX<S> dir = VecX<S>::Zero(ncols_);
    dir[unbounded_col_] = S(1);
    for (int i = 0; i < rows_; ++i) dir[basis_[i]] = -at(i, unbounded_col_);
    VecX<S> ray = VecX<S>::Zero(n_);
    for (int j = 0; j < n_; ++j) ray[j] = dir[j] - dir[n_ + j];
    return ray;
  }

  std::vector<S> tab_;
  std::vector<S> sign_;
  std::vector<int> basis_;
  int rows_ = 0, ncols_ = 0, nstruct_ = 0, n_ = 0, m1_ = 0;
  int unbounded_col_ = -1;
};

template <class S>
LpResult<S> solve_lp(const MatX<S>& A, const VecX<S>& b, const MatX<S>& E, const VecX<S>& d,
                     const VecX<S>& c) {
  SimplexSolver<S> solver;
  return solver.solve(A, b, E, d, c);
}

}  // namespace stochdual
