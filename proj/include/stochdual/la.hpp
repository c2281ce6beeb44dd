#pragma once

#include <boost/multiprecision/eigen.hpp>

#include <Eigen/Dense>

#include "stochdual/rational.hpp"

namespace stochdual {

template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// The free scalar-matrix operator templates of this Eigen/boost pairing do
// not substitute cleanly for multiprecision scalars, so generic code uses
// these explicit kernels instead of `*` and `/` on Eigen operands. Member
// operators (+, -, .dot()) are fine.

template <class S>
VecX<S> mat_vec(const MatX<S>& A, const VecX<S>& x) {
  VecX<S> out(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    S acc(0);
    for (Eigen::Index j = 0; j < A.cols(); ++j) acc += A(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

// A^T x
template <class S>
VecX<S> mat_tvec(const MatX<S>& A, const VecX<S>& x) {
  VecX<S> out = VecX<S>::Zero(A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) out[j] += A(i, j) * x[i];
  return out;
}

template <class S>
MatX<S> transpose_of(const MatX<S>& A) {
  MatX<S> out(A.cols(), A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) out(j, i) = A(i, j);
  return out;
}

template <class S>
VecX<S> scale_vec(const S& s, const VecX<S>& v) {
  VecX<S> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = s * v[i];
  return out;
}

template <class S>
S quad_form(const MatX<S>& Q, const VecX<S>& x) {
  return x.dot(mat_vec(Q, x));
}

template <class S>
struct LinSolve {
  VecX<S> x;
  bool consistent = true;
  S residual{0};  // inf-norm of A x - b
};

// Gaussian elimination with full pivoting; exact for rational scalars. For
// singular/inconsistent systems returns a least-residual-style solution with
// free variables at zero and reports the residual.
template <class S>
LinSolve<S> solve_linear(MatX<S> A, VecX<S> b) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  std::vector<int> col_of_row(m, -1);
  int rank = 0;
  std::vector<bool> used_col(n, false);
  for (int step = 0; step < std::min(m, n); ++step) {
    int pi = -1, pj = -1;
    S best(0);
    for (int i = rank; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        if (used_col[j]) continue;
        S a = abs_val(A(i, j));
        if (a > best) {
          best = a;
          pi = i;
          pj = j;
        }
      }
    S tol(0);
    if constexpr (std::is_same_v<S, double>) tol = 1e-12;
    if (pi < 0 || !(best > tol)) break;
    A.row(pi).swap(A.row(rank));
    std::swap(b[pi], b[rank]);
    used_col[pj] = true;
    col_of_row[rank] = pj;
    for (int i = 0; i < m; ++i) {
      if (i == rank) continue;
      if (A(i, pj) == S(0)) continue;
      S f = A(i, pj) / A(rank, pj);
      for (int j = 0; j < n; ++j) A(i, j) -= f * A(rank, j);
      A(i, pj) = S(0);
      b[i] -= f * b[rank];
    }
    ++rank;
  }
  LinSolve<S> out;
  out.x = VecX<S>::Zero(n);
  for (int i = 0; i < rank; ++i) out.x[col_of_row[i]] = b[i] / A(i, col_of_row[i]);
  for (int i = rank; i < m; ++i) {
    S r = abs_val(b[i]);
    if (r > out.residual) out.residual = r;
  }
  out.consistent = !(out.residual > S(0));
  return out;
}

template <class S>
S inf_norm(const VecX<S>& v) {
  S m(0);
  for (Eigen::Index i = 0; i < v.size(); ++i) m = std::max(m, abs_val(v[i]));
  return m;
}

template <class S>
VecX<S> to_vec(const std::vector<S>& v) {
  VecX<S> out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

template <class S>
std::vector<S> to_std(const VecX<S>& v) {
  return std::vector<S>(v.data(), v.data() + v.size());
}

inline VecX<Rational> to_rational_vec(const VecX<double>& v) {
  VecX<Rational> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = to_rational(v[i]);
  return out;
}

inline MatX<Rational> to_rational_mat(const MatX<double>& m) {
  MatX<Rational> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = to_rational(m(i, j));
  return out;
}

}  // namespace stochdual
