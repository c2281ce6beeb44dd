#pragma once

#include "stochdual/la.hpp"

namespace stochdual {

// Dense convex QP
//
//   minimize 1/2 z'Qz + c.z   subject to  A z <= b,  E z = d
//
// solved by a primal-dual interior-point method (Mehrotra-style predictor
// corrector). Q must be symmetric positive semidefinite. Feasibility and
// boundedness are expected to be established by the caller; the solver
// reports MaxIter when it cannot reach the requested tolerance.

struct QpProblem {
  MatX<double> Q;
  VecX<double> c;
  MatX<double> A;
  VecX<double> b;
  MatX<double> E;
  VecX<double> d;
};

enum class QpStatus { Optimal, MaxIter };

struct QpResult {
  QpStatus status = QpStatus::Optimal;
  VecX<double> z;
  VecX<double> lambda;  // inequality multipliers, >= 0
  VecX<double> nu;      // equality multipliers
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

QpResult solve_qp(const QpProblem& qp, double tol = 1e-11, int max_iter = 200);

}  // namespace stochdual
