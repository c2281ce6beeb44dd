#include "stochdual/ipm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stochdual {

namespace {

// Fraction-to-boundary step length keeping v + a*dv >= (1-frac)*v.
double step_length(const VecX<double>& v, const VecX<double>& dv, double frac) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -frac * v[i] / dv[i]);
  }
  return alpha;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, double tol, int max_iter) {
  const int n = static_cast<int>(qp.c.size());
  const int m1 = static_cast<int>(qp.A.rows());
  const int m2 = static_cast<int>(qp.E.rows());
  if (qp.Q.rows() != n || qp.Q.cols() != n) throw std::invalid_argument("ipm: Q shape");
  const double reg = 1e-12;

  QpResult res;

  // No inequalities: one regularized KKT solve.
  if (m1 == 0) {
    MatX<double> K = MatX<double>::Zero(n + m2, n + m2);
    K.topLeftCorner(n, n) = qp.Q + reg * MatX<double>::Identity(n, n);
    if (m2 > 0) {
      K.topRightCorner(n, m2) = qp.E.transpose();
      K.bottomLeftCorner(m2, n) = qp.E;
      K.bottomRightCorner(m2, m2) = -reg * MatX<double>::Identity(m2, m2);
    }
    VecX<double> rhs(n + m2);
    rhs.head(n) = -qp.c;
    if (m2 > 0) rhs.tail(m2) = qp.d;
    VecX<double> sol = K.fullPivLu().solve(rhs);
    res.z = sol.head(n);
    res.nu = sol.tail(m2);
    res.lambda = VecX<double>::Zero(0);
    res.objective = 0.5 * res.z.dot(qp.Q * res.z) + qp.c.dot(res.z);
    VecX<double> rd = qp.Q * res.z + qp.c;
    if (m2 > 0) rd += qp.E.transpose() * res.nu;
    res.kkt_residual = rd.lpNorm<Eigen::Infinity>();
    if (m2 > 0)
      res.kkt_residual =
          std::max(res.kkt_residual, (qp.E * res.z - qp.d).lpNorm<Eigen::Infinity>());
    res.status = res.kkt_residual <= std::max(tol, 1e-9) ? QpStatus::Optimal : QpStatus::MaxIter;
    return res;
  }

  // Starting point.
  VecX<double> z = VecX<double>::Zero(n);
  if (m2 > 0) {
    // Least-squares point satisfying the equalities.
    z = qp.E.fullPivLu().solve(qp.d);
  }
  VecX<double> s(m1), lam(m1);
  VecX<double> slack0 = qp.b - qp.A * z;
  for (int i = 0; i < m1; ++i) {
    s[i] = std::max(1.0, std::abs(slack0[i]));
    lam[i] = 1.0;
  }
  VecX<double> nu = VecX<double>::Zero(m2);

  const int dim = n + m2;
  MatX<double> K(dim, dim);
  VecX<double> rhs(dim);

  for (int iter = 0; iter < max_iter; ++iter) {
    VecX<double> rd = qp.Q * z + qp.c + qp.A.transpose() * lam;
    if (m2 > 0) rd += qp.E.transpose() * nu;
    VecX<double> rp = qp.A * z + s - qp.b;
    VecX<double> re = m2 > 0 ? VecX<double>(qp.E * z - qp.d) : VecX<double>();
    double mu = s.dot(lam) / m1;

    double resid = std::max(rd.lpNorm<Eigen::Infinity>(), rp.lpNorm<Eigen::Infinity>());
    if (m2 > 0) resid = std::max(resid, re.lpNorm<Eigen::Infinity>());
    res.iterations = iter;
    res.kkt_residual = std::max(resid, mu);
    if (resid <= tol && mu <= tol) {
      res.status = QpStatus::Optimal;
      break;
    }
    if (iter == max_iter - 1) {
      res.status = QpStatus::MaxIter;
      break;
    }

    VecX<double> sinv_lam = (lam.array() / s.array()).matrix();
    K.setZero();
    K.topLeftCorner(n, n) = qp.Q + reg * MatX<double>::Identity(n, n);
    for (int i = 0; i < m1; ++i)
      K.topLeftCorner(n, n).noalias() +=
          sinv_lam[i] * qp.A.row(i).transpose() * qp.A.row(i);
    if (m2 > 0) {
      K.topRightCorner(n, m2) = qp.E.transpose();
      K.bottomLeftCorner(m2, n) = qp.E;
      K.bottomRightCorner(m2, m2) = -reg * MatX<double>::Identity(m2, m2);
    }
    Eigen::PartialPivLU<MatX<double>> lu(K);

    auto solve_newton = [&](const VecX<double>& rc) {
      // rc is the complementarity target: Lam*S e - rc_target, folded in by
      // the caller. Here rc holds the full right-hand side of Lam ds + S dl.
      VecX<double> t = VecX<double>::Zero(n);
      for (int i = 0; i < m1; ++i)
        t += qp.A.row(i).transpose() * ((lam[i] * rp[i] - rc[i]) / s[i]);
      rhs.head(n) = -rd - t;
      if (m2 > 0) rhs.tail(m2) = -re;
      VecX<double> sol = lu.solve(rhs);
      VecX<double> dz = sol.head(n);
      VecX<double> dnu = m2 > 0 ? VecX<double>(sol.tail(m2)) : VecX<double>();
      VecX<double> ds = -rp - qp.A * dz;
      VecX<double> dl(m1);
      for (int i = 0; i < m1; ++i) dl[i] = (-rc[i] - lam[i] * ds[i]) / s[i];
      return std::tuple{dz, ds, dl, dnu};
    };

    // Predictor.
    VecX<double> rc_aff = (s.array() * lam.array()).matrix();
    auto [dz_a, ds_a, dl_a, dnu_a] = solve_newton(rc_aff);
    double ap = step_length(s, ds_a, 1.0);
    double ad = step_length(lam, dl_a, 1.0);
    double mu_aff = (s + ap * ds_a).dot(lam + ad * dl_a) / m1;
    double sigma = std::pow(mu_aff / mu, 3);
    sigma = std::min(std::max(sigma, 1e-8), 0.99);

    // Corrector.
    VecX<double> rc = rc_aff + (ds_a.array() * dl_a.array()).matrix() -
                      sigma * mu * VecX<double>::Ones(m1);
    auto [dz, ds, dl, dnu] = solve_newton(rc);
    double alpha_p = std::min(1.0, 0.9995 * step_length(s, ds, 1.0));
    double alpha_d = std::min(1.0, 0.9995 * step_length(lam, dl, 1.0));
    double alpha = std::min(alpha_p, alpha_d);

    z += alpha * dz;
    s += alpha * ds;
    lam += alpha * dl;
    if (m2 > 0) nu += alpha * dnu;
  }

  res.z = z;
  res.lambda = lam;
  res.nu = nu;
  res.objective = 0.5 * z.dot(qp.Q * z) + qp.c.dot(z);
  return res;
}

}  // namespace stochdual
