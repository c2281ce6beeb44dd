#include <cmath>

#include "stochdual/solve.hpp"

namespace stochdual::detail {

namespace {

using Vec = VecX<double>;

// argmin_w f(w, u) + |w - v|^2 / (2 step)
Vec integrand_prox(const Integrand<double>& g, const Vec& u, const Vec& v, double step) {
  using Kind = Integrand<double>::Kind;
  const int nx = g.path_dim();

  if (g.is_qp_representable()) {
    QpBuilder<double> B;
    std::vector<AffExpr<double>> exprs;
    for (int i = 0; i < nx; ++i) exprs.push_back(AffExpr<double>::variable(B.add_var()));
    lower_integrand(B, g, exprs, u, 1.0);
    for (int i = 0; i < nx; ++i) {
      std::vector<AffExpr<double>> e{exprs[i] + AffExpr<double>::constant(-v[i])};
      MatX<double> Q(1, 1);
      Q << 1.0 / step;
      B.add_cost_quad(e, Q, 1.0);
    }
    auto qp = B.build();
    QpProblem prob{qp.Q, qp.c, qp.A, qp.b, qp.E, qp.d};
    auto res = solve_qp(prob, 1e-12, 300);
    if (res.status != QpStatus::Optimal) throw NumericFailure("leaf prox QP failed");
    return res.z.head(nx);
  }

  if (g.kind() == Kind::Hedging) {
    const auto& h = g.as<Integrand<double>::Hedging>();
    if (h.static_payoff.size() > 0)
      throw NumericFailure("proximal backend: curved loss with static assets");
    for (std::size_t t = 0; t + 1 < h.constraints.size(); ++t) {
      auto mask = depends_mask(h.constraints[t]);
      for (bool m : mask)
        if (m) throw NumericFailure("proximal backend: curved loss with portfolio constraints");
    }
    // f(w) = V(u - q.w) + indicator{terminal block = 0}: the terminal block
    // projects to zero, the rest reduces to a scalar prox along q.
    Vec q = Vec::Zero(nx);
    for (std::size_t t = 0; t < h.price_incr.size(); ++t) {
      const int off = g.stage_offset(static_cast<int>(t) + 1);
      for (int j = 0; j < static_cast<int>(h.price_incr[t].size()); ++j)
        q[off + j] = -h.price_incr[t][j];
    }
    Vec w = v;
    const int term_off = g.stage_offset(g.horizon());
    for (int j = term_off; j < nx; ++j) w[j] = 0.0;
    double qn = 0.0;
    for (int j = 0; j < term_off; ++j) qn += q[j] * q[j];
    if (qn == 0.0) return w;
    double s = u[0];
    for (int j = 0; j < term_off; ++j) s += q[j] * w[j];
    Vec sv(1);
    sv << s;
    double tau = h.loss.prox(sv, step * qn)[0];
    for (int j = 0; j < term_off; ++j) w[j] += q[j] * (tau - s) / qn;
    return w;
  }

  throw NumericFailure("proximal backend: no prox rule for this integrand");
}

}  // namespace

double admm_solve(const StochasticProgram<double>& sp, const NodeVarMap<double>& vars,
                  const SolveOptions& opts, Vec& z_out) {
  const auto& tree = *sp.tree;
  const int L = tree.num_leaves();
  const int nx = sp.path_dim();
  const double rho = 1.0;

  std::vector<Vec> w(L, Vec::Zero(nx)), uu(L, Vec::Zero(nx));
  Vec z = Vec::Zero(vars.total);

  // leaf paths expressed over the node variables
  std::vector<std::vector<int>> pathvar(L);
  for (int l = 0; l < L; ++l) {
    for (int t = 0; t <= tree.horizon(); ++t) {
      int node = tree.ancestor(l, t);
      for (int i = 0; i < sp.dims[t]; ++i) pathvar[l].push_back(vars.offset[node] + i);
    }
  }

  const int iters = std::max(opts.max_iter, 2000);
  double rnorm = 0.0;
  for (int it = 0; it < iters; ++it) {
    for (int l = 0; l < L; ++l) {
      Vec target(nx);
      for (int i = 0; i < nx; ++i) target[i] = z[pathvar[l][i]] - uu[l][i];
      w[l] = integrand_prox(sp.leaf_integrands[l], sp.leaf_param(l), target, 1.0 / rho);
    }
    Vec zprev = z;
    Vec num = Vec::Zero(vars.total), den = Vec::Zero(vars.total);
    for (int l = 0; l < L; ++l) {
      const double p = tree.leaf_prob(l);
      for (int i = 0; i < nx; ++i) {
        num[pathvar[l][i]] += p * (w[l][i] + uu[l][i]);
        den[pathvar[l][i]] += p;
      }
    }
    for (int i = 0; i < vars.total; ++i) z[i] = den[i] > 0 ? num[i] / den[i] : 0.0;
    rnorm = 0.0;
    for (int l = 0; l < L; ++l)
      for (int i = 0; i < nx; ++i) {
        double r = w[l][i] - z[pathvar[l][i]];
        uu[l][i] += r;
        rnorm = std::max(rnorm, std::abs(r));
      }
    double snorm = (z - zprev).lpNorm<Eigen::Infinity>();
    if (rnorm < 1e-11 && snorm < 1e-11) break;
  }
  z_out = z;
  return rnorm;
}

}  // namespace stochdual::detail
