#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochdual/core.hpp"
#include "stochdual/ipm.hpp"
#include "stochdual/lowering.hpp"
#include "stochdual/simplex.hpp"

namespace stochdual {

enum class Backend { Auto, QpInteriorPoint, ProximalGradient };

struct SolveOptions {
  Backend backend = Backend::Auto;
  double tol_gap = 1e-8;
  double tol_feas = 1e-9;
  int max_iter = 10000;
  unsigned seed = 0;  // recorded for reproducibility; no step is randomized
};

enum class SolveStatus { Optimal, GapAboveTol, PrimalInfeasible, DualInfeasible, Unbounded };

struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::GapAboveTol:
      return "gap-above-tol";
    case SolveStatus::PrimalInfeasible:
      return "primal-infeasible";
    case SolveStatus::DualInfeasible:
      return "dual-infeasible";
    case SolveStatus::Unbounded:
      return "unbounded";
  }
  return "?";
}

template <class S>
struct Certificate {
  AdaptedProcess<S> x;
  DualPoint<S> d;
  S gap{0};
  S value_primal{0};
  S value_dual{0};
  RandomVariable<S> fenchel_residuals;
  SolveStatus status = SolveStatus::Optimal;
  std::optional<AdaptedProcess<S>> ray;  // improving direction when unbounded
};

namespace detail {

// Recession LP: minimize E f-inf(x, 0) over adapted directions with a unit
// box; strictly negative optimum certifies an improving ray.
template <class S>
struct RecessionCheck {
  bool unbounded = false;
  AdaptedProcess<S> ray;
};

template <class S>
RecessionCheck<S> recession_check(const StochasticProgram<S>& sp, const NodeVarMap<S>& vars) {
  QpBuilder<S> B;
  for (int i = 0; i < vars.total; ++i) B.add_var();
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    auto exprs = path_exprs(sp, vars, l);
    AffExpr<S> cost = lower_integrand_recession(B, sp.leaf_integrands[l], exprs);
    B.add_cost_lin(cost, sp.tree->leaf_prob(l));
  }
  auto qp = B.build();
  // unit box on the node variables only
  const int extra = 2 * vars.total;
  MatX<S> A = MatX<S>::Zero(qp.A.rows() + extra, qp.nvar);
  VecX<S> b = VecX<S>::Zero(qp.A.rows() + extra);
  A.topRows(qp.A.rows()) = qp.A;
  b.head(qp.A.rows()) = qp.b;
  for (int j = 0; j < vars.total; ++j) {
    A(qp.A.rows() + 2 * j, j) = S(1);
    b[qp.A.rows() + 2 * j] = S(1);
    A(qp.A.rows() + 2 * j + 1, j) = S(-1);
    b[qp.A.rows() + 2 * j + 1] = S(1);
  }
  auto lp = solve_lp<S>(A, b, qp.E, qp.d, qp.c);
  if (lp.status != LpStatus::Optimal) throw NumericFailure("recession analysis LP failed");
  RecessionCheck<S> out;
  S tol(0);
  if constexpr (std::is_same_v<S, double>) tol = 1e-9;
  if (lp.objective < -tol) {
    out.unbounded = true;
    out.ray = unflatten(sp, vars, VecX<S>(lp.z.head(vars.total)));
  }
  return out;
}

template <class S>
bool rows_feasible(const QpData<S>& qp) {
  auto lp = solve_lp<S>(qp.A, qp.b, qp.E, qp.d, VecX<S>::Zero(qp.nvar));
  return lp.status == LpStatus::Optimal;
}

}  // namespace detail

// ---- primal solve -------------------------------------------------------------

template <class S>
struct FlatSolution {
  AdaptedProcess<S> x;
  ExtReal<S> value;
  RandomVariable<S> y;  // multiplier estimate per leaf
  SolveStatus status = SolveStatus::Optimal;
  std::optional<AdaptedProcess<S>> ray;
};

namespace detail {

template <class S>
RandomVariable<S> extract_y(const StochasticProgram<S>& sp,
                            const std::vector<std::vector<YHook>>& hooks,
                            const AdaptedProcess<S>& x, const VecX<S>& lambda,
                            const VecX<S>& nu) {
  RandomVariable<S> y(sp.tree, sp.param_dim);
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    const S prob = sp.tree->leaf_prob(l);
    for (int i = 0; i < sp.param_dim; ++i) {
      const YHook& h = hooks[l][i];
      switch (h.src) {
        case YHook::Src::IneqRow:
          y.at(l, i) = lambda[h.row] / prob;
          break;
        case YHook::Src::EqRowPos:
          y.at(l, i) = nu[h.row] / prob;
          break;
        case YHook::Src::EqRowNeg:
          y.at(l, i) = -nu[h.row] / prob;
          break;
        case YHook::Src::Primal: {
          VecX<S> yl = sp.leaf_integrands[l].extract_y_primal(sp.leaf_path(x, l),
                                                              sp.leaf_param(l));
          for (int j = 0; j < sp.param_dim; ++j) y.at(l, j) = yl[j];
          i = sp.param_dim;  // whole leaf done
          break;
        }
      }
    }
  }
  return y;
}

// Proximal consensus splitting: leaf copies against the adapted projection.
double admm_solve(const StochasticProgram<double>& sp, const NodeVarMap<double>& vars,
                  const SolveOptions& opts, VecX<double>& z_out);

// Adapted costate from the primal point for control problems:
//   y_T = d_X L_T,  y_t = d_X L_t + E_t[(I + A_{t+1})^T y_{t+1}].
template <class S>
RandomVariable<S> control_costate_y(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x) {
  const auto& tree = *sp.tree;
  const int T = tree.horizon();
  const auto& any = sp.leaf_integrands[0].template as<typename Integrand<S>::Control>();
  const int N = any.state_dim;
  AdaptedProcess<S> ynode(sp.tree, std::vector<int>(T + 1, N));
  for (int t = T; t >= 1; --t) {
    for (int node : tree.nodes_at_stage(t)) {
      int leaf = -1;
      for (int l = 0; l < tree.num_leaves(); ++l)
        if (tree.ancestor(l, t) == node) {
          leaf = l;
          break;
        }
      const auto& c = sp.leaf_integrands[leaf].template as<typename Integrand<S>::Control>();
      VecX<S> stage(N + c.control_dims[t]);
      for (int i = 0; i < N + c.control_dims[t]; ++i) stage[i] = x.at(node, i);
      VecX<S> g = c.cost[t].subgradient_select(stage);
      for (int i = 0; i < N; ++i) ynode.at(node, i) = g[i];
      if (t < T) {
        for (int ch : tree.children(node)) {
          int leaf_ch = -1;
          for (int l = 0; l < tree.num_leaves(); ++l)
            if (tree.ancestor(l, t + 1) == ch) {
              leaf_ch = l;
              break;
            }
          const auto& cc =
              sp.leaf_integrands[leaf_ch].template as<typename Integrand<S>::Control>();
          VecX<S> ynext(N);
          for (int i = 0; i < N; ++i) ynext[i] = ynode.at(ch, i);
          VecX<S> ax = mat_tvec(cc.A[t], ynext);
          S w = tree.prob(ch) / tree.prob(node);
          for (int i = 0; i < N; ++i) ynode.at(node, i) += w * (ynext[i] + ax[i]);
        }
      }
    }
  }
  RandomVariable<S> y(sp.tree, sp.param_dim);
  for (int l = 0; l < tree.num_leaves(); ++l)
    for (int t = 1; t <= T; ++t)
      for (int i = 0; i < N; ++i) y.at(l, (t - 1) * N + i) = ynode.at(tree.ancestor(l, t), i);
  return y;
}

}  // namespace detail

template <class S>
FlatSolution<S> solve_primal(const StochasticProgram<S>& sp, const SolveOptions& opts = {});

// double backend: interior point on the lowered QP, proximal splitting for
// integrands outside the QP catalogue
template <>
inline FlatSolution<double> solve_primal<double>(const StochasticProgram<double>& sp,
                                                 const SolveOptions& opts) {
  sp.validate();
  NodeVarMap<double> vars(sp);
  FlatSolution<double> out;

  auto rec = detail::recession_check(sp, vars);
  if (rec.unbounded) {
    out.status = SolveStatus::Unbounded;
    out.ray = rec.ray;
    out.value = ExtReal<double>::neg_inf();
    out.x = AdaptedProcess<double>(sp.tree, sp.dims);
    out.y = RandomVariable<double>(sp.tree, sp.param_dim);
    return out;
  }

  bool qp_ok = true;
  QpBuilder<double> B;
  std::vector<std::vector<YHook>> hooks;
  if (opts.backend == Backend::ProximalGradient) qp_ok = false;
  if (qp_ok) {
    try {
      for (int i = 0; i < vars.total; ++i) B.add_var();
      for (int l = 0; l < sp.tree->num_leaves(); ++l) {
        auto exprs = path_exprs(sp, vars, l);
        hooks.push_back(
            lower_integrand(B, sp.leaf_integrands[l], exprs, sp.leaf_param(l), sp.tree->leaf_prob(l)));
      }
    } catch (const NotQpRepresentable&) {
      if (opts.backend == Backend::QpInteriorPoint)
        throw NumericFailure("instance is not representable for the interior-point backend");
      qp_ok = false;
    }
  }

  if (qp_ok) {
    auto qp = B.build();
    if (!detail::rows_feasible(qp)) {
      out.status = SolveStatus::PrimalInfeasible;
      out.value = ExtReal<double>::pos_inf();
      out.x = AdaptedProcess<double>(sp.tree, sp.dims);
      out.y = RandomVariable<double>(sp.tree, sp.param_dim);
      return out;
    }
    QpProblem prob{qp.Q, qp.c, qp.A, qp.b, qp.E, qp.d};
    auto res = solve_qp(prob, std::min(1e-11, opts.tol_gap * 1e-3), std::max(200, opts.max_iter / 50));
    VecX<double> z = res.z;
    VecX<double> lambda = res.lambda, nu = res.nu;
    if (res.status != QpStatus::Optimal) {
      // pure LPs fall back to the tableau simplex for an exact basis
      if (!B.has_quadratic_cost()) {
        auto lp = solve_lp<double>(qp.A, qp.b, qp.E, qp.d, qp.c);
        if (lp.status != LpStatus::Optimal) throw NumericFailure("LP fallback failed");
        z = lp.z;
        lambda = lp.lambda;
        nu = lp.nu;
      } else {
        throw NumericFailure("interior point did not converge");
      }
    }
    out.x = unflatten(sp, vars, VecX<double>(z.head(vars.total)));
    out.value = primal_objective(sp, out.x, opts.tol_feas);
    out.y = detail::extract_y(sp, hooks, out.x, lambda, nu);
    return out;
  }

  // proximal splitting backend
  VecX<double> z;
  detail::admm_solve(sp, vars, opts, z);
  out.x = unflatten(sp, vars, VecX<double>(z.head(vars.total)));
  out.value = primal_objective(sp, out.x, std::max(opts.tol_feas, 1e-7));
  if (!sp.leaf_integrands.empty() &&
      sp.leaf_integrands[0].kind() == Integrand<double>::Kind::Control) {
    out.y = detail::control_costate_y(sp, out.x);
    return out;
  }
  RandomVariable<double> y(sp.tree, sp.param_dim);
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    VecX<double> yl =
        sp.leaf_integrands[l].extract_y_primal(sp.leaf_path(out.x, l), sp.leaf_param(l));
    for (int j = 0; j < sp.param_dim; ++j) y.at(l, j) = yl[j];
  }
  out.y = y;
  return out;
}

// exact backend: rational simplex on polyhedral instances
template <>
inline FlatSolution<Rational> solve_primal<Rational>(const StochasticProgram<Rational>& sp,
                                                     const SolveOptions& opts) {
  (void)opts;
  sp.validate();
  NodeVarMap<Rational> vars(sp);
  FlatSolution<Rational> out;

  auto rec = detail::recession_check(sp, vars);
  if (rec.unbounded) {
    out.status = SolveStatus::Unbounded;
    out.ray = rec.ray;
    out.value = ExtReal<Rational>::neg_inf();
    out.x = AdaptedProcess<Rational>(sp.tree, sp.dims);
    out.y = RandomVariable<Rational>(sp.tree, sp.param_dim);
    return out;
  }

  QpBuilder<Rational> B;
  std::vector<std::vector<YHook>> hooks;
  for (int i = 0; i < vars.total; ++i) B.add_var();
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    auto exprs = path_exprs(sp, vars, l);
    hooks.push_back(lower_integrand(B, sp.leaf_integrands[l], exprs, sp.leaf_param(l),
                                    sp.tree->leaf_prob(l)));
  }
  if (B.has_quadratic_cost())
    throw NumericFailure("exact mode supports polyhedral instances only");
  auto qp = B.build();
  auto lp = solve_lp<Rational>(qp.A, qp.b, qp.E, qp.d, qp.c);
  if (lp.status == LpStatus::Infeasible) {
    out.status = SolveStatus::PrimalInfeasible;
    out.value = ExtReal<Rational>::pos_inf();
    out.x = AdaptedProcess<Rational>(sp.tree, sp.dims);
    out.y = RandomVariable<Rational>(sp.tree, sp.param_dim);
    return out;
  }
  if (lp.status == LpStatus::Unbounded) {
    out.status = SolveStatus::Unbounded;
    out.value = ExtReal<Rational>::neg_inf();
    out.x = AdaptedProcess<Rational>(sp.tree, sp.dims);
    out.y = RandomVariable<Rational>(sp.tree, sp.param_dim);
    return out;
  }
  out.x = unflatten(sp, vars, VecX<Rational>(lp.z.head(vars.total)));
  out.value = primal_objective(sp, out.x, Rational(0));
  out.y = detail::extract_y(sp, hooks, out.x, lp.lambda, lp.nu);
  return out;
}

// ---- dual recovery --------------------------------------------------------------

// p := g - ap(g) for a scenariowise subgradient g of the Lagrangian in x;
// orthogonality is structural.
template <class S>
DualPoint<S> recover_dual(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                          const RandomVariable<S>& y_leaf) {
  LeafProcess<S> g(sp.tree, sp.dims);
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    VecX<S> yl(sp.param_dim);
    for (int i = 0; i < sp.param_dim; ++i) yl[i] = y_leaf.at(l, i);
    VecX<S> gl = sp.leaf_integrands[l].lagrangian_x_subgradient(sp.leaf_path(x, l), yl);
    int off = 0;
    for (int t = 0; t <= sp.tree->horizon(); ++t) {
      for (int i = 0; i < sp.dims[t]; ++i) g.at(t, l, i) = gl[off + i];
      off += sp.dims[t];
    }
  }
  return DualPoint<S>{subtract_projection(g), y_leaf};
}

// ---- full solve -----------------------------------------------------------------

template <class S>
RandomVariable<S> fenchel_residuals(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                                    const DualPoint<S>& d) {
  RandomVariable<S> out(sp.tree, 1);
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    VecX<S> xl = sp.leaf_path(x, l);
    VecX<S> pl = sp.leaf_path(d.p, l);
    VecX<S> yl(sp.param_dim);
    for (int i = 0; i < sp.param_dim; ++i) yl[i] = d.y.at(l, i);
    VecX<S> ul = sp.leaf_param(l);
    auto fe = sp.leaf_integrands[l].eval(xl, ul);
    auto fc = sp.leaf_integrands[l].conjugate(pl, yl);
    S resid = std::max(fe.violation, fc.violation);
    if (fe.value.is_finite() && fc.value.is_finite()) {
      S gap = S(fe.value.value() + fc.value.value() - xl.dot(pl) - ul.dot(yl));
      resid = std::max(resid, abs_val(gap));
    } else {
      if constexpr (std::is_same_v<S, double>) {
        resid = std::numeric_limits<double>::infinity();
      } else {
        throw NumericFailure("exact certificate with infinite leaf value");
      }
    }
    out.at(l, 0) = resid;
  }
  return out;
}

template <class S>
Certificate<S> solve(const StochasticProgram<S>& sp, const SolveOptions& opts = {}) {
  auto flat = solve_primal<S>(sp, opts);
  Certificate<S> cert;
  cert.x = flat.x;
  cert.ray = flat.ray;
  if (flat.status != SolveStatus::Optimal) {
    cert.status = flat.status;
    cert.d = DualPoint<S>{LeafProcess<S>(sp.tree, sp.dims), RandomVariable<S>(sp.tree, sp.param_dim)};
    cert.fenchel_residuals = RandomVariable<S>(sp.tree, 1);
    return cert;
  }
  cert.d = recover_dual(sp, flat.x, flat.y);

  const S feas_tol = S(opts.tol_feas);
  auto pval = primal_objective(sp, flat.x, feas_tol);
  auto dval = dual_objective_ex(sp, cert.d, feas_tol, S(10) * feas_tol);
  cert.fenchel_residuals = fenchel_residuals(sp, flat.x, cert.d);

  if (pval.is_pos_inf()) {
    cert.status = SolveStatus::PrimalInfeasible;
    return cert;
  }
  cert.value_primal = pval.value();
  if (!dval.value.is_finite()) {
    cert.status = SolveStatus::DualInfeasible;
    return cert;
  }
  if (!dval.exact) throw NumericFailure("certificate would rely on an inexact conjugate");
  cert.value_dual = dval.value.value();
  cert.gap = S(cert.value_primal - cert.value_dual);

  S orth(0);
  for (int t = 0; t <= sp.tree->horizon(); ++t)
    orth = std::max(orth, orthogonality_residual(cert.d.p, t));

  const bool gap_ok = abs_val(cert.gap) <= S(opts.tol_gap);
  const bool feas_ok = orth <= feas_tol;
  cert.status = gap_ok && feas_ok ? SolveStatus::Optimal : SolveStatus::GapAboveTol;
  return cert;
}

}  // namespace stochdual
