#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "stochdual/integrand.hpp"
#include "stochdual/lowering.hpp"
#include "stochdual/parallel.hpp"
#include "stochdual/simplex.hpp"
#include "stochdual/tree.hpp"

namespace stochdual {

// The generic problem: minimize E f(x, ubar) over adapted x, together with
// its perturbation structure. One integrand per leaf, a fixed parameter
// value per leaf, and per-stage trajectory dimensions shared with the tree.
template <class S>
struct StochasticProgram {
  TreePtr<S> tree;
  std::vector<int> dims;  // n_t per stage
  int param_dim = 0;
  std::vector<Integrand<S>> leaf_integrands;
  RandomVariable<S> ubar;

  void validate() const {
    if (static_cast<int>(dims.size()) != tree->horizon() + 1)
      throw std::invalid_argument("program: dims length");
    if (static_cast<int>(leaf_integrands.size()) != tree->num_leaves())
      throw std::invalid_argument("program: one integrand per leaf");
    for (const auto& g : leaf_integrands) {
      if (g.stage_dims() != dims) throw std::invalid_argument("program: stage dims mismatch");
      if (g.param_dim() != param_dim) throw std::invalid_argument("program: parameter dims");
    }
    if (ubar.dim != param_dim) throw std::invalid_argument("program: ubar dimension");
  }

  int path_dim() const {
    int n = 0;
    for (int d : dims) n += d;
    return n;
  }

  VecX<S> leaf_path(const AdaptedProcess<S>& x, int leaf) const {
    VecX<S> out(path_dim());
    int off = 0;
    for (int t = 0; t <= tree->horizon(); ++t) {
      int node = tree->ancestor(leaf, t);
      for (int i = 0; i < dims[t]; ++i) out[off + i] = x.at(node, i);
      off += dims[t];
    }
    return out;
  }

  VecX<S> leaf_path(const LeafProcess<S>& p, int leaf) const {
    VecX<S> out(path_dim());
    int off = 0;
    for (int t = 0; t <= tree->horizon(); ++t) {
      for (int i = 0; i < dims[t]; ++i) out[off + i] = p.at(t, leaf, i);
      off += dims[t];
    }
    return out;
  }

  VecX<S> leaf_param(int leaf) const {
    VecX<S> out(param_dim);
    for (int i = 0; i < param_dim; ++i) out[i] = ubar.at(leaf, i);
    return out;
  }
};

template <class S>
struct DualPoint {
  LeafProcess<S> p;
  RandomVariable<S> y;
};

// E f(x, ubar) under the extended-real sum convention; +inf dominates.
// Domain violations up to feas_tol are tolerated (0 = strict).
template <class S>
ExtReal<S> primal_objective(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                            const S& feas_tol = S(0)) {
  const auto& tree = *sp.tree;
  return chunked_sum<ExtReal<S>>(tree.num_leaves(), [&](std::size_t l) {
    auto v = sp.leaf_integrands[l].eval(sp.leaf_path(x, static_cast<int>(l)),
                                       sp.leaf_param(static_cast<int>(l)));
    ExtReal<S> val = v.fold(feas_tol);
    return tree.leaf_prob(static_cast<int>(l)) * val;
  });
}

template <class S>
struct DualValue {
  ExtReal<S> value;
  bool exact = true;
  S max_violation{0};
};

// <ubar, y> - E f*(p, y); -inf when p is not orthogonal at orth_tol.
template <class S>
DualValue<S> dual_objective_ex(const StochasticProgram<S>& sp, const DualPoint<S>& d,
                               const S& dom_tol = S(0), const S& orth_tol = S(1e-9)) {
  DualValue<S> out;
  if (!in_orthogonal_complement(d.p, orth_tol)) {
    out.value = ExtReal<S>::neg_inf();
    return out;
  }
  const auto& tree = *sp.tree;
  S pairing_term(0);
  ExtReal<S> conj_total(S(0));
  bool exact = true;
  S worst(0);
  // fixed-order reduction keeps the value reproducible bit-for-bit
  for (int l = 0; l < tree.num_leaves(); ++l) {
    VecX<S> y(sp.param_dim);
    for (int i = 0; i < sp.param_dim; ++i) y[i] = d.y.at(l, i);
    pairing_term += tree.leaf_prob(l) * sp.leaf_param(l).dot(y);
    auto c = sp.leaf_integrands[l].conjugate(sp.leaf_path(d.p, l), y);
    worst = std::max(worst, c.violation);
    exact = exact && c.exact;
    conj_total += tree.leaf_prob(l) * c.fold(dom_tol);
  }
  out.exact = exact;
  out.max_violation = worst;
  out.value = ExtReal<S>(pairing_term) - conj_total;
  return out;
}

template <class S>
ExtReal<S> dual_objective(const StochasticProgram<S>& sp, const DualPoint<S>& d,
                          const S& dom_tol = S(0), const S& orth_tol = S(1e-9)) {
  return dual_objective_ex(sp, d, dom_tol, orth_tol).value;
}

template <class S>
ExtReal<S> weak_duality_gap(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                            const DualPoint<S>& d, const S& tol = S(1e-9)) {
  return primal_objective(sp, x, tol) - dual_objective(sp, d, tol, tol);
}

// ---- flat variable map -------------------------------------------------------

// Node variables in depth-first node order, stage dims from the program.
template <class S>
struct NodeVarMap {
  std::vector<int> offset;  // per node
  int total = 0;

  NodeVarMap() = default;
  explicit NodeVarMap(const StochasticProgram<S>& sp) {
    const auto& tree = *sp.tree;
    offset.resize(tree.num_nodes());
    for (int n = 0; n < tree.num_nodes(); ++n) {
      offset[n] = total;
      total += sp.dims[tree.stage(n)];
    }
  }

  int var(const StochasticProgram<S>& sp, int node, int i) const {
    (void)sp;
    return offset[node] + i;
  }
};

template <class S>
std::vector<AffExpr<S>> path_exprs(const StochasticProgram<S>& sp, const NodeVarMap<S>& vars,
                                   int leaf) {
  std::vector<AffExpr<S>> out;
  const auto& tree = *sp.tree;
  for (int t = 0; t <= tree.horizon(); ++t) {
    int node = tree.ancestor(leaf, t);
    for (int i = 0; i < sp.dims[t]; ++i)
      out.push_back(AffExpr<S>::variable(vars.offset[node] + i));
  }
  return out;
}

template <class S>
AdaptedProcess<S> unflatten(const StochasticProgram<S>& sp, const NodeVarMap<S>& vars,
                            const VecX<S>& z) {
  AdaptedProcess<S> x(sp.tree, sp.dims);
  const auto& tree = *sp.tree;
  for (int n = 0; n < tree.num_nodes(); ++n)
    for (int i = 0; i < sp.dims[tree.stage(n)]; ++i) x.at(n, i) = z[vars.offset[n] + i];
  return x;
}

// ---- recession diagnostics ----------------------------------------------------

template <class S>
struct LinearityReport {
  bool supported = false;
  bool is_linear = false;
  std::optional<AdaptedProcess<S>> witness;
  std::string note;
};

// Whether { adapted x : f-inf(x, 0) <= 0 scenariowise } is a linear space.
// The cone is assembled as explicit rows over node variables; each row is
// then pushed by an LP inside the cone (with a unit box) and the cone is
// linear exactly when no row can move strictly negative.
template <class S>
LinearityReport<S> check_linearity_condition(const StochasticProgram<S>& sp) {
  LinearityReport<S> rep;
  NodeVarMap<S> vars(sp);
  std::vector<AffExpr<S>> ineq_rows, eq_rows;
  try {
    for (int l = 0; l < sp.tree->num_leaves(); ++l) {
      auto exprs = path_exprs(sp, vars, l);
      auto pieces = integrand_recession_pieces(sp.leaf_integrands[l], exprs);
      for (auto& r : pieces.ineq) ineq_rows.push_back(std::move(r));
      for (auto& r : pieces.eq) eq_rows.push_back(std::move(r));
      for (auto& c : flatten_pieces(pieces)) ineq_rows.push_back(std::move(c));
    }
  } catch (const UnsupportedRecession& e) {
    rep.note = e.what();
    return rep;
  } catch (const std::domain_error& e) {
    rep.note = e.what();
    return rep;
  }
  rep.supported = true;

  const int n = vars.total;
  const int mi = static_cast<int>(ineq_rows.size());
  MatX<S> A = MatX<S>::Zero(mi + 2 * n, n);
  VecX<S> b = VecX<S>::Zero(mi + 2 * n);
  for (int r = 0; r < mi; ++r) {
    for (const auto& t : ineq_rows[r].terms) A(r, t.first) += t.second;
    b[r] = -ineq_rows[r].k;
  }
  for (int j = 0; j < n; ++j) {  // unit box
    A(mi + 2 * j, j) = S(1);
    b[mi + 2 * j] = S(1);
    A(mi + 2 * j + 1, j) = S(-1);
    b[mi + 2 * j + 1] = S(1);
  }
  MatX<S> E = MatX<S>::Zero(static_cast<int>(eq_rows.size()), n);
  VecX<S> dv = VecX<S>::Zero(static_cast<int>(eq_rows.size()));
  for (std::size_t r = 0; r < eq_rows.size(); ++r) {
    for (const auto& t : eq_rows[r].terms) E(static_cast<int>(r), t.first) += t.second;
    dv[static_cast<int>(r)] = -eq_rows[r].k;
  }

  S tol(0);
  if constexpr (std::is_same_v<S, double>) tol = 1e-9;
  rep.is_linear = true;
  for (int r = 0; r < mi; ++r) {
    VecX<S> c = VecX<S>::Zero(n);
    for (const auto& t : ineq_rows[r].terms) c[t.first] += t.second;
    if (inf_norm<S>(c) == S(0)) continue;
    auto lp = solve_lp<S>(A, b, E, dv, c);
    if (lp.status != LpStatus::Optimal)
      throw std::runtime_error("linearity check: cone LP failed");
    if (lp.objective < -tol) {
      rep.is_linear = false;
      rep.witness = unflatten(sp, vars, lp.z);
      return rep;
    }
  }
  return rep;
}

// Existence of y with E f*(lambda p, y) finite for lambda in a neighborhood
// of one. The search for y is scenariowise; leaves are independent.
template <class S>
struct NeighborhoodReport {
  bool supported = true;
  bool holds = false;
};

template <class S>
bool leaf_has_finite_conjugate(const Integrand<S>& g, const VecX<S>& v);

template <class S>
NeighborhoodReport<S> check_dual_neighborhood(const StochasticProgram<S>& sp,
                                              const LeafProcess<S>& p, const S& eps,
                                              const std::vector<S>& lambdas = {}) {
  NeighborhoodReport<S> rep;
  std::vector<S> grid{S(1) - eps, S(1), S(1) + eps};
  for (const S& l : lambdas) grid.push_back(l);
  for (const S& lam : grid) {
    for (int l = 0; l < sp.tree->num_leaves(); ++l) {
      VecX<S> v = sp.leaf_path(p, l);
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = lam * v[i];
      try {
        if (!leaf_has_finite_conjugate(sp.leaf_integrands[l], v)) {
          rep.holds = false;
          return rep;
        }
      } catch (const std::domain_error&) {
        rep.supported = false;
        return rep;
      }
    }
  }
  rep.holds = true;
  return rep;
}

// Scenariowise domain analysis: is there a y with f*(v, y) < inf?
template <class S>
bool leaf_has_finite_conjugate(const Integrand<S>& g, const VecX<S>& v) {
  using Kind = typename Integrand<S>::Kind;
  S probe_tol(0);
  if constexpr (std::is_same_v<S, double>) probe_tol = 1e-8;
  auto finite_at = [&](const VecX<S>& y) {
    auto c = g.conjugate(v, y);
    return c.value.is_finite() && !(c.violation > probe_tol);
  };
  switch (g.kind()) {
    case Kind::Stopping: {
      // y = max(0, max_t(v_t + R_t)) is always feasible
      return true;
    }
    case Kind::MathProg: {
      const auto& mp = g.template as<typename Integrand<S>::MathProg>();
      if (finite_at(VecX<S>::Zero(g.param_dim()))) return true;
      bool all_affine = mp.objective.tag() == FnTag::Affine;
      for (const auto& c : mp.constraints) all_affine = all_affine && c.tag() == FnTag::Affine;
      if (!all_affine) throw std::domain_error("domain analysis unavailable");
      // feasibility LP: exists y in K* with grad(f0) + sum y_j a_j = v
      const int n = g.path_dim();
      const int m = g.param_dim();
      MatX<S> E(n, m);
      for (int j = 0; j < m; ++j) {
        const auto& aj = mp.constraints[j].data().a;
        for (int i = 0; i < n; ++i) E(i, j) = aj[i];
      }
      VecX<S> rhs = v - mp.objective.data().a;
      MatX<S> A = MatX<S>::Zero(mp.num_ineq, m);
      for (int j = 0; j < mp.num_ineq; ++j) A(j, j) = S(-1);
      auto lp = solve_lp<S>(A, VecX<S>::Zero(mp.num_ineq), E, rhs, VecX<S>::Zero(m));
      return lp.status == LpStatus::Optimal;
    }
    case Kind::Hedging: {
      const auto& h = g.template as<typename Integrand<S>::Hedging>();
      if (finite_at(VecX<S>::Zero(1))) return true;
      // one unknown: y must zero every unconstrained stage row v_t + y ds_t
      std::vector<S> candidates;
      for (std::size_t t = 0; t < h.price_incr.size(); ++t) {
        VecX<S> w = g.stage_of(v, static_cast<int>(t) + 1);
        for (int j = 0; j < static_cast<int>(w.size()); ++j) {
          if (h.price_incr[t][j] != S(0)) candidates.push_back(S(-w[j] / h.price_incr[t][j]));
        }
      }
      VecX<S> y(1);
      for (const S& c : candidates) {
        y[0] = c;
        if (finite_at(y)) return true;
      }
      return false;
    }
    default: {
      if (finite_at(VecX<S>::Zero(g.param_dim()))) return true;
      throw std::domain_error("domain analysis unavailable");
    }
  }
}

}  // namespace stochdual
