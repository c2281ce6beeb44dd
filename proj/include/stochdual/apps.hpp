#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stochdual/core.hpp"
#include "stochdual/solve.hpp"

namespace stochdual {

// Builders for the application classes, each reduced to a StochasticProgram,
// plus their class-specific dual machinery and optimality checkers.

// ---- mathematical programming ---------------------------------------------------

template <class S>
struct MathProgSpec {
  std::vector<int> dims;                                 // n_t per stage
  std::vector<ConvexFunction<S>> objective;              // per leaf, over the path
  std::vector<std::vector<ConvexFunction<S>>> constraints;  // per leaf
  int num_ineq = 0;
};

template <class S>
StochasticProgram<S> build_mathprog(TreePtr<S> tree, const MathProgSpec<S>& spec) {
  StochasticProgram<S> sp;
  sp.tree = tree;
  sp.dims = spec.dims;
  const int m = spec.constraints.empty() ? 0 : static_cast<int>(spec.constraints[0].size());
  sp.param_dim = m;
  sp.ubar = RandomVariable<S>(tree, m);
  for (int l = 0; l < tree->num_leaves(); ++l) {
    typename Integrand<S>::MathProg mp;
    mp.objective = spec.objective[l];
    mp.constraints = spec.constraints.empty() ? std::vector<ConvexFunction<S>>{}
                                              : spec.constraints[l];
    mp.num_ineq = spec.num_ineq;
    for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
      if (static_cast<int>(j) >= spec.num_ineq && mp.constraints[j].tag() != FnTag::Affine)
        throw std::invalid_argument("build_mathprog: non-affine equality row");
      if (mp.constraints[j].tag() == FnTag::IndicatorPolyhedron)
        throw std::invalid_argument("build_mathprog: constraint rows must be finite-valued");
    }
    sp.leaf_integrands.push_back(Integrand<S>::mathprog(std::move(mp), spec.dims));
  }
  sp.validate();
  return sp;
}

// Scenariowise KKT system: stationarity through the Lagrangian, cone
// feasibility, and complementarity.
template <class S>
bool mathprog_kkt_check(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                        const DualPoint<S>& d, const S& tol) {
  if (!in_orthogonal_complement(d.p, tol)) return false;
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    const auto& g = sp.leaf_integrands[l];
    const auto& mp = g.template as<typename Integrand<S>::MathProg>();
    VecX<S> xl = sp.leaf_path(x, l);
    VecX<S> pl = sp.leaf_path(d.p, l);
    VecX<S> yl(sp.param_dim);
    for (int i = 0; i < sp.param_dim; ++i) yl[i] = d.y.at(l, i);
    auto lv = g.lagrangian(xl, yl);
    auto cv = g.conjugate(pl, yl);
    if (!lv.value.is_finite() || !cv.value.is_finite()) return false;
    if (lv.viol_hi > tol || lv.viol_lo > tol || cv.violation > tol) return false;
    if (S(lv.value.value() + cv.value.value() - xl.dot(pl)) > tol) return false;
    for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
      S hj = mp.constraints[j].eval_ex(xl).value.value();
      if (static_cast<int>(j) < mp.num_ineq) {
        if (hj > tol || yl[static_cast<int>(j)] < -tol) return false;
      } else if (abs_val(hj) > tol) {
        return false;
      }
      if (abs_val(S(yl[static_cast<int>(j)] * hj)) > tol) return false;
    }
  }
  return true;
}

// ---- optimal stopping ------------------------------------------------------------

template <class S>
struct StoppingSpec {
  AdaptedProcess<S> reward;  // scalar per node
};

template <class S>
StochasticProgram<S> build_stopping(TreePtr<S> tree, const StoppingSpec<S>& spec) {
  if (spec.reward.dims != std::vector<int>(tree->horizon() + 1, 1))
    throw std::invalid_argument("build_stopping: reward must be scalar per node");
  StochasticProgram<S> sp;
  sp.tree = tree;
  sp.dims.assign(tree->horizon() + 1, 1);
  sp.param_dim = 1;
  sp.ubar = RandomVariable<S>(tree, 1);
  for (int l = 0; l < tree->num_leaves(); ++l) {
    sp.ubar.at(l, 0) = S(-1);
    VecX<S> path(tree->horizon() + 1);
    for (int t = 0; t <= tree->horizon(); ++t) path[t] = spec.reward.at(tree->ancestor(l, t), 0);
    sp.leaf_integrands.push_back(Integrand<S>::stopping(path));
  }
  sp.validate();
  return sp;
}

// Minimal supermartingale dominating the reward and zero:
// S_T = max(R_T, 0), S_t = max(R_t, E_t S_{t+1}).
template <class S>
AdaptedProcess<S> snell_envelope(const AdaptedProcess<S>& reward) {
  const auto& tree = *reward.tree;
  AdaptedProcess<S> env(reward.tree, reward.dims);
  for (int node : tree.nodes_at_stage(tree.horizon()))
    env.at(node, 0) = std::max(reward.at(node, 0), S(0));
  for (int t = tree.horizon() - 1; t >= 0; --t) {
    for (int node : tree.nodes_at_stage(t)) {
      S cont(0);
      for (int c : tree.children(node)) cont += tree.prob(c) * env.at(c, 0);
      cont /= tree.prob(node);
      env.at(node, 0) = std::max(reward.at(node, 0), cont);
    }
  }
  return env;
}

// Earliest-optimal stopping rule from the envelope: stop at the first node
// where the reward attains it (and the envelope is positive at T).
template <class S>
AdaptedProcess<S> stopping_rule_from_snell(const AdaptedProcess<S>& reward,
                                           const AdaptedProcess<S>& env, const S& tol = S(0)) {
  const auto& tree = *reward.tree;
  AdaptedProcess<S> stop(reward.tree, reward.dims);
  for (int node = 0; node < tree.num_nodes(); ++node) {
    bool ancestor_stopped = false;
    for (int a = tree.parent(node); a != -1; a = tree.parent(a))
      if (stop.at(a, 0) == S(1)) ancestor_stopped = true;
    if (ancestor_stopped) continue;
    bool attains = abs_val(S(env.at(node, 0) - reward.at(node, 0))) <= tol;
    // a zero envelope means never stopping is equally good; keep x = 0 there
    if (attains && env.at(node, 0) > tol) stop.at(node, 0) = S(1);
  }
  return stop;
}

// Dual point from the envelope's Doob decomposition: y is the terminal value
// of the martingale part, p_t = y - E_t y.
template <class S>
DualPoint<S> stopping_dual_from_snell(const AdaptedProcess<S>& env) {
  const auto& tree = *env.tree;
  auto [m, a] = doob_decomposition(env);
  DualPoint<S> d;
  d.y = RandomVariable<S>(env.tree, 1);
  for (int l = 0; l < tree.num_leaves(); ++l) d.y.at(l, 0) = m.at(tree.leaf_node(l), 0);
  d.p = LeafProcess<S>(env.tree, env.dims);
  for (int t = 0; t <= tree.horizon(); ++t)
    for (int l = 0; l < tree.num_leaves(); ++l)
      d.p.at(t, l, 0) = d.y.at(l, 0) - m.at(tree.ancestor(l, t), 0);
  return d;
}

// Scenariowise optimality of a stopping rule against a dual point:
// dominance p_t + R_t <= y, equality at the stopping time, and the
// complementarity y (sum x - 1) = 0.
template <class S>
bool stopping_certificate_check(const AdaptedProcess<S>& reward, const AdaptedProcess<S>& stop,
                                const DualPoint<S>& d, const S& tol) {
  const auto& tree = *reward.tree;
  if (!in_orthogonal_complement(d.p, tol)) return false;
  for (int l = 0; l < tree.num_leaves(); ++l) {
    const S y = d.y.at(l, 0);
    if (y < -tol) return false;
    int tau = tree.horizon() + 1;
    for (int t = 0; t <= tree.horizon(); ++t) {
      int node = tree.ancestor(l, t);
      if (stop.at(node, 0) == S(1)) {
        tau = t;
        break;
      }
    }
    for (int t = 0; t <= tree.horizon(); ++t) {
      int node = tree.ancestor(l, t);
      S slack = d.p.at(t, l, 0) + reward.at(node, 0) - y;
      if (slack > tol) return false;
      if (t == tau && abs_val(slack) > tol) return false;
    }
    if (tau == tree.horizon() + 1 && abs_val(y) > tol) return false;
  }
  return true;
}

// ---- optimal control ---------------------------------------------------------------

template <class S>
struct ControlSpec {
  int state_dim = 0;
  std::vector<int> control_dims;            // M_t, t = 0..T
  std::vector<std::vector<MatX<S>>> A, B;   // stage t=1..T at index t-1, node-indexed
  AdaptedProcess<S> noise;                  // W_t per node (stage-0 values unused)
  std::vector<std::vector<ConvexFunction<S>>> cost;  // per stage, per node
  std::optional<VecX<S>> x0_pin;
};

template <class S>
StochasticProgram<S> build_control(TreePtr<S> tree, const ControlSpec<S>& spec) {
  const int T = tree->horizon();
  const int N = spec.state_dim;
  StochasticProgram<S> sp;
  sp.tree = tree;
  for (int t = 0; t <= T; ++t) sp.dims.push_back(N + spec.control_dims[t]);
  sp.param_dim = N * T;
  sp.ubar = RandomVariable<S>(tree, sp.param_dim);
  for (int l = 0; l < tree->num_leaves(); ++l) {
    typename Integrand<S>::Control c;
    c.state_dim = N;
    c.control_dims = spec.control_dims;
    for (int t = 1; t <= T; ++t) {
      int node = tree->ancestor(l, t);
      c.A.push_back(spec.A[t - 1][tree->pos_in_stage(node)]);
      c.B.push_back(spec.B[t - 1][tree->pos_in_stage(node)]);
      for (int i = 0; i < N; ++i) sp.ubar.at(l, (t - 1) * N + i) = spec.noise.at(node, i);
    }
    for (int t = 0; t <= T; ++t) {
      int node = tree->ancestor(l, t);
      ConvexFunction<S> L = spec.cost[t][tree->pos_in_stage(node)];
      if (t == 0 && spec.x0_pin) {
        MatX<S> C = MatX<S>::Zero(N, N + spec.control_dims[0]);
        for (int i = 0; i < N; ++i) C(i, i) = S(1);
        auto pin = ConvexFunction<S>::indicator_polyhedron(
            MatX<S>(0, N + spec.control_dims[0]), VecX<S>(0), C, *spec.x0_pin);
        L = ConvexFunction<S>::sum({L, pin});
      }
      c.cost.push_back(L);
    }
    sp.leaf_integrands.push_back(Integrand<S>::control(std::move(c)));
  }
  sp.validate();
  return sp;
}

// Scenariowise maximum principle: the inclusion through the stage costs and
// the system equations, all by Fenchel residuals.
template <class S>
bool control_maximum_principle_check(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                                     const DualPoint<S>& d, const S& tol) {
  if (!in_orthogonal_complement(d.p, tol)) return false;
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    const auto& g = sp.leaf_integrands[l];
    VecX<S> xl = sp.leaf_path(x, l);
    VecX<S> pl = sp.leaf_path(d.p, l);
    VecX<S> yl(sp.param_dim);
    for (int i = 0; i < sp.param_dim; ++i) yl[i] = d.y.at(l, i);
    VecX<S> ul = sp.leaf_param(l);
    auto fe = g.eval(xl, ul);  // includes the system-equation residuals
    auto fc = g.conjugate(pl, yl);
    if (!fe.value.is_finite() || !fc.value.is_finite()) return false;
    if (fe.violation > tol || fc.violation > tol) return false;
    if (abs_val(S(fe.value.value() + fc.value.value() - xl.dot(pl) - ul.dot(yl))) > tol)
      return false;
  }
  return true;
}

// Reduced dual objective over an adapted multiplier process y (stage-0
// values are the y_0 = 0 convention and are ignored).
template <class S>
ExtReal<S> control_reduced_dual_value(const StochasticProgram<S>& sp,
                                      const AdaptedProcess<S>& y) {
  const auto& tree = *sp.tree;
  const int T = tree.horizon();
  ExtReal<S> total(S(0));
  for (int l = 0; l < tree.num_leaves(); ++l) {
    const auto& c = sp.leaf_integrands[l].template as<typename Integrand<S>::Control>();
    for (int t = 1; t <= T; ++t) {
      int node = tree.ancestor(l, t);
      S dot(0);
      for (int i = 0; i < c.state_dim; ++i)
        dot += sp.ubar.at(l, (t - 1) * c.state_dim + i) * y.at(node, i);
      total += ExtReal<S>(S(tree.leaf_prob(l) * dot));
    }
  }
  for (int t = 0; t <= T; ++t) {
    for (int node : tree.nodes_at_stage(t)) {
      // E_t of (Delta y_{t+1} + A*_{t+1} y_{t+1}, B*_{t+1} y_{t+1}) on the atom
      int some_leaf = -1;
      for (int l = 0; l < tree.num_leaves(); ++l)
        if (tree.ancestor(l, t) == node) {
          some_leaf = l;
          break;
        }
      const auto& c = sp.leaf_integrands[some_leaf].template as<typename Integrand<S>::Control>();
      const int N = c.state_dim;
      const int M = c.control_dims[t];
      VecX<S> ws = VecX<S>::Zero(N + M);
      if (t + 1 <= T) {
        for (int ch : tree.children(node)) {
          S w = tree.prob(ch) / tree.prob(node);
          int leaf_ch = -1;
          for (int l = 0; l < tree.num_leaves(); ++l)
            if (tree.ancestor(l, t + 1) == ch) {
              leaf_ch = l;
              break;
            }
          const auto& cc =
              sp.leaf_integrands[leaf_ch].template as<typename Integrand<S>::Control>();
          VecX<S> ynext(N), ynow(N);
          for (int i = 0; i < N; ++i) {
            ynext[i] = y.at(ch, i);
            ynow[i] = t >= 1 ? y.at(node, i) : S(0);
          }
          VecX<S> ax = mat_tvec(cc.A[t], ynext);
          VecX<S> bu = mat_tvec(cc.B[t], ynext);
          for (int i = 0; i < N; ++i) ws[i] += w * (ynext[i] - ynow[i] + ax[i]);
          for (int i = 0; i < M; ++i) ws[N + i] += w * bu[i];
        }
      } else {
        for (int i = 0; i < N; ++i) ws[i] = S(0) - y.at(node, i);
      }
      VecX<S> arg(N + M);
      for (int i = 0; i < N + M; ++i) arg[i] = -ws[i];
      auto lc = c.cost[t].conjugate_ex(arg);
      total += -(tree.prob(node) * lc.fold(S(1e-9)));
    }
  }
  return total;
}

// ---- problems of Lagrange -----------------------------------------------------------

template <class S>
struct LagrangeSpec {
  int dim = 0;
  std::vector<std::vector<ConvexFunction<S>>> running;  // K_t per stage per node
};

template <class S>
StochasticProgram<S> build_lagrange(TreePtr<S> tree, const LagrangeSpec<S>& spec) {
  StochasticProgram<S> sp;
  sp.tree = tree;
  sp.dims.assign(tree->horizon() + 1, spec.dim);
  sp.param_dim = spec.dim * (tree->horizon() + 1);
  sp.ubar = RandomVariable<S>(tree, sp.param_dim);
  for (int l = 0; l < tree->num_leaves(); ++l) {
    typename Integrand<S>::Lagrange lg;
    lg.dim = spec.dim;
    for (int t = 0; t <= tree->horizon(); ++t)
      lg.running.push_back(spec.running[t][tree->pos_in_stage(tree->ancestor(l, t))]);
    sp.leaf_integrands.push_back(Integrand<S>::lagrange(std::move(lg)));
  }
  sp.validate();
  return sp;
}

// Euler-Lagrange inclusion (p_t + Delta y_{t+1}, y_t) in dK_t(x_t, dx_t),
// checked per stage by Fenchel residuals.
template <class S>
bool euler_lagrange_check(const StochasticProgram<S>& sp, const AdaptedProcess<S>& x,
                          const DualPoint<S>& d, const S& tol) {
  if (!in_orthogonal_complement(d.p, tol)) return false;
  const int T = sp.tree->horizon();
  for (int l = 0; l < sp.tree->num_leaves(); ++l) {
    const auto& lg = sp.leaf_integrands[l].template as<typename Integrand<S>::Lagrange>();
    VecX<S> xl = sp.leaf_path(x, l);
    VecX<S> pl = sp.leaf_path(d.p, l);
    for (int t = 0; t <= T; ++t) {
      VecX<S> arg(2 * lg.dim), w(2 * lg.dim);
      for (int i = 0; i < lg.dim; ++i) {
        S xt = xl[t * lg.dim + i];
        S xp = t > 0 ? xl[(t - 1) * lg.dim + i] : S(0);
        arg[i] = xt;
        arg[lg.dim + i] = xt - xp;
        S yt = d.y.at(l, t * lg.dim + i);
        S yn = t < T ? d.y.at(l, (t + 1) * lg.dim + i) : S(0);
        w[i] = pl[t * lg.dim + i] + yn - yt;
        w[lg.dim + i] = yt;
      }
      auto fe = lg.running[t].eval_ex(arg);
      auto fc = lg.running[t].conjugate_ex(w);
      if (!fe.value.is_finite() || !fc.value.is_finite()) return false;
      if (fe.violation > tol || fc.violation > tol) return false;
      if (abs_val(S(fe.value.value() + fc.value.value() - arg.dot(w))) > tol) return false;
    }
  }
  return true;
}

// ---- semi-static hedging -------------------------------------------------------------

template <class S>
struct HedgingSpec {
  AdaptedProcess<S> price;          // s_t, dim J per node
  RandomVariable<S> claim;          // c per leaf, scalar
  RandomVariable<S> static_payoff;  // cbar per leaf, dim Jbar (0 allowed)
  ConvexFunction<S> static_cost = ConvexFunction<S>::zero(0);  // S0
  ConvexFunction<S> loss;                                      // V, scalar
  // D_t per trading stage t = 0..T-1, node-indexed at stage t (empty: free)
  std::vector<std::vector<ConvexFunction<S>>> constraints;
};

// The internal instance prepends a deterministic stage for the static
// portfolio: internal stage 0 holds xbar under a trivial sigma-algebra,
// internal stage t+1 is market stage t, and the terminal position is pinned
// to zero. Returns the program together with the internal tree.
template <class S>
StochasticProgram<S> build_hedging(TreePtr<S> market_tree, const HedgingSpec<S>& spec) {
  const auto& mt = *market_tree;
  const int T = mt.horizon();
  const int J = spec.price.dims[0];
  const int Jbar = spec.static_payoff.dim;

  if (spec.loss.dim() != 1) throw std::invalid_argument("build_hedging: loss must be scalar");
  if (Integrand<S>::loss_nondecreasing(spec.loss)) {
    // fine: the paper's standing assumption
  } else if (spec.loss.tag() == FnTag::ScalarLoss &&
             spec.loss.data().kind == LossKind::Square) {
    if (Jbar > 0)
      throw std::invalid_argument("build_hedging: quadratic loss cannot price static assets");
  } else {
    throw std::invalid_argument("build_hedging: loss must be nondecreasing");
  }
  {
    VecX<S> zero = VecX<S>::Zero(Jbar);
    if (Jbar > 0 && abs_val(S(spec.static_cost.eval_ex(zero).value.value())) > S(0))
      throw std::invalid_argument("build_hedging: S0(0) must vanish");
  }

  // internal tree: super-root + shifted stages (depth-first order preserved)
  std::vector<int> parent{-1}, stage{0};
  std::vector<S> prob{S(1)};
  for (int n = 0; n < mt.num_nodes(); ++n) {
    parent.push_back(mt.parent(n) + 1);
    stage.push_back(mt.stage(n) + 1);
    prob.push_back(mt.prob(n));
  }
  auto tree = std::make_shared<ScenarioTree<S>>(parent, stage, prob);

  StochasticProgram<S> sp;
  sp.tree = tree;
  sp.dims.push_back(Jbar);
  for (int t = 0; t <= T; ++t) sp.dims.push_back(J);
  sp.param_dim = 1;
  sp.ubar = RandomVariable<S>(tree, 1);

  MatX<S> eye = MatX<S>::Identity(J, J);
  auto pin_terminal = ConvexFunction<S>::indicator_polyhedron(MatX<S>(0, J), VecX<S>(0), eye,
                                                              VecX<S>::Zero(J));
  for (int l = 0; l < mt.num_leaves(); ++l) {
    sp.ubar.at(l, 0) = spec.claim.at(l, 0);
    typename Integrand<S>::Hedging h;
    for (int t = 0; t + 1 <= T; ++t) {
      int now = mt.ancestor(l, t);
      int next = mt.ancestor(l, t + 1);
      VecX<S> ds(J);
      for (int j = 0; j < J; ++j) ds[j] = spec.price.at(next, j) - spec.price.at(now, j);
      h.price_incr.push_back(ds);
    }
    h.static_payoff = VecX<S>(Jbar);
    for (int j = 0; j < Jbar; ++j) h.static_payoff[j] = spec.static_payoff.at(l, j);
    h.static_cost = spec.static_cost;
    h.loss = spec.loss;
    for (int t = 0; t + 1 <= T; ++t) {
      if (spec.constraints.empty()) {
        h.constraints.push_back(ConvexFunction<S>::zero(J));
      } else {
        int node = mt.ancestor(l, t);
        h.constraints.push_back(spec.constraints[t][mt.pos_in_stage(node)]);
        VecX<S> zero = VecX<S>::Zero(J);
        if (h.constraints.back().eval_ex(zero).violation > S(0))
          throw std::invalid_argument("build_hedging: 0 must satisfy every D_t");
      }
    }
    h.constraints.push_back(pin_terminal);
    sp.leaf_integrands.push_back(Integrand<S>::hedging(std::move(h)));
  }
  sp.validate();
  return sp;
}

// Reduced dual objective over a scalar leaf multiplier y:
//   E[cy - V*(y)] - sum_t E sigma_{D_t}(E_t[y ds_{t+1}]) - (E[y] S0)*(E[y cbar]).
template <class S>
ExtReal<S> hedging_reduced_dual_value(const StochasticProgram<S>& sp, const RandomVariable<S>& y,
                                      const S& dom_tol = S(0)) {
  const auto& tree = *sp.tree;
  ExtReal<S> total(S(0));
  const int T = tree.horizon() - 1;  // market horizon
  for (int l = 0; l < tree.num_leaves(); ++l) {
    const auto& h = sp.leaf_integrands[l].template as<typename Integrand<S>::Hedging>();
    VecX<S> yl(1);
    yl[0] = y.at(l, 0);
    auto vc = h.loss.conjugate_ex(yl);
    total += tree.leaf_prob(l) *
             (ExtReal<S>(S(sp.ubar.at(l, 0) * y.at(l, 0))) - vc.fold(dom_tol));
  }
  // sigma_{D_t}(E_t[y ds_{t+1}]) on the stage-(t+1) atoms of the internal tree
  for (int t = 0; t + 1 <= T; ++t) {
    for (int node : tree.nodes_at_stage(t + 1)) {
      int some_leaf = -1;
      for (int l = 0; l < tree.num_leaves(); ++l)
        if (tree.ancestor(l, t + 1) == node) {
          some_leaf = l;
          break;
        }
      const auto& h = sp.leaf_integrands[some_leaf].template as<typename Integrand<S>::Hedging>();
      const int J = static_cast<int>(h.price_incr[t].size());
      VecX<S> e = VecX<S>::Zero(J);
      S mass(0);
      for (int l = 0; l < tree.num_leaves(); ++l) {
        if (tree.ancestor(l, t + 1) != node) continue;
        const auto& hl = sp.leaf_integrands[l].template as<typename Integrand<S>::Hedging>();
        for (int j = 0; j < J; ++j) e[j] += tree.leaf_prob(l) * y.at(l, 0) * hl.price_incr[t][j];
        mass += tree.leaf_prob(l);
      }
      for (int j = 0; j < J; ++j) e[j] /= mass;
      auto sv = h.constraints[t].conjugate_ex(e);
      total += -(tree.prob(node) * sv.fold(dom_tol));
    }
  }
  // static part
  const auto& h0 = sp.leaf_integrands[0].template as<typename Integrand<S>::Hedging>();
  const int Jbar = static_cast<int>(h0.static_payoff.size());
  if (Jbar > 0) {
    S ey(0);
    VecX<S> eyc = VecX<S>::Zero(Jbar);
    for (int l = 0; l < tree.num_leaves(); ++l) {
      const auto& hl = sp.leaf_integrands[l].template as<typename Integrand<S>::Hedging>();
      ey += tree.leaf_prob(l) * y.at(l, 0);
      for (int j = 0; j < Jbar; ++j) eyc[j] += tree.leaf_prob(l) * y.at(l, 0) * hl.static_payoff[j];
    }
    if (ey > S(0)) {
      VecX<S> arg(Jbar);
      for (int j = 0; j < Jbar; ++j) arg[j] = eyc[j] / ey;
      auto sc = h0.static_cost.conjugate_ex(arg);
      ExtReal<S> val = sc.fold(dom_tol);
      if (val.is_finite())
        total += -ExtReal<S>(S(ey * val.value()));
      else
        total += -val;
    } else {
      if (inf_norm<S>(eyc) > dom_tol) total += ExtReal<S>::neg_inf();
    }
  }
  return total;
}

// Dual point from a reduced-dual multiplier: p_t = E_t[y ds_{t+1}] - y ds_{t+1}
// on trading stages, the calibration combination on the static stage.
template <class S>
DualPoint<S> hedging_dual_from_y(const StochasticProgram<S>& sp, const RandomVariable<S>& y) {
  const auto& tree = *sp.tree;
  DualPoint<S> d;
  d.y = y;
  d.p = LeafProcess<S>(sp.tree, sp.dims);
  const int T = tree.horizon() - 1;
  for (int t = 0; t + 1 <= T; ++t) {
    RandomVariable<S> yds(sp.tree, sp.dims[t + 1]);
    for (int l = 0; l < tree.num_leaves(); ++l) {
      const auto& hl = sp.leaf_integrands[l].template as<typename Integrand<S>::Hedging>();
      for (int j = 0; j < sp.dims[t + 1]; ++j)
        yds.at(l, j) = y.at(l, 0) * hl.price_incr[t][j];
    }
    auto cond = conditional_expectation(yds, t + 1);
    for (int l = 0; l < tree.num_leaves(); ++l)
      for (int j = 0; j < sp.dims[t + 1]; ++j)
        d.p.at(t + 1, l, j) = cond.at(l, j) - yds.at(l, j);
  }
  const auto& h0 = sp.leaf_integrands[0].template as<typename Integrand<S>::Hedging>();
  const int Jbar = static_cast<int>(h0.static_payoff.size());
  if (Jbar > 0) {
    S ey(0);
    VecX<S> eyc = VecX<S>::Zero(Jbar);
    for (int l = 0; l < tree.num_leaves(); ++l) {
      const auto& hl = sp.leaf_integrands[l].template as<typename Integrand<S>::Hedging>();
      ey += tree.leaf_prob(l) * y.at(l, 0);
      for (int j = 0; j < Jbar; ++j) eyc[j] += tree.leaf_prob(l) * y.at(l, 0) * hl.static_payoff[j];
    }
    for (int l = 0; l < tree.num_leaves(); ++l) {
      const auto& hl = sp.leaf_integrands[l].template as<typename Integrand<S>::Hedging>();
      for (int j = 0; j < Jbar; ++j) {
        S mean = ey > S(0) ? S(eyc[j] / ey) : S(0);
        d.p.at(0, l, j) = mean * y.at(l, 0) - y.at(l, 0) * hl.static_payoff[j];
      }
    }
  }
  return d;
}

// ---- no-arbitrage and calibration ------------------------------------------------------

template <class S>
struct NoArbitrageReport {
  bool holds = false;
  std::optional<AdaptedProcess<S>> witness;
};

// LP: maximize expected trading gains over adapted strategies with
// nonnegative scenariowise gains and a unit box; arbitrage iff positive.
template <class S>
NoArbitrageReport<S> no_arbitrage_check(TreePtr<S> tree, const AdaptedProcess<S>& price) {
  const auto& mt = *tree;
  const int T = mt.horizon();
  const int J = price.dims[0];
  // variables: x_t per node for t = 0..T-1
  std::vector<int> offset(mt.num_nodes(), -1);
  int total = 0;
  for (int n = 0; n < mt.num_nodes(); ++n)
    if (mt.stage(n) < T) {
      offset[n] = total;
      total += J;
    }
  const int L = mt.num_leaves();
  MatX<S> A = MatX<S>::Zero(L + 2 * total, total);
  VecX<S> b = VecX<S>::Zero(L + 2 * total);
  VecX<S> c = VecX<S>::Zero(total);
  for (int l = 0; l < L; ++l) {
    for (int t = 0; t + 1 <= T; ++t) {
      int now = mt.ancestor(l, t);
      int next = mt.ancestor(l, t + 1);
      for (int j = 0; j < J; ++j) {
        S ds = price.at(next, j) - price.at(now, j);
        A(l, offset[now] + j) -= ds;               // gains >= 0 per leaf
        c[offset[now] + j] -= mt.leaf_prob(l) * ds;  // maximize expected gains
      }
    }
  }
  for (int v = 0; v < total; ++v) {
    A(L + 2 * v, v) = S(1);
    b[L + 2 * v] = S(1);
    A(L + 2 * v + 1, v) = S(-1);
    b[L + 2 * v + 1] = S(1);
  }
  auto lp = solve_lp<S>(A, b, MatX<S>(0, total), VecX<S>(0), c);
  if (lp.status != LpStatus::Optimal) throw std::runtime_error("no-arbitrage LP failed");
  NoArbitrageReport<S> rep;
  S tol(0);
  if constexpr (std::is_same_v<S, double>) tol = 1e-9;
  if (-lp.objective <= tol) {
    rep.holds = true;
    return rep;
  }
  AdaptedProcess<S> w(tree, std::vector<int>(T + 1, J));
  for (int n = 0; n < mt.num_nodes(); ++n)
    if (offset[n] >= 0)
      for (int j = 0; j < J; ++j) w.at(n, j) = lp.z[offset[n] + j];
  rep.witness = std::move(w);
  return rep;
}

// E^Q cbar in dom S0* (recession cone of dom S0* when the mass vanishes).
template <class S>
bool calibration_check(TreePtr<S> tree, const RandomVariable<S>& y,
                       const RandomVariable<S>& cbar, const ConvexFunction<S>& cost0,
                       const S& tol) {
  const auto& mt = *tree;
  S ey(0);
  VecX<S> eyc = VecX<S>::Zero(cbar.dim);
  for (int l = 0; l < mt.num_leaves(); ++l) {
    ey += mt.leaf_prob(l) * y.at(l, 0);
    for (int j = 0; j < cbar.dim; ++j) eyc[j] += mt.leaf_prob(l) * y.at(l, 0) * cbar.at(l, j);
  }
  if (ey > tol) {
    VecX<S> q(cbar.dim);
    for (int j = 0; j < cbar.dim; ++j) q[j] = eyc[j] / ey;
    auto c = cost0.conjugate_ex(q);
    return c.value.is_finite() && !(c.violation > tol);
  }
  // zero mass: membership in the recession cone of dom S0*
  switch (cost0.tag()) {
    case FnTag::SupportBox:
    case FnTag::Affine:
      return !(inf_norm<S>(eyc) > tol);  // bounded domain, cone {0}
    case FnTag::Quadratic:
      return true;  // full domain
    default:
      throw std::domain_error("calibration_check: recession of dom S0* unavailable");
  }
}

}  // namespace stochdual
