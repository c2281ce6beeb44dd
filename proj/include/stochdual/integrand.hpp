#pragma once

#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "stochdual/convex.hpp"
#include "stochdual/qpform.hpp"

namespace stochdual {

// Scenariowise integrand f(x, u) over a trajectory block x and a parameter
// block u. Besides a generic catalogue function over the joint variable, the
// structured kinds carry the closed-form conjugate and Lagrangian of their
// problem class, which is what keeps dual objectives and certificates exact.

template <class S>
struct LagrangianVal {
  ExtReal<S> value;
  S viol_hi{0};  // distance to the x-side domain (towards +inf)
  S viol_lo{0};  // distance to the y-side domain (towards -inf)
  bool exact = true;

  ExtReal<S> fold(const S& tol) const {
    if (viol_hi > tol) return ExtReal<S>::pos_inf();
    if (viol_lo > tol) return ExtReal<S>::neg_inf();
    return value;
  }
};

// inf_u { f(x, u) - u.y } for a joint catalogue function with the first nx
// coordinates fixed. Closed for quadratics and for sums whose parts touch
// only one of the blocks; otherwise a flagged grid fallback.
template <class S>
struct PartialMin {
  LagrangianVal<S> val;
  std::optional<VecX<S>> xgrad;  // d/dx of the partial minimum when available
};

template <class S>
PartialMin<S> infimal_u(const ConvexFunction<S>& f, int nx, const VecX<S>& x, const VecX<S>& y);

namespace detail {

template <class S>
VecX<S> concat(const VecX<S>& a, const VecX<S>& b) {
  VecX<S> out(a.size() + b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = a[i];
  for (Eigen::Index i = 0; i < b.size(); ++i) out[a.size() + i] = b[i];
  return out;
}

template <class S>
VecX<S> segment(const VecX<S>& v, int lo, int len) {
  VecX<S> out(len);
  for (int i = 0; i < len; ++i) out[i] = v[lo + i];
  return out;
}

template <class S>
PartialMin<S> numeric_infimal_u(const ConvexFunction<S>& f, int nx, const VecX<S>& x,
                                const VecX<S>& y) {
  if constexpr (std::is_same_v<S, double>) {
    const int m = f.dim() - nx;
    if (m > 2) throw std::domain_error("lagrangian: no closed form and parameter too large");
    VecX<S> u = VecX<S>::Zero(m);
    double best = 1e300;
    bool any = false;
    std::vector<long> idx(m, 0);
    const double lo = -10.0, step = 1e-3;
    const long count = static_cast<long>(20.0 / step) + 1;
    while (true) {
      for (int i = 0; i < m; ++i) u[i] = lo + static_cast<double>(idx[i]) * step;
      auto fv = f.eval(concat(x, u));
      if (fv.is_finite()) {
        double cand = fv.value() - u.dot(y);
        if (!any || cand < best) {
          best = cand;
          any = true;
        }
      }
      int k = 0;
      while (k < m && ++idx[k] >= count) idx[k++] = 0;
      if (k == m) break;
    }
    PartialMin<S> out;
    out.val.exact = false;
    out.val.value = any ? ExtReal<S>(best) : ExtReal<S>::pos_inf();
    return out;
  } else {
    throw std::domain_error("lagrangian: no closed form in exact mode");
  }
}

}  // namespace detail

template <class S>
PartialMin<S> infimal_u(const ConvexFunction<S>& f, int nx, const VecX<S>& x, const VecX<S>& y) {
  const int m = f.dim() - nx;
  if (static_cast<int>(x.size()) != nx || static_cast<int>(y.size()) != m)
    throw std::invalid_argument("infimal_u: dimension mismatch");
  const auto& d = f.data();
  switch (f.tag()) {
    case FnTag::Affine: {
      PartialMin<S> out;
      S val(d.b);
      for (int i = 0; i < nx; ++i) val += d.a[i] * x[i];
      for (int i = 0; i < m; ++i)
        out.val.viol_lo = std::max(out.val.viol_lo, abs_val(S(d.a[nx + i] - y[i])));
      out.val.value = ExtReal<S>(val);
      out.xgrad = detail::segment(d.a, 0, nx);
      return out;
    }
    case FnTag::Quadratic: {
      // stationarity: Quu u = y - au - Qux x
      MatX<S> Quu(m, m), Qux(m, nx), Qxx(nx, nx);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) Quu(i, j) = d.Q(nx + i, nx + j);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < nx; ++j) Qux(i, j) = d.Q(nx + i, j);
      for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) Qxx(i, j) = d.Q(i, j);
      VecX<S> rhs = y - detail::segment(d.a, nx, m) - mat_vec(Qux, x);
      auto sol = solve_linear<S>(Quu, rhs);
      PartialMin<S> out;
      if (!sol.consistent) {
        out.val.value = ExtReal<S>::neg_inf();
        out.val.viol_lo = sol.residual;
        return out;
      }
      VecX<S> u = sol.x;
      VecX<S> xu = detail::concat(x, u);
      S fval = quad_form(d.Q, xu) / S(2) + d.a.dot(xu) + d.b;
      out.val.value = ExtReal<S>(S(fval - u.dot(y)));
      out.xgrad = VecX<S>(mat_vec(Qxx, x) + mat_tvec(Qux, u) + detail::segment(d.a, 0, nx));
      return out;
    }
    case FnTag::Sum: {
      // partition parts into x-only and u-only blocks
      std::vector<ConvexFunction<S>> uparts;
      PartialMin<S> out;
      out.xgrad = VecX<S>::Zero(nx);
      for (const auto& part : d.parts) {
        auto mask = depends_mask(part);
        bool on_x = false, on_u = false;
        for (int i = 0; i < nx; ++i) on_x = on_x || mask[i];
        for (int i = nx; i < f.dim(); ++i) on_u = on_u || mask[i];
        if (on_x && on_u) return detail::numeric_infimal_u(f, nx, x, y);
        if (on_u) {
          auto r = restrict_to_block(part, nx, m);
          if (!r) return detail::numeric_infimal_u(f, nx, x, y);
          uparts.push_back(*r);
        } else {
          auto r = restrict_to_block(part, 0, nx);
          if (!r) return detail::numeric_infimal_u(f, nx, x, y);
          auto ev = r->eval_ex(x);
          out.val.value += ev.value;
          out.val.viol_hi = std::max(out.val.viol_hi, ev.violation);
          out.val.exact = out.val.exact && ev.exact;
          *out.xgrad += r->subgradient_select(x);
        }
      }
      if (!uparts.empty()) {
        auto ufn = uparts.size() == 1 ? uparts[0] : ConvexFunction<S>::sum(uparts);
        auto c = ufn.conjugate_ex(y);  // inf_u h(u) - u.y = -h*(y)
        out.val.value += -c.value;
        out.val.viol_lo = std::max(out.val.viol_lo, c.violation);
        out.val.exact = out.val.exact && c.exact;
      } else {
        for (int i = 0; i < m; ++i) out.val.viol_lo = std::max(out.val.viol_lo, abs_val(y[i]));
      }
      return out;
    }
    default:
      return detail::numeric_infimal_u(f, nx, x, y);
  }
}

template <class S>
class Integrand {
 public:
  enum class Kind { Generic, MathProg, Stopping, Control, Lagrange, Hedging };

  struct Generic {
    ConvexFunction<S> joint;  // over (x; u)
    int param_dim = 0;
  };
  struct MathProg {
    ConvexFunction<S> objective;
    std::vector<ConvexFunction<S>> constraints;  // finite-valued; affine after num_ineq
    int num_ineq = 0;
  };
  struct Stopping {
    VecX<S> reward;  // R_t along this leaf's path
  };
  struct Control {
    int state_dim = 0;
    std::vector<int> control_dims;        // M_t, t = 0..T
    std::vector<MatX<S>> A, B;            // A_t, B_t for t = 1..T at index t-1
    std::vector<ConvexFunction<S>> cost;  // L_t over (X_t, U_t)
  };
  struct Lagrange {
    int dim = 0;                             // d
    std::vector<ConvexFunction<S>> running;  // K_t over (x_t, dx_t)
  };
  struct Hedging {
    std::vector<VecX<S>> price_incr;  // ds_{t+1} along the path, t = 0..T-1
    VecX<S> static_payoff;            // cbar (may be empty)
    ConvexFunction<S> static_cost;    // S0, finite on R^{Jbar}
    ConvexFunction<S> loss;           // V, one-dimensional
    std::vector<ConvexFunction<S>> constraints;  // D_t per trading stage 0..T
  };

  static Integrand generic(ConvexFunction<S> joint, int param_dim,
                           std::vector<int> stage_dims) {
    Integrand g;
    g.data_ = Generic{std::move(joint), param_dim};
    g.stage_dims_ = std::move(stage_dims);
    g.finish();
    return g;
  }
  static Integrand mathprog(MathProg mp, std::vector<int> stage_dims) {
    Integrand g;
    g.data_ = std::move(mp);
    g.stage_dims_ = std::move(stage_dims);
    g.finish();
    return g;
  }
  static Integrand stopping(VecX<S> reward) {
    Integrand g;
    const int stages = static_cast<int>(reward.size());
    g.data_ = Stopping{std::move(reward)};
    g.stage_dims_.assign(stages, 1);
    g.finish();
    return g;
  }
  static Integrand control(Control c) {
    Integrand g;
    for (std::size_t t = 0; t < c.cost.size(); ++t)
      if (c.cost[t].dim() != c.state_dim + c.control_dims[t])
        throw std::invalid_argument("control integrand: stage cost dimension");
    for (int t = 0; t < static_cast<int>(c.cost.size()); ++t)
      g.stage_dims_.push_back(c.state_dim + c.control_dims[t]);
    g.data_ = std::move(c);
    g.finish();
    return g;
  }
  static Integrand lagrange(Lagrange l) {
    Integrand g;
    for (const auto& k : l.running)
      if (k.dim() != 2 * l.dim) throw std::invalid_argument("lagrange integrand: K dimension");
    g.stage_dims_.assign(l.running.size(), l.dim);
    g.data_ = std::move(l);
    g.finish();
    return g;
  }
  static Integrand hedging(Hedging h) {
    Integrand g;
    if (h.loss.dim() != 1) throw std::invalid_argument("hedging integrand: loss must be scalar");
    const int horizon = static_cast<int>(h.price_incr.size());  // market horizon T
    const int assets = horizon > 0 ? static_cast<int>(h.price_incr[0].size()) : 0;
    if (static_cast<int>(h.constraints.size()) != horizon + 1)
      throw std::invalid_argument("hedging integrand: need constraints for stages 0..T");
    g.stage_dims_.push_back(static_cast<int>(h.static_payoff.size()));
    for (int t = 0; t <= horizon; ++t) g.stage_dims_.push_back(assets);
    g.data_ = std::move(h);
    g.finish();
    return g;
  }

  Kind kind() const { return static_cast<Kind>(data_.index()); }
  const std::vector<int>& stage_dims() const { return stage_dims_; }
  int path_dim() const { return path_dim_; }
  int param_dim() const { return param_dim_; }

  template <class K>
  const K& as() const {
    return std::get<K>(data_);
  }

  bool is_polyhedral() const {
    bool ok = true;
    for_each_fn([&](const ConvexFunction<S>& f) { ok = ok && f.is_polyhedral(); });
    return ok;
  }
  bool is_qp_representable() const {
    bool ok = true;
    for_each_fn([&](const ConvexFunction<S>& f) { ok = ok && f.is_qp_representable(); });
    if (kind() == Kind::Hedging) {
      // a curved non-monotone loss composed with a piecewise-linear static
      // cost would not lower to a convex QP
      const auto& h = as<Hedging>();
      if (h.static_payoff.size() > 0 && !loss_nondecreasing(h.loss)) ok = false;
    }
    return ok;
  }

  static bool loss_nondecreasing(const ConvexFunction<S>& v) {
    if (v.tag() == FnTag::ScalarLoss) {
      auto k = v.data().kind;
      if (k == LossKind::Square) return false;
      if (k == LossKind::LinearIndicator) return v.data().scale >= S(0);
      return true;  // hinge, exponential
    }
    if (v.tag() == FnTag::Sum) {
      for (const auto& p : v.data().parts)
        if (!loss_nondecreasing(p)) return false;
      return true;
    }
    if (v.tag() == FnTag::Affine) return v.data().a[0] >= S(0);
    return false;
  }

  // ---- f(x, u) ---------------------------------------------------------------

  Valuation<S> eval(const VecX<S>& x, const VecX<S>& u) const {
    check_dims(x, u);
    switch (kind()) {
      case Kind::Generic:
        return as<Generic>().joint.eval_ex(detail::concat(x, u));
      case Kind::MathProg: {
        const auto& mp = as<MathProg>();
        auto out = mp.objective.eval_ex(x);
        for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
          auto cj = mp.constraints[j].eval_ex(x);
          if (!cj.value.is_finite()) return {ExtReal<S>::pos_inf(), S(0), true};
          out.violation = std::max(out.violation, cj.violation);
          S slack = S(cj.value.value() + u[static_cast<int>(j)]);
          if (static_cast<int>(j) < mp.num_ineq)
            out.violation = std::max(out.violation, slack);
          else
            out.violation = std::max(out.violation, abs_val(slack));
          out.exact = out.exact && cj.exact;
        }
        return out;
      }
      case Kind::Stopping: {
        const auto& st = as<Stopping>();
        S val(0), sum(0), viol(0);
        for (int t = 0; t < path_dim_; ++t) {
          val -= st.reward[t] * x[t];
          sum += x[t];
          viol = std::max(viol, S(-x[t]));
        }
        viol = std::max(viol, S(sum + u[0]));
        return {ExtReal<S>(val), std::max(viol, S(0)), true};
      }
      case Kind::Control: {
        const auto& c = as<Control>();
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          auto lv = c.cost[t].eval_ex(stage_of(x, t));
          out.value += lv.value;
          out.violation = std::max(out.violation, lv.violation);
          out.exact = out.exact && lv.exact;
        }
        for (int t = 1; t <= T; ++t) {
          VecX<S> r = system_residual(c, x, t);
          for (int i = 0; i < c.state_dim; ++i)
            out.violation =
                std::max(out.violation, abs_val(S(r[i] - u[(t - 1) * c.state_dim + i])));
        }
        return out;
      }
      case Kind::Lagrange: {
        const auto& lg = as<Lagrange>();
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> arg(2 * lg.dim);
          for (int i = 0; i < lg.dim; ++i) {
            S xt = x[t * lg.dim + i];
            S xprev = t > 0 ? x[(t - 1) * lg.dim + i] : S(0);
            arg[i] = xt;
            arg[lg.dim + i] = xt - xprev + u[t * lg.dim + i];
          }
          auto kv = lg.running[t].eval_ex(arg);
          out.value += kv.value;
          out.violation = std::max(out.violation, kv.violation);
          out.exact = out.exact && kv.exact;
        }
        return out;
      }
      case Kind::Hedging: {
        const auto& h = as<Hedging>();
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        VecX<S> arg(1);
        arg[0] = hedge_argument(h, x, u[0]);
        auto lv = h.loss.eval_ex(arg);
        out.value += lv.value;
        out.violation = lv.violation;
        out.exact = lv.exact;
        for (std::size_t t = 0; t < h.constraints.size(); ++t) {
          auto dv = h.constraints[t].eval_ex(stage_of(x, static_cast<int>(t) + 1));
          out.value += dv.value;
          out.violation = std::max(out.violation, dv.violation);
        }
        return out;
      }
    }
    throw std::logic_error("unreachable");
  }

  // ---- f*(v, y) --------------------------------------------------------------

  Valuation<S> conjugate(const VecX<S>& v, const VecX<S>& y) const {
    check_dims(v, y);
    switch (kind()) {
      case Kind::Generic:
        return as<Generic>().joint.conjugate_ex(detail::concat(v, y));
      case Kind::MathProg: {
        const auto& mp = as<MathProg>();
        Valuation<S> pre{ExtReal<S>(S(0)), S(0), true};
        std::vector<ConvexFunction<S>> combo{mp.objective};
        for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
          const S yj = y[static_cast<int>(j)];
          if (static_cast<int>(j) < mp.num_ineq) {
            pre.violation = std::max(pre.violation, S(-yj));
            if (yj > S(0)) combo.push_back(mp.constraints[j].scaled(yj));
          } else {
            // affine row, any sign
            const auto& a = mp.constraints[j].data();
            combo.push_back(ConvexFunction<S>::affine(scale_vec(yj, a.a), S(yj * a.b)));
          }
        }
        auto c = (combo.size() == 1 ? combo[0] : ConvexFunction<S>::sum(combo)).conjugate_ex(v);
        c.violation = std::max(c.violation, pre.violation);
        return c;
      }
      case Kind::Stopping: {
        const auto& st = as<Stopping>();
        S viol = std::max(S(0), S(-y[0]));
        for (int t = 0; t < path_dim_; ++t)
          viol = std::max(viol, S(v[t] + st.reward[t] - y[0]));
        return {ExtReal<S>(S(0)), viol, true};
      }
      case Kind::Control: {
        const auto& c = as<Control>();
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> w = stage_of(v, t);
          VecX<S> yt = control_multiplier(c, y, t);      // y_t (zero at t=0)
          VecX<S> yn = control_multiplier(c, y, t + 1);  // y_{t+1} (zero past T)
          for (int i = 0; i < c.state_dim; ++i) w[i] -= yn[i] - yt[i];
          if (t + 1 <= T) {
            VecX<S> ax = mat_tvec(c.A[t], yn);
            VecX<S> bu = mat_tvec(c.B[t], yn);
            for (int i = 0; i < c.state_dim; ++i) w[i] -= ax[i];
            for (int i = 0; i < c.control_dims[t]; ++i) w[c.state_dim + i] -= bu[i];
          }
          auto cv = c.cost[t].conjugate_ex(w);
          out.value += cv.value;
          out.violation = std::max(out.violation, cv.violation);
          out.exact = out.exact && cv.exact;
        }
        return out;
      }
      case Kind::Lagrange: {
        const auto& lg = as<Lagrange>();
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> arg(2 * lg.dim);
          for (int i = 0; i < lg.dim; ++i) {
            S yt = y[t * lg.dim + i];
            S yn = t < T ? y[(t + 1) * lg.dim + i] : S(0);
            arg[i] = v[t * lg.dim + i] + yn - yt;
            arg[lg.dim + i] = yt;
          }
          auto kv = lg.running[t].conjugate_ex(arg);
          out.value += kv.value;
          out.violation = std::max(out.violation, kv.violation);
          out.exact = out.exact && kv.exact;
        }
        return out;
      }
      case Kind::Hedging:
        return hedging_conjugate(as<Hedging>(), v, y[0]);
    }
    throw std::logic_error("unreachable");
  }

  // ---- l(x, y) = inf_u { f(x,u) - u.y } ---------------------------------------

  LagrangianVal<S> lagrangian(const VecX<S>& x, const VecX<S>& y) const {
    if (static_cast<int>(x.size()) != path_dim_ || static_cast<int>(y.size()) != param_dim_)
      throw std::invalid_argument("lagrangian: dimension mismatch");
    switch (kind()) {
      case Kind::Generic:
        return infimal_u(as<Generic>().joint, path_dim_, x, y).val;
      case Kind::MathProg: {
        const auto& mp = as<MathProg>();
        LagrangianVal<S> out;
        auto f0 = mp.objective.eval_ex(x);
        out.value = f0.value;
        out.viol_hi = f0.violation;
        out.exact = f0.exact;
        for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
          const S yj = y[static_cast<int>(j)];
          if (static_cast<int>(j) < mp.num_ineq) out.viol_lo = std::max(out.viol_lo, S(-yj));
          auto cj = mp.constraints[j].eval_ex(x);
          out.viol_hi = std::max(out.viol_hi, cj.violation);
          out.value += ExtReal<S>(S(yj * cj.value.value()));
        }
        return out;
      }
      case Kind::Stopping: {
        const auto& st = as<Stopping>();
        LagrangianVal<S> out;
        S val(0);
        for (int t = 0; t < path_dim_; ++t) {
          val += x[t] * (y[0] - st.reward[t]);
          out.viol_hi = std::max(out.viol_hi, S(-x[t]));
        }
        out.viol_lo = std::max(S(0), S(-y[0]));
        out.value = ExtReal<S>(val);
        return out;
      }
      case Kind::Control: {
        const auto& c = as<Control>();
        LagrangianVal<S> out;
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          auto lv = c.cost[t].eval_ex(stage_of(x, t));
          out.value += lv.value;
          out.viol_hi = std::max(out.viol_hi, lv.violation);
          out.exact = out.exact && lv.exact;
        }
        for (int t = 1; t <= T; ++t) {
          VecX<S> r = system_residual(c, x, t);
          VecX<S> yt = control_multiplier(c, y, t);
          out.value += ExtReal<S>(S(-r.dot(yt)));
        }
        return out;
      }
      case Kind::Lagrange: {
        const auto& lg = as<Lagrange>();
        LagrangianVal<S> out;
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> xt = detail::segment(x, t * lg.dim, lg.dim);
          VecX<S> yt = detail::segment(y, t * lg.dim, lg.dim);
          auto h = infimal_u(lg.running[t], lg.dim, xt, yt);
          out.value += h.val.value;
          out.viol_hi = std::max(out.viol_hi, h.val.viol_hi);
          out.viol_lo = std::max(out.viol_lo, h.val.viol_lo);
          out.exact = out.exact && h.val.exact;
          for (int i = 0; i < lg.dim; ++i) {
            S dx = x[t * lg.dim + i] - (t > 0 ? x[(t - 1) * lg.dim + i] : S(0));
            out.value += ExtReal<S>(S(dx * yt[i]));
          }
        }
        return out;
      }
      case Kind::Hedging: {
        const auto& h = as<Hedging>();
        LagrangianVal<S> out;
        VecX<S> yv(1);
        yv[0] = y[0];
        auto vc = h.loss.conjugate_ex(yv);
        out.value = -vc.value;
        out.viol_lo = vc.violation;
        out.exact = vc.exact;
        // y (S0(xbar) - cbar.xbar - sum x.ds)
        const int jbar = static_cast<int>(h.static_payoff.size());
        S gain(0);
        if (jbar > 0) {
          VecX<S> xbar = detail::segment(x, 0, jbar);
          auto s0 = h.static_cost.eval_ex(xbar);
          out.viol_hi = std::max(out.viol_hi, s0.violation);
          gain += s0.value.value() - h.static_payoff.dot(xbar);
        }
        for (std::size_t t = 0; t < h.price_incr.size(); ++t)
          gain -= h.price_incr[t].dot(stage_of(x, static_cast<int>(t) + 1));
        out.value += ExtReal<S>(S(y[0] * gain));
        for (std::size_t t = 0; t < h.constraints.size(); ++t) {
          auto dv = h.constraints[t].eval_ex(stage_of(x, static_cast<int>(t) + 1));
          out.viol_hi = std::max(out.viol_hi, dv.violation);
        }
        return out;
      }
    }
    throw std::logic_error("unreachable");
  }

  // Canonical element of the x-subdifferential of the Lagrangian, used for
  // dual recovery. Ties resolve to the catalogue's canonical selections.
  VecX<S> lagrangian_x_subgradient(const VecX<S>& x, const VecX<S>& y) const {
    switch (kind()) {
      case Kind::Generic: {
        auto pm = infimal_u(as<Generic>().joint, path_dim_, x, y);
        if (!pm.xgrad) throw std::domain_error("subgradient selection unavailable");
        return *pm.xgrad;
      }
      case Kind::MathProg: {
        const auto& mp = as<MathProg>();
        VecX<S> g = mp.objective.subgradient_select(x);
        for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
          const S yj = y[static_cast<int>(j)];
          if (yj == S(0)) continue;
          g += scale_vec(yj, mp.constraints[j].subgradient_select(x));
        }
        return g;
      }
      case Kind::Stopping: {
        const auto& st = as<Stopping>();
        VecX<S> g(path_dim_);
        for (int t = 0; t < path_dim_; ++t) g[t] = y[0] - st.reward[t];
        return g;
      }
      case Kind::Control: {
        const auto& c = as<Control>();
        VecX<S> g = VecX<S>::Zero(path_dim_);
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> gl = c.cost[t].subgradient_select(stage_of(x, t));
          VecX<S> yt = control_multiplier(c, y, t);
          VecX<S> yn = control_multiplier(c, y, t + 1);
          const int off = stage_offset(t);
          for (int i = 0; i < c.state_dim; ++i) g[off + i] = gl[i] + yn[i] - yt[i];
          if (t + 1 <= T) {
            VecX<S> ax = mat_tvec(c.A[t], yn);
            VecX<S> bu = mat_tvec(c.B[t], yn);
            for (int i = 0; i < c.state_dim; ++i) g[off + i] += ax[i];
            for (int i = 0; i < c.control_dims[t]; ++i)
              g[off + c.state_dim + i] = gl[c.state_dim + i] + bu[i];
          } else {
            for (int i = 0; i < c.control_dims[t]; ++i)
              g[off + c.state_dim + i] = gl[c.state_dim + i];
          }
        }
        return g;
      }
      case Kind::Lagrange: {
        const auto& lg = as<Lagrange>();
        VecX<S> g = VecX<S>::Zero(path_dim_);
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> xt = detail::segment(x, t * lg.dim, lg.dim);
          VecX<S> yt = detail::segment(y, t * lg.dim, lg.dim);
          auto h = infimal_u(lg.running[t], lg.dim, xt, yt);
          if (!h.xgrad) throw std::domain_error("subgradient selection unavailable");
          for (int i = 0; i < lg.dim; ++i) {
            S yn = t < T ? y[(t + 1) * lg.dim + i] : S(0);
            g[t * lg.dim + i] = (*h.xgrad)[i] + yt[i] - yn;
          }
        }
        return g;
      }
      case Kind::Hedging: {
        const auto& h = as<Hedging>();
        VecX<S> g = VecX<S>::Zero(path_dim_);
        const int jbar = static_cast<int>(h.static_payoff.size());
        if (jbar > 0) {
          VecX<S> xbar = detail::segment(x, 0, jbar);
          VecX<S> s0g = h.static_cost.subgradient_select(xbar);
          for (int i = 0; i < jbar; ++i) g[i] = y[0] * (s0g[i] - h.static_payoff[i]);
        }
        for (std::size_t t = 0; t < h.price_incr.size(); ++t) {
          const int off = stage_offset(static_cast<int>(t) + 1);
          for (int j = 0; j < static_cast<int>(h.price_incr[t].size()); ++j)
            g[off + j] = -y[0] * h.price_incr[t][j];
        }
        return g;
      }
    }
    throw std::logic_error("unreachable");
  }

  // y candidate from the primal point alone (marginal value of the
  // parameter); used when the solver provides no usable multipliers.
  VecX<S> extract_y_primal(const VecX<S>& x, const VecX<S>& u) const {
    switch (kind()) {
      case Kind::Hedging: {
        const auto& h = as<Hedging>();
        VecX<S> arg(1);
        arg[0] = hedge_argument(h, x, u[0]);
        return h.loss.subgradient_select(arg);
      }
      case Kind::Generic: {
        const auto& gn = as<Generic>();
        VecX<S> g = gn.joint.subgradient_select(detail::concat(x, u));
        return detail::segment(g, path_dim_, param_dim_);
      }
      case Kind::Lagrange: {
        const auto& lg = as<Lagrange>();
        VecX<S> y(param_dim_);
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> arg(2 * lg.dim);
          for (int i = 0; i < lg.dim; ++i) {
            S xt = x[t * lg.dim + i];
            S xprev = t > 0 ? x[(t - 1) * lg.dim + i] : S(0);
            arg[i] = xt;
            arg[lg.dim + i] = xt - xprev + u[t * lg.dim + i];
          }
          VecX<S> kg = lg.running[t].subgradient_select(arg);
          for (int i = 0; i < lg.dim; ++i) y[t * lg.dim + i] = kg[lg.dim + i];
        }
        return y;
      }
      default:
        throw std::domain_error("extract_y_primal: unavailable for this integrand");
    }
  }

  // ---- recession f-inf(dx, 0) --------------------------------------------------

  ExtReal<S> recession_x(const VecX<S>& dx) const {
    switch (kind()) {
      case Kind::Generic:
        return as<Generic>().joint.recession(detail::concat(dx, VecX<S>(VecX<S>::Zero(param_dim_))));
      case Kind::MathProg: {
        const auto& mp = as<MathProg>();
        ExtReal<S> total = mp.objective.recession(dx);
        for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
          auto rj = mp.constraints[j].recession(dx);
          if (!rj.is_finite()) return ExtReal<S>::pos_inf();
          const S rv = rj.value();
          if (static_cast<int>(j) < mp.num_ineq ? rv > S(0) : rv != S(0))
            return ExtReal<S>::pos_inf();
        }
        return total;
      }
      case Kind::Stopping: {
        const auto& st = as<Stopping>();
        S sum(0), val(0);
        for (int t = 0; t < path_dim_; ++t) {
          if (dx[t] < S(0)) return ExtReal<S>::pos_inf();
          sum += dx[t];
          val -= st.reward[t] * dx[t];
        }
        if (sum > S(0)) return ExtReal<S>::pos_inf();
        return ExtReal<S>(val);
      }
      case Kind::Control: {
        const auto& c = as<Control>();
        ExtReal<S> total(S(0));
        const int T = horizon();
        for (int t = 1; t <= T; ++t) {
          VecX<S> r = system_residual(c, dx, t);
          for (int i = 0; i < c.state_dim; ++i)
            if (r[i] != S(0)) return ExtReal<S>::pos_inf();
        }
        for (int t = 0; t <= T; ++t) total += c.cost[t].recession(stage_of(dx, t));
        return total;
      }
      case Kind::Lagrange: {
        const auto& lg = as<Lagrange>();
        ExtReal<S> total(S(0));
        const int T = horizon();
        for (int t = 0; t <= T; ++t) {
          VecX<S> arg(2 * lg.dim);
          for (int i = 0; i < lg.dim; ++i) {
            S xt = dx[t * lg.dim + i];
            S xprev = t > 0 ? dx[(t - 1) * lg.dim + i] : S(0);
            arg[i] = xt;
            arg[lg.dim + i] = xt - xprev;
          }
          total += lg.running[t].recession(arg);
        }
        return total;
      }
      case Kind::Hedging: {
        const auto& h = as<Hedging>();
        const int jbar = static_cast<int>(h.static_payoff.size());
        S slope(0);
        if (jbar > 0) {
          VecX<S> xbar = detail::segment(dx, 0, jbar);
          auto s0 = h.static_cost.recession(xbar);
          if (!s0.is_finite()) return ExtReal<S>::pos_inf();
          slope += s0.value() - h.static_payoff.dot(xbar);
        }
        for (std::size_t t = 0; t < h.price_incr.size(); ++t)
          slope -= h.price_incr[t].dot(stage_of(dx, static_cast<int>(t) + 1));
        VecX<S> sv(1);
        sv[0] = slope;
        ExtReal<S> total = h.loss.recession(sv);
        for (std::size_t t = 0; t < h.constraints.size(); ++t)
          total += h.constraints[t].recession(stage_of(dx, static_cast<int>(t) + 1));
        return total;
      }
    }
    throw std::logic_error("unreachable");
  }

  int horizon() const { return static_cast<int>(stage_dims_.size()) - 1; }

  VecX<S> stage_of(const VecX<S>& x, int t) const {
    return detail::segment(x, stage_offset(t), stage_dims_[t]);
  }
  int stage_offset(int t) const {
    int off = 0;
    for (int s = 0; s < t; ++s) off += stage_dims_[s];
    return off;
  }

  S hedge_argument(const Hedging& h, const VecX<S>& x, const S& u) const {
    S arg = u;
    const int jbar = static_cast<int>(h.static_payoff.size());
    if (jbar > 0) {
      VecX<S> xbar = detail::segment(x, 0, jbar);
      arg += h.static_cost.eval_ex(xbar).value.value() - h.static_payoff.dot(xbar);
    }
    for (std::size_t t = 0; t < h.price_incr.size(); ++t)
      arg -= h.price_incr[t].dot(stage_of(x, static_cast<int>(t) + 1));
    return arg;
  }

 private:
  void check_dims(const VecX<S>& x, const VecX<S>& u) const {
    if (static_cast<int>(x.size()) != path_dim_ || static_cast<int>(u.size()) != param_dim_)
      throw std::invalid_argument("integrand: dimension mismatch");
  }

  void finish() {
    path_dim_ = 0;
    for (int d : stage_dims_) path_dim_ += d;
    switch (kind()) {
      case Kind::Generic:
        param_dim_ = as<Generic>().param_dim;
        if (as<Generic>().joint.dim() != path_dim_ + param_dim_)
          throw std::invalid_argument("generic integrand: joint dimension");
        break;
      case Kind::MathProg:
        param_dim_ = static_cast<int>(as<MathProg>().constraints.size());
        break;
      case Kind::Stopping:
        param_dim_ = 1;
        break;
      case Kind::Control:
        param_dim_ = as<Control>().state_dim * horizon();
        break;
      case Kind::Lagrange:
        param_dim_ = as<Lagrange>().dim * (horizon() + 1);
        break;
      case Kind::Hedging:
        param_dim_ = 1;
        break;
    }
  }

  template <class F>
  void for_each_fn(F&& fn) const {
    switch (kind()) {
      case Kind::Generic:
        fn(as<Generic>().joint);
        break;
      case Kind::MathProg:
        fn(as<MathProg>().objective);
        for (const auto& c : as<MathProg>().constraints) fn(c);
        break;
      case Kind::Stopping:
        break;
      case Kind::Control:
        for (const auto& c : as<Control>().cost) fn(c);
        break;
      case Kind::Lagrange:
        for (const auto& k : as<Lagrange>().running) fn(k);
        break;
      case Kind::Hedging:
        fn(as<Hedging>().loss);
        fn(as<Hedging>().static_cost);
        for (const auto& c : as<Hedging>().constraints) fn(c);
        break;
    }
  }

  // y_t for t in 1..T from the flat parameter multiplier; zero outside
  static VecX<S> control_multiplier(const Control& c, const VecX<S>& y, int t) {
    const int T = static_cast<int>(c.cost.size()) - 1;
    if (t < 1 || t > T) return VecX<S>::Zero(c.state_dim);
    return detail::segment(y, (t - 1) * c.state_dim, c.state_dim);
  }

  // DX_t - A_t X_{t-1} - B_t U_{t-1}
  VecX<S> system_residual(const Control& c, const VecX<S>& x, int t) const {
    VecX<S> xt = stage_of(x, t);
    VecX<S> xp = stage_of(x, t - 1);
    VecX<S> r(c.state_dim);
    VecX<S> xprev = detail::segment(xp, 0, c.state_dim);
    VecX<S> uprev = detail::segment(xp, c.state_dim, c.control_dims[t - 1]);
    VecX<S> ax = mat_vec(c.A[t - 1], xprev);
    VecX<S> bu = mat_vec(c.B[t - 1], uprev);
    for (int i = 0; i < c.state_dim; ++i) r[i] = xt[i] - xprev[i] - ax[i] - bu[i];
    return r;
  }

  Valuation<S> hedging_conjugate(const Hedging& h, const VecX<S>& v, const S& y) const {
    Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
    VecX<S> yv(1);
    yv[0] = y;
    auto vc = h.loss.conjugate_ex(yv);
    out.value += vc.value;
    out.violation = std::max(out.violation, vc.violation);
    out.exact = out.exact && vc.exact;
    const int T = static_cast<int>(h.price_incr.size());
    for (int t = 0; t <= T; ++t) {
      VecX<S> w = stage_of(v, t + 1);
      if (t < T) {
        for (int j = 0; j < static_cast<int>(w.size()); ++j) w[j] += y * h.price_incr[t][j];
      }
      auto sv = h.constraints[t].conjugate_ex(w);  // support function of D_t
      out.value += sv.value;
      out.violation = std::max(out.violation, sv.violation);
      out.exact = out.exact && sv.exact;
    }
    const int jbar = static_cast<int>(h.static_payoff.size());
    if (jbar > 0) {
      VecX<S> w = stage_of(v, 0);
      for (int j = 0; j < jbar; ++j) w[j] += y * h.static_payoff[j];
      if (y > S(0)) {
        VecX<S> wy(jbar);
        for (int j = 0; j < jbar; ++j) wy[j] = w[j] / y;
        auto sc = h.static_cost.conjugate_ex(wy);  // (y S0)*(w) = y S0*(w/y)
        out.value += ExtReal<S>(S(y * sc.value.value_or(S(0))));
        if (!sc.value.is_finite()) out.value += sc.value;
        out.violation = std::max(out.violation, S(y * sc.violation));
        out.exact = out.exact && sc.exact;
      } else {
        out.violation = std::max(out.violation, inf_norm<S>(w));
      }
    }
    return out;
  }

  std::variant<Generic, MathProg, Stopping, Control, Lagrange, Hedging> data_;
  std::vector<int> stage_dims_;
  int path_dim_ = 0;
  int param_dim_ = 0;
};

}  // namespace stochdual
