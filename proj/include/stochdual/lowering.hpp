#pragma once

#include "stochdual/integrand.hpp"
#include "stochdual/qpform.hpp"

namespace stochdual {

// Lowering of integrands (with the parameter pinned at ubar) into the flat
// QP over node variables, plus the recession forms used for unboundedness
// detection and the linearity diagnostics.

// How to read the paper's y multiplier for one parameter coordinate back out
// of a solved flat QP. Row multipliers are divided by the leaf probability
// by the caller; Primal means y is recovered from the primal point.
struct YHook {
  enum class Src { IneqRow, EqRowPos, EqRowNeg, Primal };
  Src src = Src::Primal;
  int row = -1;
};

namespace detail {

// Value of a piecewise-linear convex catalogue function as an affine
// expression over fresh epigraph variables. Only valid in contexts that are
// nondecreasing in the value (the minimization drives it to the true value).
template <class S>
AffExpr<S> lower_value_expr(QpBuilder<S>& B, const ConvexFunction<S>& f,
                            const std::vector<AffExpr<S>>& e) {
  const auto& d = f.data();
  switch (f.tag()) {
    case FnTag::Affine: {
      AffExpr<S> out = AffExpr<S>::constant(d.b);
      for (int i = 0; i < f.dim(); ++i) out += e[i].scaled(d.a[i]);
      return out;
    }
    case FnTag::MaxAffine: {
      int t = B.add_var();
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> row = AffExpr<S>::constant(d.rhs[r]);
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.A(r, j));
        row.add(t, S(-1));
        B.add_ineq(row);
      }
      return AffExpr<S>::variable(t);
    }
    case FnTag::SupportBox:
      return lower_support_box_cost(B, f, e);
    case FnTag::ScalarLoss: {
      if (d.kind == LossKind::Hinge) {
        int h = B.add_var();
        B.add_ineq(AffExpr<S>::variable(h, S(-1)));
        B.add_ineq(e[0].scaled(d.scale) + AffExpr<S>::constant(S(-d.scale * d.shift)) +
                   AffExpr<S>::variable(h, S(-1)));
        return AffExpr<S>::variable(h);
      }
      if (d.kind == LossKind::LinearIndicator) {
        if (d.has_bound) B.add_ineq(e[0].negated() + AffExpr<S>::constant(d.shift));
        return e[0].scaled(d.scale);
      }
      throw NotQpRepresentable("curved loss inside a value expression");
    }
    case FnTag::Sum: {
      AffExpr<S> out;
      for (const auto& p : d.parts) out += lower_value_expr(B, p, e);
      return out;
    }
    case FnTag::Separable: {
      AffExpr<S> out;
      for (int i = 0; i < f.dim(); ++i) out += lower_value_expr(B, d.parts[i], {e[i]});
      return out;
    }
    case FnTag::AffinePre: {
      std::vector<AffExpr<S>> inner;
      for (int r = 0; r < d.M.rows(); ++r) {
        AffExpr<S> row = AffExpr<S>::constant(d.m0[r]);
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.M(r, j));
        inner.push_back(std::move(row));
      }
      return lower_value_expr(B, d.parts[0], inner);
    }
    default:
      throw NotQpRepresentable("no affine value expression for this variant");
  }
}

template <class S>
std::vector<AffExpr<S>> stage_exprs(const Integrand<S>& g, const std::vector<AffExpr<S>>& path,
                                    int t) {
  const int off = g.stage_offset(t);
  return {path.begin() + off, path.begin() + off + g.stage_dims()[t]};
}

}  // namespace detail

template <class S>
std::vector<YHook> lower_integrand(QpBuilder<S>& B, const Integrand<S>& g,
                                   const std::vector<AffExpr<S>>& path, const VecX<S>& u,
                                   const S& prob) {
  using Kind = typename Integrand<S>::Kind;
  std::vector<YHook> hooks(g.param_dim());
  switch (g.kind()) {
    case Kind::Generic: {
      std::vector<AffExpr<S>> e = path;
      for (int i = 0; i < g.param_dim(); ++i) e.push_back(AffExpr<S>::constant(u[i]));
      lower_epigraph(B, g.template as<typename Integrand<S>::Generic>().joint, e, prob);
      return hooks;
    }
    case Kind::MathProg: {
      const auto& mp = g.template as<typename Integrand<S>::MathProg>();
      lower_epigraph(B, mp.objective, path, prob);
      for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
        if (mp.constraints[j].tag() != FnTag::Affine)
          throw NotQpRepresentable("nonlinear constraint row");
        const auto& a = mp.constraints[j].data();
        AffExpr<S> row = AffExpr<S>::constant(S(a.b + u[static_cast<int>(j)]));
        for (int i = 0; i < g.path_dim(); ++i) row += path[i].scaled(a.a[i]);
        if (static_cast<int>(j) < mp.num_ineq)
          hooks[j] = {YHook::Src::IneqRow, B.add_ineq(row)};
        else
          hooks[j] = {YHook::Src::EqRowPos, B.add_eq(row)};
      }
      return hooks;
    }
    case Kind::Stopping: {
      const auto& st = g.template as<typename Integrand<S>::Stopping>();
      AffExpr<S> total = AffExpr<S>::constant(u[0]);
      for (int t = 0; t < g.path_dim(); ++t) {
        B.add_ineq(path[t].negated());
        B.add_cost_lin(path[t], S(-prob * st.reward[t]));
        total += path[t];
      }
      hooks[0] = {YHook::Src::IneqRow, B.add_ineq(total)};
      return hooks;
    }
    case Kind::Control: {
      const auto& c = g.template as<typename Integrand<S>::Control>();
      const int T = g.horizon();
      for (int t = 0; t <= T; ++t)
        lower_epigraph(B, c.cost[t], detail::stage_exprs(g, path, t), prob);
      for (int t = 1; t <= T; ++t) {
        const int off = g.stage_offset(t);
        const int offp = g.stage_offset(t - 1);
        for (int i = 0; i < c.state_dim; ++i) {
          AffExpr<S> row = path[off + i];
          row += path[offp + i].scaled(S(-1));
          for (int j = 0; j < c.state_dim; ++j) row += path[offp + j].scaled(S(-c.A[t - 1](i, j)));
          for (int j = 0; j < c.control_dims[t - 1]; ++j)
            row += path[offp + c.state_dim + j].scaled(S(-c.B[t - 1](i, j)));
          row += AffExpr<S>::constant(S(-u[(t - 1) * c.state_dim + i]));
          hooks[(t - 1) * c.state_dim + i] = {YHook::Src::EqRowNeg, B.add_eq(row)};
        }
      }
      return hooks;
    }
    case Kind::Lagrange: {
      const auto& lg = g.template as<typename Integrand<S>::Lagrange>();
      const int T = g.horizon();
      for (int t = 0; t <= T; ++t) {
        std::vector<AffExpr<S>> args;
        for (int i = 0; i < lg.dim; ++i) args.push_back(path[t * lg.dim + i]);
        for (int i = 0; i < lg.dim; ++i) {
          AffExpr<S> dx = path[t * lg.dim + i];
          if (t > 0) dx += path[(t - 1) * lg.dim + i].scaled(S(-1));
          dx += AffExpr<S>::constant(u[t * lg.dim + i]);
          args.push_back(std::move(dx));
        }
        lower_epigraph(B, lg.running[t], args, prob);
      }
      return hooks;  // y recovered from the primal point
    }
    case Kind::Hedging: {
      const auto& h = g.template as<typename Integrand<S>::Hedging>();
      AffExpr<S> arg = AffExpr<S>::constant(u[0]);
      const int jbar = static_cast<int>(h.static_payoff.size());
      if (jbar > 0) {
        auto xbar = detail::stage_exprs(g, path, 0);
        if (!Integrand<S>::loss_nondecreasing(h.loss))
          throw NotQpRepresentable("static cost inside a non-monotone loss");
        arg += detail::lower_value_expr(B, h.static_cost, xbar);
        for (int j = 0; j < jbar; ++j) arg += xbar[j].scaled(S(-h.static_payoff[j]));
      }
      for (std::size_t t = 0; t < h.price_incr.size(); ++t) {
        auto xs = detail::stage_exprs(g, path, static_cast<int>(t) + 1);
        for (int j = 0; j < static_cast<int>(xs.size()); ++j)
          arg += xs[j].scaled(S(-h.price_incr[t][j]));
      }
      lower_epigraph(B, h.loss, {arg}, prob);
      for (std::size_t t = 0; t < h.constraints.size(); ++t)
        lower_epigraph(B, h.constraints[t], detail::stage_exprs(g, path, static_cast<int>(t) + 1),
                       prob);
      return hooks;
    }
  }
  throw std::logic_error("unreachable");
}

// Epigraph of f-inf(dx, 0) at the direction expressions; returns the linear
// cost whose minimum over the auxiliaries is the recession value.
template <class S>
AffExpr<S> lower_integrand_recession(QpBuilder<S>& B, const Integrand<S>& g,
                                     const std::vector<AffExpr<S>>& path) {
  using Kind = typename Integrand<S>::Kind;
  switch (g.kind()) {
    case Kind::Generic: {
      std::vector<AffExpr<S>> e = path;
      for (int i = 0; i < g.param_dim(); ++i) e.push_back(AffExpr<S>{});
      return lower_recession_cost(B, g.template as<typename Integrand<S>::Generic>().joint, e);
    }
    case Kind::MathProg: {
      const auto& mp = g.template as<typename Integrand<S>::MathProg>();
      AffExpr<S> cost = lower_recession_cost(B, mp.objective, path);
      for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
        AffExpr<S> cj = lower_recession_cost(B, mp.constraints[j], path);
        if (static_cast<int>(j) < mp.num_ineq)
          B.add_ineq(cj);
        else
          B.add_eq(cj);
      }
      return cost;
    }
    case Kind::Stopping: {
      const auto& st = g.template as<typename Integrand<S>::Stopping>();
      AffExpr<S> cost, total;
      for (int t = 0; t < g.path_dim(); ++t) {
        B.add_ineq(path[t].negated());
        cost += path[t].scaled(S(-st.reward[t]));
        total += path[t];
      }
      B.add_ineq(total);
      return cost;
    }
    case Kind::Control: {
      const auto& c = g.template as<typename Integrand<S>::Control>();
      const int T = g.horizon();
      AffExpr<S> cost;
      for (int t = 0; t <= T; ++t)
        cost += lower_recession_cost(B, c.cost[t], detail::stage_exprs(g, path, t));
      for (int t = 1; t <= T; ++t) {
        const int off = g.stage_offset(t);
        const int offp = g.stage_offset(t - 1);
        for (int i = 0; i < c.state_dim; ++i) {
          AffExpr<S> row = path[off + i];
          row += path[offp + i].scaled(S(-1));
          for (int j = 0; j < c.state_dim; ++j) row += path[offp + j].scaled(S(-c.A[t - 1](i, j)));
          for (int j = 0; j < c.control_dims[t - 1]; ++j)
            row += path[offp + c.state_dim + j].scaled(S(-c.B[t - 1](i, j)));
          B.add_eq(row);
        }
      }
      return cost;
    }
    case Kind::Lagrange: {
      const auto& lg = g.template as<typename Integrand<S>::Lagrange>();
      const int T = g.horizon();
      AffExpr<S> cost;
      for (int t = 0; t <= T; ++t) {
        std::vector<AffExpr<S>> args;
        for (int i = 0; i < lg.dim; ++i) args.push_back(path[t * lg.dim + i]);
        for (int i = 0; i < lg.dim; ++i) {
          AffExpr<S> dx = path[t * lg.dim + i];
          if (t > 0) dx += path[(t - 1) * lg.dim + i].scaled(S(-1));
          args.push_back(std::move(dx));
        }
        cost += lower_recession_cost(B, lg.running[t], args);
      }
      return cost;
    }
    case Kind::Hedging: {
      const auto& h = g.template as<typename Integrand<S>::Hedging>();
      AffExpr<S> slope;
      const int jbar = static_cast<int>(h.static_payoff.size());
      if (jbar > 0) {
        auto xbar = detail::stage_exprs(g, path, 0);
        slope += lower_recession_cost(B, h.static_cost, xbar);
        for (int j = 0; j < jbar; ++j) slope += xbar[j].scaled(S(-h.static_payoff[j]));
      }
      for (std::size_t t = 0; t < h.price_incr.size(); ++t) {
        auto xs = detail::stage_exprs(g, path, static_cast<int>(t) + 1);
        for (int j = 0; j < static_cast<int>(xs.size()); ++j)
          slope += xs[j].scaled(S(-h.price_incr[t][j]));
      }
      AffExpr<S> cost;
      if (jbar > 0 && !Integrand<S>::loss_nondecreasing(h.loss))
        throw UnsupportedRecession("static cost inside a non-monotone loss");
      cost += lower_recession_cost(B, h.loss, {slope});
      for (std::size_t t = 0; t < h.constraints.size(); ++t)
        cost +=
            lower_recession_cost(B, h.constraints[t], detail::stage_exprs(g, path, static_cast<int>(t) + 1));
      return cost;
    }
  }
  throw std::logic_error("unreachable");
}

namespace detail {

// Required rows for "f-recession(e) <= 0" of a catalogue function, appended
// onto the integrand-level pieces.
template <class S>
void constraint_recession_rows(const ConvexFunction<S>& f, const std::vector<AffExpr<S>>& e,
                               bool equality, SublinearPieces<S>& out) {
  SublinearPieces<S> sub;
  recession_pieces(f, e, sub);
  for (auto& r : sub.ineq) out.ineq.push_back(std::move(r));
  for (auto& r : sub.eq) out.eq.push_back(std::move(r));
  auto combos = flatten_pieces(sub);
  for (auto& c : combos) {
    if (equality)
      out.eq.push_back(std::move(c));
    else
      out.ineq.push_back(std::move(c));
  }
}

}  // namespace detail

// Projection-free polyhedral description of { dx : f-inf(dx, 0) <= 0 }.
// Throws UnsupportedRecession when the integrand has no such description.
template <class S>
SublinearPieces<S> integrand_recession_pieces(const Integrand<S>& g,
                                              const std::vector<AffExpr<S>>& path) {
  using Kind = typename Integrand<S>::Kind;
  SublinearPieces<S> out;
  switch (g.kind()) {
    case Kind::Generic: {
      std::vector<AffExpr<S>> e = path;
      for (int i = 0; i < g.param_dim(); ++i) e.push_back(AffExpr<S>{});
      recession_pieces(g.template as<typename Integrand<S>::Generic>().joint, e, out);
      return out;
    }
    case Kind::MathProg: {
      const auto& mp = g.template as<typename Integrand<S>::MathProg>();
      recession_pieces(mp.objective, path, out);
      for (std::size_t j = 0; j < mp.constraints.size(); ++j)
        detail::constraint_recession_rows(mp.constraints[j], path,
                                          static_cast<int>(j) >= mp.num_ineq, out);
      return out;
    }
    case Kind::Stopping: {
      const auto& st = g.template as<typename Integrand<S>::Stopping>();
      AffExpr<S> total;
      for (int t = 0; t < g.path_dim(); ++t) {
        out.ineq.push_back(path[t].negated());
        out.base += path[t].scaled(S(-st.reward[t]));
        total += path[t];
      }
      out.ineq.push_back(total);
      return out;
    }
    case Kind::Control: {
      const auto& c = g.template as<typename Integrand<S>::Control>();
      const int T = g.horizon();
      for (int t = 0; t <= T; ++t)
        recession_pieces(c.cost[t], detail::stage_exprs(g, path, t), out);
      for (int t = 1; t <= T; ++t) {
        const int off = g.stage_offset(t);
        const int offp = g.stage_offset(t - 1);
        for (int i = 0; i < c.state_dim; ++i) {
          AffExpr<S> row = path[off + i];
          row += path[offp + i].scaled(S(-1));
          for (int j = 0; j < c.state_dim; ++j) row += path[offp + j].scaled(S(-c.A[t - 1](i, j)));
          for (int j = 0; j < c.control_dims[t - 1]; ++j)
            row += path[offp + c.state_dim + j].scaled(S(-c.B[t - 1](i, j)));
          out.eq.push_back(std::move(row));
        }
      }
      return out;
    }
    case Kind::Lagrange: {
      const auto& lg = g.template as<typename Integrand<S>::Lagrange>();
      const int T = g.horizon();
      for (int t = 0; t <= T; ++t) {
        std::vector<AffExpr<S>> args;
        for (int i = 0; i < lg.dim; ++i) args.push_back(path[t * lg.dim + i]);
        for (int i = 0; i < lg.dim; ++i) {
          AffExpr<S> dx = path[t * lg.dim + i];
          if (t > 0) dx += path[(t - 1) * lg.dim + i].scaled(S(-1));
          args.push_back(std::move(dx));
        }
        recession_pieces(lg.running[t], args, out);
      }
      return out;
    }
    case Kind::Hedging: {
      const auto& h = g.template as<typename Integrand<S>::Hedging>();
      SublinearPieces<S> slope;
      const int jbar = static_cast<int>(h.static_payoff.size());
      if (jbar > 0) {
        auto xbar = detail::stage_exprs(g, path, 0);
        recession_pieces(h.static_cost, xbar, slope);
        for (int j = 0; j < jbar; ++j) slope.base += xbar[j].scaled(S(-h.static_payoff[j]));
      }
      for (std::size_t t = 0; t < h.price_incr.size(); ++t) {
        auto xs = detail::stage_exprs(g, path, static_cast<int>(t) + 1);
        for (int j = 0; j < static_cast<int>(xs.size()); ++j)
          slope.base += xs[j].scaled(S(-h.price_incr[t][j]));
      }
      for (auto& r : slope.ineq) out.ineq.push_back(std::move(r));
      for (auto& r : slope.eq) out.eq.push_back(std::move(r));
      SublinearPieces<S> zonly;
      zonly.base = slope.base;
      zonly.alts = slope.alts;
      auto combos = flatten_pieces(zonly);
      const auto& vd = h.loss.data();
      if (h.loss.tag() != FnTag::ScalarLoss) throw UnsupportedRecession("composite loss");
      switch (vd.kind) {
        case LossKind::Hinge: {
          std::vector<AffExpr<S>> set{AffExpr<S>{}};
          for (const auto& c : combos) set.push_back(c.scaled(vd.scale));
          out.alts.push_back(std::move(set));
          break;
        }
        case LossKind::LinearIndicator: {
          if (vd.has_bound) throw UnsupportedRecession("bounded linear loss");
          if (combos.size() == 1) {
            out.base += combos[0].scaled(vd.scale);
          } else if (vd.scale >= S(0)) {
            std::vector<AffExpr<S>> set;
            for (const auto& c : combos) set.push_back(c.scaled(vd.scale));
            out.alts.push_back(std::move(set));
          } else {
            throw UnsupportedRecession("decreasing loss of a piecewise argument");
          }
          break;
        }
        case LossKind::Exponential:
          for (const auto& c : combos) out.ineq.push_back(c);
          break;
        case LossKind::Square:
          if (combos.size() != 1) throw UnsupportedRecession("curved loss of a piecewise argument");
          out.eq.push_back(combos[0]);
          break;
      }
      for (std::size_t t = 0; t < h.constraints.size(); ++t)
        detail::constraint_recession_rows(h.constraints[t],
                                          detail::stage_exprs(g, path, static_cast<int>(t) + 1),
                                          false, out);
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace stochdual
