#pragma once

#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stochdual/convex.hpp"
#include "stochdual/la.hpp"

namespace stochdual {

// Epigraph lowering of catalogue functions into dense QP/LP data
//
//   minimize 1/2 z'Qz + c.z + c0   st  A z <= b,  E z = d.
//
// Functions contribute cost terms and rows over affine expressions of the
// variables; piecewise-linear parts introduce auxiliary epigraph variables.

struct NotQpRepresentable : std::domain_error {
  using std::domain_error::domain_error;
};
struct UnsupportedRecession : std::domain_error {
  using std::domain_error::domain_error;
};

template <class S>
struct AffExpr {
  std::vector<std::pair<int, S>> terms;  // coef * z_var
  S k{0};

  static AffExpr constant(S c) {
    AffExpr e;
    e.k = std::move(c);
    return e;
  }
  static AffExpr variable(int var, S coef = S(1)) {
    AffExpr e;
    e.terms.push_back({var, std::move(coef)});
    return e;
  }
  AffExpr& add(int var, const S& coef) {
    terms.push_back({var, coef});
    return *this;
  }
  AffExpr& operator+=(const AffExpr& o) {
    for (const auto& t : o.terms) terms.push_back(t);
    k += o.k;
    return *this;
  }
  friend AffExpr operator+(AffExpr a, const AffExpr& b) { return a += b; }
  AffExpr scaled(const S& s) const {
    AffExpr e;
    e.k = s * k;
    for (const auto& t : terms) e.terms.push_back({t.first, s * t.second});
    return e;
  }
  AffExpr negated() const { return scaled(S(-1)); }
};

template <class S>
struct QpData {
  MatX<S> Q;
  VecX<S> c;
  S c0{0};
  MatX<S> A;
  VecX<S> b;
  MatX<S> E;
  VecX<S> d;
  int nvar = 0;
};

template <class S>
class QpBuilder {
 public:
  int add_var() { return nvar_++; }
  int num_vars() const { return nvar_; }
  int num_ineq() const { return static_cast<int>(ineq_.size()); }
  int num_eq() const { return static_cast<int>(eq_.size()); }

  void add_cost_const(const S& c) { c0_ += c; }

  void add_cost_lin(const AffExpr<S>& e, const S& scale) {
    for (const auto& t : e.terms) lin_[t.first] += scale * t.second;
    c0_ += scale * e.k;
  }

  // scale/2 * e'Qe over the affine expressions e
  void add_cost_quad(const std::vector<AffExpr<S>>& e, const MatX<S>& Q, const S& scale) {
    const int n = static_cast<int>(e.size());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (Q(i, j) == S(0)) continue;
        const S w = scale * Q(i, j) / S(2);
        for (const auto& ti : e[i].terms)
          for (const auto& tj : e[j].terms)
            quad_[{std::min(ti.first, tj.first), std::max(ti.first, tj.first)}] +=
                (ti.first == tj.first ? S(2) : S(1)) * w * ti.second * tj.second;
        for (const auto& ti : e[i].terms) lin_[ti.first] += w * ti.second * e[j].k;
        for (const auto& tj : e[j].terms) lin_[tj.first] += w * tj.second * e[i].k;
        c0_ += w * e[i].k * e[j].k;
      }
    }
  }

  // e <= 0; returns row index
  int add_ineq(const AffExpr<S>& e) {
    ineq_.push_back(e);
    return static_cast<int>(ineq_.size()) - 1;
  }
  // e = 0; returns row index
  int add_eq(const AffExpr<S>& e) {
    eq_.push_back(e);
    return static_cast<int>(eq_.size()) - 1;
  }

  bool has_quadratic_cost() const { return !quad_.empty(); }

  QpData<S> build() const {
    QpData<S> out;
    out.nvar = nvar_;
    out.Q = MatX<S>::Zero(nvar_, nvar_);
    for (const auto& [ij, v] : quad_) {
      if (ij.first == ij.second) {
        out.Q(ij.first, ij.first) += v;
      } else {
        out.Q(ij.first, ij.second) += v;
        out.Q(ij.second, ij.first) += v;
      }
    }
    out.c = VecX<S>::Zero(nvar_);
    for (const auto& [i, v] : lin_) out.c[i] += v;
    out.c0 = c0_;
    out.A = MatX<S>::Zero(static_cast<int>(ineq_.size()), nvar_);
    out.b = VecX<S>::Zero(static_cast<int>(ineq_.size()));
    for (std::size_t r = 0; r < ineq_.size(); ++r) {
      for (const auto& t : ineq_[r].terms) out.A(static_cast<int>(r), t.first) += t.second;
      out.b[static_cast<int>(r)] = -ineq_[r].k;
    }
    out.E = MatX<S>::Zero(static_cast<int>(eq_.size()), nvar_);
    out.d = VecX<S>::Zero(static_cast<int>(eq_.size()));
    for (std::size_t r = 0; r < eq_.size(); ++r) {
      for (const auto& t : eq_[r].terms) out.E(static_cast<int>(r), t.first) += t.second;
      out.d[static_cast<int>(r)] = -eq_[r].k;
    }
    return out;
  }

 private:
  int nvar_ = 0;
  std::map<std::pair<int, int>, S> quad_;
  std::map<int, S> lin_;
  S c0_{0};
  std::vector<AffExpr<S>> ineq_;
  std::vector<AffExpr<S>> eq_;
};

// Adds scale * f(e) to the objective (scale > 0), plus dom-f rows.
template <class S>
void lower_epigraph(QpBuilder<S>& B, const ConvexFunction<S>& f, const std::vector<AffExpr<S>>& e,
                    const S& scale) {
  const auto& d = f.data();
  if (static_cast<int>(e.size()) != f.dim())
    throw std::invalid_argument("lower_epigraph: arity mismatch");
  switch (f.tag()) {
    case FnTag::Affine: {
      for (int i = 0; i < f.dim(); ++i) B.add_cost_lin(e[i], S(scale * d.a[i]));
      B.add_cost_const(S(scale * d.b));
      return;
    }
    case FnTag::Quadratic: {
      B.add_cost_quad(e, d.Q, scale);
      for (int i = 0; i < f.dim(); ++i) B.add_cost_lin(e[i], S(scale * d.a[i]));
      B.add_cost_const(S(scale * d.b));
      return;
    }
    case FnTag::IndicatorPolyhedron: {
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> row = AffExpr<S>::constant(S(-d.rhs[r]));
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.A(r, j));
        B.add_ineq(row);
      }
      for (int r = 0; r < d.C.rows(); ++r) {
        AffExpr<S> row = AffExpr<S>::constant(S(-d.ceq[r]));
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.C(r, j));
        B.add_eq(row);
      }
      return;
    }
    case FnTag::MaxAffine: {
      int t = B.add_var();
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> row = AffExpr<S>::constant(d.rhs[r]);
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.A(r, j));
        row.add(t, S(-1));
        B.add_ineq(row);
      }
      B.add_cost_lin(AffExpr<S>::variable(t), scale);
      return;
    }
    case FnTag::SupportBox: {
      for (int i = 0; i < f.dim(); ++i) {
        const bool lf = d.lo_fin[i], hf = d.hi_fin[i];
        if (lf && hf) {
          int s = B.add_var();
          B.add_ineq(e[i].scaled(d.lo[i]) + AffExpr<S>::variable(s, S(-1)));
          B.add_ineq(e[i].scaled(d.hi[i]) + AffExpr<S>::variable(s, S(-1)));
          B.add_cost_lin(AffExpr<S>::variable(s), scale);
        } else if (!lf && hf) {
          B.add_ineq(e[i].negated());  // e >= 0
          B.add_cost_lin(e[i], S(scale * d.hi[i]));
        } else if (lf && !hf) {
          B.add_ineq(e[i]);  // e <= 0
          B.add_cost_lin(e[i], S(scale * d.lo[i]));
        } else {
          B.add_eq(e[i]);
        }
      }
      return;
    }
    case FnTag::ScalarLoss: {
      switch (d.kind) {
        case LossKind::Square: {
          MatX<S> Q(1, 1);
          Q(0, 0) = d.scale;
          std::vector<AffExpr<S>> shifted{e[0] + AffExpr<S>::constant(S(-d.shift))};
          B.add_cost_quad(shifted, Q, scale);
          return;
        }
        case LossKind::Exponential:
          throw NotQpRepresentable("exponential loss");
        case LossKind::Hinge: {
          int h = B.add_var();
          B.add_ineq(AffExpr<S>::variable(h, S(-1)));
          B.add_ineq(e[0].scaled(d.scale) +
                     AffExpr<S>::constant(S(-d.scale * d.shift)) + AffExpr<S>::variable(h, S(-1)));
          B.add_cost_lin(AffExpr<S>::variable(h), scale);
          return;
        }
        case LossKind::LinearIndicator: {
          B.add_cost_lin(e[0], S(scale * d.scale));
          if (d.has_bound) B.add_ineq(e[0].negated() + AffExpr<S>::constant(d.shift));
          return;
        }
      }
      throw std::logic_error("unreachable");
    }
    case FnTag::Sum: {
      for (const auto& p : d.parts) lower_epigraph(B, p, e, scale);
      return;
    }
    case FnTag::AffinePre: {
      std::vector<AffExpr<S>> inner;
      for (int r = 0; r < d.M.rows(); ++r) {
        AffExpr<S> row = AffExpr<S>::constant(d.m0[r]);
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.M(r, j));
        inner.push_back(std::move(row));
      }
      lower_epigraph(B, d.parts[0], inner, scale);
      return;
    }
    case FnTag::Separable: {
      for (int i = 0; i < f.dim(); ++i)
        lower_epigraph(B, d.parts[i], {e[i]}, scale);
      return;
    }
  }
  throw std::logic_error("unreachable");
}

// Adds the epigraph of f-recession at direction e; returns the linear cost
// expression whose minimum over the auxiliaries equals f-recession(e).
template <class S>
AffExpr<S> lower_recession_cost(QpBuilder<S>& B, const ConvexFunction<S>& f,
                                const std::vector<AffExpr<S>>& e) {
  const auto& d = f.data();
  switch (f.tag()) {
    case FnTag::Affine: {
      AffExpr<S> cost;
      for (int i = 0; i < f.dim(); ++i) cost += e[i].scaled(d.a[i]);
      return cost;
    }
    case FnTag::Quadratic: {
      for (int r = 0; r < d.Q.rows(); ++r) {
        bool nonzero = false;
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) {
          if (d.Q(r, j) != S(0)) nonzero = true;
          row += e[j].scaled(d.Q(r, j));
        }
        if (nonzero) B.add_eq(row);
      }
      AffExpr<S> cost;
      for (int i = 0; i < f.dim(); ++i) cost += e[i].scaled(d.a[i]);
      return cost;
    }
    case FnTag::IndicatorPolyhedron: {
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.A(r, j));
        B.add_ineq(row);
      }
      for (int r = 0; r < d.C.rows(); ++r) {
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.C(r, j));
        B.add_eq(row);
      }
      return {};
    }
    case FnTag::MaxAffine: {
      int t = B.add_var();
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.A(r, j));
        row.add(t, S(-1));
        B.add_ineq(row);
      }
      return AffExpr<S>::variable(t);
    }
    case FnTag::SupportBox:
      return lower_support_box_cost(B, f, e);
    case FnTag::ScalarLoss: {
      switch (d.kind) {
        case LossKind::Square:
          B.add_eq(e[0]);
          return {};
        case LossKind::Exponential:
          B.add_ineq(e[0]);
          return {};
        case LossKind::Hinge: {
          int h = B.add_var();
          B.add_ineq(AffExpr<S>::variable(h, S(-1)));
          B.add_ineq(e[0].scaled(d.scale) + AffExpr<S>::variable(h, S(-1)));
          return AffExpr<S>::variable(h);
        }
        case LossKind::LinearIndicator:
          if (d.has_bound) B.add_ineq(e[0].negated());
          return e[0].scaled(d.scale);
      }
      throw std::logic_error("unreachable");
    }
    case FnTag::Sum: {
      AffExpr<S> cost;
      for (const auto& p : d.parts) cost += lower_recession_cost(B, p, e);
      return cost;
    }
    case FnTag::AffinePre: {
      std::vector<AffExpr<S>> inner;
      for (int r = 0; r < d.M.rows(); ++r) {
        AffExpr<S> row;  // direction map drops the offset
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.M(r, j));
        inner.push_back(std::move(row));
      }
      return lower_recession_cost(B, d.parts[0], inner);
    }
    case FnTag::Separable: {
      AffExpr<S> cost;
      for (int i = 0; i < f.dim(); ++i)
        cost += lower_recession_cost(B, d.parts[i], {e[i]});
      return cost;
    }
  }
  throw std::logic_error("unreachable");
}

template <class S>
AffExpr<S> lower_support_box_cost(QpBuilder<S>& B, const ConvexFunction<S>& f,
                                  const std::vector<AffExpr<S>>& e) {
  const auto& d = f.data();
  AffExpr<S> cost;
  for (int i = 0; i < f.dim(); ++i) {
    const bool lf = d.lo_fin[i], hf = d.hi_fin[i];
    if (lf && hf) {
      int s = B.add_var();
      B.add_ineq(e[i].scaled(d.lo[i]) + AffExpr<S>::variable(s, S(-1)));
      B.add_ineq(e[i].scaled(d.hi[i]) + AffExpr<S>::variable(s, S(-1)));
      cost += AffExpr<S>::variable(s);
    } else if (!lf && hf) {
      B.add_ineq(e[i].negated());
      cost += e[i].scaled(d.hi[i]);
    } else if (lf && !hf) {
      B.add_ineq(e[i]);
      cost += e[i].scaled(d.lo[i]);
    } else {
      B.add_eq(e[i]);
    }
  }
  return cost;
}

// Explicit polyhedral description of { e : f-recession(e) <= 0 } without
// auxiliary variables: required rows plus one row per combination of the
// piecewise-linear alternatives.
template <class S>
struct SublinearPieces {
  std::vector<AffExpr<S>> ineq;               // rows <= 0
  std::vector<AffExpr<S>> eq;                 // rows = 0
  AffExpr<S> base;                            // additive linear part
  std::vector<std::vector<AffExpr<S>>> alts;  // choose one from each set, add
};

template <class S>
void recession_pieces(const ConvexFunction<S>& f, const std::vector<AffExpr<S>>& e,
                      SublinearPieces<S>& out) {
  const auto& d = f.data();
  switch (f.tag()) {
    case FnTag::Affine: {
      for (int i = 0; i < f.dim(); ++i) out.base += e[i].scaled(d.a[i]);
      return;
    }
    case FnTag::Quadratic: {
      for (int r = 0; r < d.Q.rows(); ++r) {
        AffExpr<S> row;
        bool nonzero = false;
        for (int j = 0; j < f.dim(); ++j) {
          if (d.Q(r, j) != S(0)) nonzero = true;
          row += e[j].scaled(d.Q(r, j));
        }
        if (nonzero) out.eq.push_back(std::move(row));
      }
      for (int i = 0; i < f.dim(); ++i) out.base += e[i].scaled(d.a[i]);
      return;
    }
    case FnTag::IndicatorPolyhedron: {
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.A(r, j));
        out.ineq.push_back(std::move(row));
      }
      for (int r = 0; r < d.C.rows(); ++r) {
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.C(r, j));
        out.eq.push_back(std::move(row));
      }
      return;
    }
    case FnTag::MaxAffine: {
      std::vector<AffExpr<S>> set;
      for (int r = 0; r < d.A.rows(); ++r) {
        AffExpr<S> piece;
        for (int j = 0; j < f.dim(); ++j) piece += e[j].scaled(d.A(r, j));
        set.push_back(std::move(piece));
      }
      out.alts.push_back(std::move(set));
      return;
    }
    case FnTag::SupportBox: {
      for (int i = 0; i < f.dim(); ++i) {
        const bool lf = d.lo_fin[i], hf = d.hi_fin[i];
        if (lf && hf) {
          out.alts.push_back({e[i].scaled(d.lo[i]), e[i].scaled(d.hi[i])});
        } else if (!lf && hf) {
          out.ineq.push_back(e[i].negated());
          out.base += e[i].scaled(d.hi[i]);
        } else if (lf && !hf) {
          out.ineq.push_back(e[i]);
          out.base += e[i].scaled(d.lo[i]);
        } else {
          out.eq.push_back(e[i]);
        }
      }
      return;
    }
    case FnTag::ScalarLoss: {
      switch (d.kind) {
        case LossKind::Square:
          out.eq.push_back(e[0]);
          return;
        case LossKind::Exponential:
          out.ineq.push_back(e[0]);
          return;
        case LossKind::Hinge:
          out.alts.push_back({AffExpr<S>{}, e[0].scaled(d.scale)});
          return;
        case LossKind::LinearIndicator:
          if (d.has_bound) out.ineq.push_back(e[0].negated());
          out.base += e[0].scaled(d.scale);
          return;
      }
      throw std::logic_error("unreachable");
    }
    case FnTag::Sum: {
      for (const auto& p : d.parts) recession_pieces(p, e, out);
      return;
    }
    case FnTag::AffinePre: {
      std::vector<AffExpr<S>> inner;
      for (int r = 0; r < d.M.rows(); ++r) {
        AffExpr<S> row;
        for (int j = 0; j < f.dim(); ++j) row += e[j].scaled(d.M(r, j));
        inner.push_back(std::move(row));
      }
      recession_pieces(d.parts[0], inner, out);
      return;
    }
    case FnTag::Separable: {
      for (int i = 0; i < f.dim(); ++i) recession_pieces(d.parts[i], {e[i]}, out);
      return;
    }
  }
  throw std::logic_error("unreachable");
}

// All value combinations of the alternatives added onto the base.
template <class S>
std::vector<AffExpr<S>> flatten_pieces(const SublinearPieces<S>& p, std::size_t cap = 4096) {
  std::vector<AffExpr<S>> combos{p.base};
  for (const auto& set : p.alts) {
    std::vector<AffExpr<S>> next;
    if (combos.size() * set.size() > cap)
      throw UnsupportedRecession("too many piecewise-linear combinations");
    for (const auto& c : combos)
      for (const auto& choice : set) next.push_back(c + choice);
    combos = std::move(next);
  }
  return combos;
}

}  // namespace stochdual
