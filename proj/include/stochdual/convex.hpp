#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stochdual/extreal.hpp"
#include "stochdual/ipm.hpp"
#include "stochdual/la.hpp"
#include "stochdual/simplex.hpp"

namespace stochdual {

// Structured catalogue of closed convex functions with exact evaluation,
// conjugates, recession functions, subgradient tests and proximal maps.
//
// Values are reported as a finite part together with a domain-violation
// residual. eval()/conjugate() fold the two strictly (any violation is
// +inf); solvers and certificate checks work with the split form so that
// points a solver places within tolerance of a polyhedral domain can be
// scored without the value collapsing to +inf.

template <class S>
class ConvexFunction;

// Coordinates the function actually depends on.
template <class S>
std::vector<bool> depends_mask(const ConvexFunction<S>& f);

// Restriction of f to a coordinate block [lo, lo+len) when f does not depend
// on the remaining coordinates; empty optional when unsupported.
template <class S>
std::optional<ConvexFunction<S>> restrict_to_block(const ConvexFunction<S>& f, int lo, int len);

enum class FnTag {
  Affine,
  Quadratic,
  IndicatorPolyhedron,
  MaxAffine,
  SupportBox,
  ScalarLoss,
  Sum,
  AffinePre,
  Separable,
};

enum class LossKind { Square, Exponential, Hinge, LinearIndicator };

template <class S>
struct Valuation {
  ExtReal<S> value;
  S violation{0};
  bool exact = true;

  ExtReal<S> fold(const S& tol) const {
    if (violation > tol) return ExtReal<S>::pos_inf();
    return value;
  }
};

template <class S>
class ConvexFunction {
 public:
  struct Data {
    FnTag tag{};
    int dim = 0;
    MatX<S> Q;          // quadratic form
    VecX<S> a;          // linear term
    S b{0};             // constant
    MatX<S> A;          // polyhedron rows A x <= rhs / max-affine slopes
    VecX<S> rhs;
    MatX<S> C;          // polyhedron equalities C x = ceq
    VecX<S> ceq;
    VecX<S> lo, hi;     // support box bounds
    std::vector<bool> lo_fin, hi_fin;
    LossKind kind{};
    S scale{1}, shift{0};
    bool has_bound = false;
    std::vector<ConvexFunction> parts;
    MatX<S> M;          // affine precomposition inner(M x + m0)
    VecX<S> m0;
  };

  ConvexFunction() = default;

  // --- factories -----------------------------------------------------------

  static ConvexFunction affine(VecX<S> a, S b) {
    Data d;
    d.tag = FnTag::Affine;
    d.dim = static_cast<int>(a.size());
    d.a = std::move(a);
    d.b = std::move(b);
    return make(std::move(d));
  }

  static ConvexFunction zero(int dim) { return affine(VecX<S>::Zero(dim), S(0)); }

  static ConvexFunction quadratic(MatX<S> Q, VecX<S> a, S b) {
    Data d;
    d.tag = FnTag::Quadratic;
    d.dim = static_cast<int>(a.size());
    if (Q.rows() != d.dim || Q.cols() != d.dim)
      throw std::invalid_argument("quadratic: Q shape");
    for (int i = 0; i < d.dim; ++i)
      for (int j = 0; j < i; ++j) {
        S avg = (Q(i, j) + Q(j, i)) / S(2);
        Q(i, j) = avg;
        Q(j, i) = avg;
      }
    if (!is_psd(Q)) throw std::invalid_argument("quadratic: Q not positive semidefinite");
    d.Q = std::move(Q);
    d.a = std::move(a);
    d.b = std::move(b);
    return make(std::move(d));
  }

  // indicator of { A x <= rhs, C x = ceq }
  static ConvexFunction indicator_polyhedron(MatX<S> A, VecX<S> rhs, MatX<S> C, VecX<S> ceq) {
    Data d;
    d.tag = FnTag::IndicatorPolyhedron;
    d.dim = static_cast<int>(A.cols() > 0 ? A.cols() : C.cols());
    if ((A.rows() > 0 && A.cols() != d.dim) || (C.rows() > 0 && C.cols() != d.dim))
      throw std::invalid_argument("polyhedron: row dims differ");
    d.A = std::move(A);
    d.rhs = std::move(rhs);
    d.C = std::move(C);
    d.ceq = std::move(ceq);
    return make(std::move(d));
  }

  // max_i (a_i . x + b_i); rows of A are the slopes
  static ConvexFunction max_affine(MatX<S> A, VecX<S> b) {
    if (A.rows() == 0) throw std::invalid_argument("max_affine: needs at least one piece");
    Data d;
    d.tag = FnTag::MaxAffine;
    d.dim = static_cast<int>(A.cols());
    d.A = std::move(A);
    d.rhs = std::move(b);
    return make(std::move(d));
  }

  // sup over [lo, hi] of x.s (entries of lo/hi may be infinite via the masks)
  static ConvexFunction support_box(VecX<S> lo, VecX<S> hi, std::vector<bool> lo_fin,
                                    std::vector<bool> hi_fin) {
    Data d;
    d.tag = FnTag::SupportBox;
    d.dim = static_cast<int>(lo.size());
    for (int i = 0; i < d.dim; ++i)
      if (lo_fin[i] && hi_fin[i] && lo[i] > hi[i])
        throw std::invalid_argument("support_box: lo > hi");
    d.lo = std::move(lo);
    d.hi = std::move(hi);
    d.lo_fin = std::move(lo_fin);
    d.hi_fin = std::move(hi_fin);
    return make(std::move(d));
  }

  static ConvexFunction support_box(VecX<S> lo, VecX<S> hi) {
    std::vector<bool> fin(lo.size(), true);
    return support_box(std::move(lo), std::move(hi), fin, fin);
  }

  // One-dimensional losses:
  //   Square            scale/2 (z - shift)^2
  //   Exponential       scale exp(z - shift)
  //   Hinge             scale max(0, z - shift)
  //   LinearIndicator   scale z (+ indicator z >= shift when bounded)
  static ConvexFunction scalar_loss(LossKind kind, S scale, S shift, bool has_bound = false) {
    if constexpr (!std::is_same_v<S, double>) {
      if (kind == LossKind::Exponential)
        throw std::invalid_argument("scalar_loss: exponential requires float mode");
    }
    if (kind != LossKind::LinearIndicator && !(scale > S(0)))
      throw std::invalid_argument("scalar_loss: scale must be > 0");
    Data d;
    d.tag = FnTag::ScalarLoss;
    d.dim = 1;
    d.kind = kind;
    d.scale = std::move(scale);
    d.shift = std::move(shift);
    d.has_bound = kind == LossKind::LinearIndicator ? has_bound : false;
    return make(std::move(d));
  }

  static ConvexFunction sum(std::vector<ConvexFunction> parts) {
    if (parts.empty()) throw std::invalid_argument("sum: empty");
    Data d;
    d.tag = FnTag::Sum;
    d.dim = parts.front().dim();
    for (const auto& p : parts)
      if (p.dim() != d.dim) throw std::invalid_argument("sum: dim mismatch");
    d.parts = std::move(parts);
    return make(std::move(d));
  }

  // inner(M x + m0)
  static ConvexFunction affine_pre(MatX<S> M, VecX<S> m0, ConvexFunction inner) {
    if (M.rows() != inner.dim() || m0.size() != inner.dim())
      throw std::invalid_argument("affine_pre: shape mismatch");
    Data d;
    d.tag = FnTag::AffinePre;
    d.dim = static_cast<int>(M.cols());
    d.M = std::move(M);
    d.m0 = std::move(m0);
    d.parts.push_back(std::move(inner));
    return make(std::move(d));
  }

  // sum_i g_i(x_i) with one-dimensional g_i
  static ConvexFunction separable(std::vector<ConvexFunction> coords) {
    Data d;
    d.tag = FnTag::Separable;
    d.dim = static_cast<int>(coords.size());
    for (const auto& g : coords)
      if (g.dim() != 1) throw std::invalid_argument("separable: parts must be one-dimensional");
    d.parts = std::move(coords);
    return make(std::move(d));
  }

  // --- basic queries --------------------------------------------------------

  int dim() const { return d_->dim; }
  FnTag tag() const { return d_->tag; }
  const Data& data() const { return *d_; }

  bool is_polyhedral() const {
    switch (d_->tag) {
      case FnTag::Affine:
      case FnTag::IndicatorPolyhedron:
      case FnTag::MaxAffine:
      case FnTag::SupportBox:
        return true;
      case FnTag::Quadratic:
        return d_->Q.isZero(S(0));
      case FnTag::ScalarLoss:
        return d_->kind == LossKind::Hinge || d_->kind == LossKind::LinearIndicator;
      case FnTag::Sum:
      case FnTag::Separable:
      case FnTag::AffinePre:
        for (const auto& p : d_->parts)
          if (!p.is_polyhedral()) return false;
        return true;
    }
    return false;
  }

  // Representable as a QP epigraph (quadratic cost + linear constraints).
  bool is_qp_representable() const {
    switch (d_->tag) {
      case FnTag::Quadratic:
        return true;
      case FnTag::ScalarLoss:
        return d_->kind != LossKind::Exponential;
      case FnTag::Sum:
      case FnTag::Separable:
      case FnTag::AffinePre:
        for (const auto& p : d_->parts)
          if (!p.is_qp_representable()) return false;
        return true;
      default:
        return is_polyhedral();
    }
  }

  bool is_smooth() const {
    switch (d_->tag) {
      case FnTag::Affine:
      case FnTag::Quadratic:
        return true;
      case FnTag::ScalarLoss:
        return d_->kind == LossKind::Square || d_->kind == LossKind::Exponential;
      case FnTag::Sum:
      case FnTag::Separable:
      case FnTag::AffinePre:
        for (const auto& p : d_->parts)
          if (!p.is_smooth()) return false;
        return true;
      default:
        return false;
    }
  }

  // alpha f for alpha > 0
  ConvexFunction scaled(const S& alpha) const {
    if (!(alpha > S(0))) throw std::invalid_argument("scaled: alpha must be > 0");
    if (alpha == S(1)) return *this;
    Data d = *d_;
    switch (d.tag) {
      case FnTag::Affine:
        d.a *= alpha;
        d.b *= alpha;
        break;
      case FnTag::Quadratic:
        d.Q *= alpha;
        d.a *= alpha;
        d.b *= alpha;
        break;
      case FnTag::IndicatorPolyhedron:
        break;
      case FnTag::MaxAffine:
        d.A *= alpha;
        d.rhs *= alpha;
        break;
      case FnTag::SupportBox:
        d.lo *= alpha;
        d.hi *= alpha;
        break;
      case FnTag::ScalarLoss:
        d.scale *= alpha;
        break;
      case FnTag::Sum:
      case FnTag::Separable:
      case FnTag::AffinePre: {
        std::vector<ConvexFunction> parts;
        if (d.tag == FnTag::AffinePre) {
          parts.push_back(d.parts[0].scaled(alpha));
        } else {
          for (const auto& p : d.parts) parts.push_back(p.scaled(alpha));
        }
        d.parts = std::move(parts);
        break;
      }
    }
    return make(std::move(d));
  }

  // --- evaluation -----------------------------------------------------------

  Valuation<S> eval_ex(const VecX<S>& x) const {
    check_dim(x);
    switch (d_->tag) {
      case FnTag::Affine:
        return {ExtReal<S>(S(d_->a.dot(x) + d_->b)), S(0), true};
      case FnTag::Quadratic:
        return {ExtReal<S>(S(quad_form(d_->Q, x) / S(2) + d_->a.dot(x) + d_->b)), S(0), true};
      case FnTag::IndicatorPolyhedron: {
        S viol(0);
        for (int i = 0; i < d_->A.rows(); ++i)
          viol = std::max(viol, S(d_->A.row(i).dot(x) - d_->rhs[i]));
        for (int i = 0; i < d_->C.rows(); ++i)
          viol = std::max(viol, abs_val(S(d_->C.row(i).dot(x) - d_->ceq[i])));
        return {ExtReal<S>(S(0)), std::max(viol, S(0)), true};
      }
      case FnTag::MaxAffine: {
        S best = S(d_->A.row(0).dot(x) + d_->rhs[0]);
        for (int i = 1; i < d_->A.rows(); ++i)
          best = std::max(best, S(d_->A.row(i).dot(x) + d_->rhs[i]));
        return {ExtReal<S>(best), S(0), true};
      }
      case FnTag::SupportBox: {
        S total(0);
        for (int i = 0; i < d_->dim; ++i) {
          if (x[i] > S(0)) {
            if (!d_->hi_fin[i]) return {ExtReal<S>::pos_inf(), S(0), true};
            total += d_->hi[i] * x[i];
          } else if (x[i] < S(0)) {
            if (!d_->lo_fin[i]) return {ExtReal<S>::pos_inf(), S(0), true};
            total += d_->lo[i] * x[i];
          }
        }
        return {ExtReal<S>(total), S(0), true};
      }
      case FnTag::ScalarLoss: {
        const S z = x[0];
        switch (d_->kind) {
          case LossKind::Square: {
            S w = z - d_->shift;
            return {ExtReal<S>(S(d_->scale * w * w / S(2))), S(0), true};
          }
          case LossKind::Exponential:
            if constexpr (std::is_same_v<S, double>) {
              return {ExtReal<S>(d_->scale * std::exp(z - d_->shift)), S(0), true};
            } else {
              throw std::logic_error("exponential loss in exact mode");
            }
          case LossKind::Hinge:
            return {ExtReal<S>(std::max(S(0), S(d_->scale * (z - d_->shift)))), S(0), true};
          case LossKind::LinearIndicator: {
            S viol = d_->has_bound ? std::max(S(0), S(d_->shift - z)) : S(0);
            return {ExtReal<S>(S(d_->scale * z)), viol, true};
          }
        }
        throw std::logic_error("unreachable");
      }
      case FnTag::Sum: {
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        for (const auto& p : d_->parts) {
          auto v = p.eval_ex(x);
          out.value += v.value;
          out.violation = std::max(out.violation, v.violation);
          out.exact = out.exact && v.exact;
        }
        return out;
      }
      case FnTag::AffinePre:
        return d_->parts[0].eval_ex(VecX<S>(mat_vec(d_->M, x) + d_->m0));
      case FnTag::Separable: {
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        VecX<S> xi(1);
        for (int i = 0; i < d_->dim; ++i) {
          xi[0] = x[i];
          auto v = d_->parts[i].eval_ex(xi);
          out.value += v.value;
          out.violation = std::max(out.violation, v.violation);
          out.exact = out.exact && v.exact;
        }
        return out;
      }
    }
    throw std::logic_error("unreachable");
  }

  ExtReal<S> eval(const VecX<S>& x) const { return eval_ex(x).fold(S(0)); }

  // --- conjugate f*(v) = sup_x { x.v - f(x) } --------------------------------

  Valuation<S> conjugate_ex(const VecX<S>& v) const {
    check_dim(v);
    switch (d_->tag) {
      case FnTag::Affine:
        return {ExtReal<S>(S(-d_->b)), inf_norm<S>(v - d_->a), true};
      case FnTag::Quadratic: {
        VecX<S> w = v - d_->a;
        auto sol = solve_linear<S>(d_->Q, w);
        S viol = inf_norm<S>(VecX<S>(mat_vec(d_->Q, sol.x) - w));
        return {ExtReal<S>(S(S(w.dot(sol.x)) / S(2) - d_->b)), viol, true};
      }
      case FnTag::IndicatorPolyhedron: {
        // support function: sup { x.v : x in P } by LP
        auto lp = solve_lp<S>(d_->A, d_->rhs, d_->C, d_->ceq, VecX<S>(-v));
        if (lp.status == LpStatus::Unbounded) return {ExtReal<S>::pos_inf(), S(0), true};
        if (lp.status == LpStatus::Infeasible)
          return {ExtReal<S>::neg_inf(), S(0), true};  // empty domain, improper
        return {ExtReal<S>(S(-lp.objective)), S(0), true};
      }
      case FnTag::MaxAffine: {
        // min -sum lambda_i b_i over the convex weights reproducing v,
        // elasticized so nearby v get the value at the projected point.
        const int k = static_cast<int>(d_->A.rows());
        const int n = d_->dim;
        const int nv = k + 2 * n;
        MatX<S> A = MatX<S>::Zero(nv, nv);
        for (int i = 0; i < nv; ++i) A(i, i) = S(-1);  // all vars >= 0
        VecX<S> b = VecX<S>::Zero(nv);
        MatX<S> E = MatX<S>::Zero(n + 1, nv);
        VecX<S> dvec(n + 1);
        for (int j = 0; j < n; ++j) {
          for (int i = 0; i < k; ++i) E(j, i) = d_->A(i, j);
          E(j, k + j) = S(1);
          E(j, k + n + j) = S(-1);
          dvec[j] = v[j];
        }
        for (int i = 0; i < k; ++i) E(n, i) = S(1);
        dvec[n] = S(1);
        VecX<S> c = VecX<S>::Zero(nv);
        const S big = S(1000000000);
        for (int i = 0; i < k; ++i) c[i] = -d_->rhs[i];
        for (int j = 0; j < 2 * n; ++j) c[k + j] = big;
        auto lp = solve_lp<S>(A, b, E, dvec, c);
        if (lp.status != LpStatus::Optimal)
          throw std::runtime_error("max_affine conjugate: internal LP failed");
        S viol(0), val(0);
        for (int i = 0; i < k; ++i) val -= d_->rhs[i] * lp.z[i];
        for (int j = 0; j < 2 * n; ++j) viol += lp.z[k + j];
        return {ExtReal<S>(val), viol, true};
      }
      case FnTag::SupportBox: {
        S viol(0);
        for (int i = 0; i < d_->dim; ++i) {
          if (d_->hi_fin[i]) viol = std::max(viol, S(v[i] - d_->hi[i]));
          if (d_->lo_fin[i]) viol = std::max(viol, S(d_->lo[i] - v[i]));
        }
        return {ExtReal<S>(S(0)), std::max(viol, S(0)), true};
      }
      case FnTag::ScalarLoss: {
        const S y = v[0];
        switch (d_->kind) {
          case LossKind::Square:
            return {ExtReal<S>(S(d_->shift * y + y * y / (S(2) * d_->scale))), S(0), true};
          case LossKind::Exponential:
            if constexpr (std::is_same_v<S, double>) {
              S viol = std::max(S(0), S(-y));
              S ye = std::max(y, S(0));
              S val = ye > S(0) ? ye * std::log(ye / d_->scale) - ye + d_->shift * ye : S(0);
              return {ExtReal<S>(val), viol, true};
            } else {
              throw std::logic_error("exponential loss in exact mode");
            }
          case LossKind::Hinge: {
            S viol = std::max(std::max(S(0), S(-y)), S(y - d_->scale));
            S ye = std::min(std::max(y, S(0)), d_->scale);
            return {ExtReal<S>(S(d_->shift * ye)), viol, true};
          }
          case LossKind::LinearIndicator: {
            if (!d_->has_bound) return {ExtReal<S>(S(0)), abs_val(S(y - d_->scale)), true};
            S viol = std::max(S(0), S(y - d_->scale));
            S ye = std::min(y, d_->scale);
            return {ExtReal<S>(S(d_->shift * (ye - d_->scale))), viol, true};
          }
        }
        throw std::logic_error("unreachable");
      }
      case FnTag::Sum: {
        // exact when at most one summand is non-affine
        int hard = -1;
        bool several_hard = false;
        VecX<S> ashift = VecX<S>::Zero(d_->dim);
        S bshift(0);
        for (std::size_t i = 0; i < d_->parts.size(); ++i) {
          if (d_->parts[i].tag() == FnTag::Affine) {
            ashift += d_->parts[i].data().a;
            bshift += d_->parts[i].data().b;
          } else if (hard < 0) {
            hard = static_cast<int>(i);
          } else {
            several_hard = true;
          }
        }
        if (!several_hard) {
          if (hard < 0) {
            return {ExtReal<S>(S(-bshift)), inf_norm<S>(v - ashift), true};
          }
          auto inner = d_->parts[hard].conjugate_ex(VecX<S>(v - ashift));
          inner.value += ExtReal<S>(S(-bshift));
          return inner;
        }
        // also exact when the non-affine parts live on disjoint blocks
        if (auto split = block_separable_conjugate(v)) return *split;
        return numeric_conjugate(v);
      }
      case FnTag::AffinePre: {
        // exact for invertible M: f*(v) = g*(M^-T v) - m0 . M^-T v
        if (d_->M.rows() == d_->M.cols()) {
          auto sol = solve_linear<S>(transpose_of(d_->M), v);
          if (sol.consistent && !(sol.residual > S(0))) {
            auto inner = d_->parts[0].conjugate_ex(sol.x);
            inner.value += ExtReal<S>(S(-d_->m0.dot(sol.x)));
            return inner;
          }
        }
        return numeric_conjugate(v);
      }
      case FnTag::Separable: {
        Valuation<S> out{ExtReal<S>(S(0)), S(0), true};
        VecX<S> vi(1);
        for (int i = 0; i < d_->dim; ++i) {
          vi[0] = v[i];
          auto c = d_->parts[i].conjugate_ex(vi);
          out.value += c.value;
          out.violation = std::max(out.violation, c.violation);
          out.exact = out.exact && c.exact;
        }
        return out;
      }
    }
    throw std::logic_error("unreachable");
  }

  ExtReal<S> conjugate(const VecX<S>& v) const { return conjugate_ex(v).fold(S(0)); }

  // --- recession function ----------------------------------------------------

  ExtReal<S> recession(const VecX<S>& dir) const {
    check_dim(dir);
    const S tol = recession_tol(dir);
    switch (d_->tag) {
      case FnTag::Affine:
        return ExtReal<S>(S(d_->a.dot(dir)));
      case FnTag::Quadratic:
        if (inf_norm<S>(mat_vec(d_->Q, dir)) > tol) return ExtReal<S>::pos_inf();
        return ExtReal<S>(S(d_->a.dot(dir)));
      case FnTag::IndicatorPolyhedron: {
        for (int i = 0; i < d_->A.rows(); ++i)
          if (d_->A.row(i).dot(dir) > tol) return ExtReal<S>::pos_inf();
        for (int i = 0; i < d_->C.rows(); ++i)
          if (abs_val(S(d_->C.row(i).dot(dir))) > tol) return ExtReal<S>::pos_inf();
        return ExtReal<S>(S(0));
      }
      case FnTag::MaxAffine: {
        S best = S(d_->A.row(0).dot(dir));
        for (int i = 1; i < d_->A.rows(); ++i) best = std::max(best, S(d_->A.row(i).dot(dir)));
        return ExtReal<S>(best);
      }
      case FnTag::SupportBox:
        return eval(dir);  // positively homogeneous
      case FnTag::ScalarLoss: {
        const S z = dir[0];
        switch (d_->kind) {
          case LossKind::Square:
            return abs_val(z) > tol ? ExtReal<S>::pos_inf() : ExtReal<S>(S(0));
          case LossKind::Exponential:
            return z > tol ? ExtReal<S>::pos_inf() : ExtReal<S>(S(0));
          case LossKind::Hinge:
            return ExtReal<S>(std::max(S(0), S(d_->scale * z)));
          case LossKind::LinearIndicator:
            if (d_->has_bound && z < -tol) return ExtReal<S>::pos_inf();
            return ExtReal<S>(S(d_->scale * z));
        }
        throw std::logic_error("unreachable");
      }
      case FnTag::Sum: {
        ExtReal<S> total(S(0));
        for (const auto& p : d_->parts) total += p.recession(dir);
        return total;
      }
      case FnTag::AffinePre:
        return d_->parts[0].recession(mat_vec(d_->M, dir));
      case FnTag::Separable: {
        ExtReal<S> total(S(0));
        VecX<S> di(1);
        for (int i = 0; i < d_->dim; ++i) {
          di[0] = dir[i];
          total += d_->parts[i].recession(di);
        }
        return total;
      }
    }
    throw std::logic_error("unreachable");
  }

  // --- subgradients -----------------------------------------------------------

  // True iff f(x) and f*(v) are finite (within tol) and the Fenchel gap
  // f(x) + f*(v) - x.v is at most tol.
  bool subgradient_check(const VecX<S>& x, const VecX<S>& v, const S& tol) const {
    auto fx = eval_ex(x);
    auto fs = conjugate_ex(v);
    if (!fx.value.is_finite() || fx.violation > tol) return false;
    if (!fs.value.is_finite() || fs.violation > tol) return false;
    return S(fx.value.value() + fs.value.value() - x.dot(v)) <= tol;
  }

  // A canonical subgradient at a feasible point. Ties resolve to the lowest
  // indexed active piece; indicators contribute zero.
  VecX<S> subgradient_select(const VecX<S>& x) const {
    check_dim(x);
    switch (d_->tag) {
      case FnTag::Affine:
        return d_->a;
      case FnTag::Quadratic:
        return VecX<S>(mat_vec(d_->Q, x) + d_->a);
      case FnTag::IndicatorPolyhedron:
        return VecX<S>::Zero(d_->dim);
      case FnTag::MaxAffine: {
        int best = 0;
        S bv = S(d_->A.row(0).dot(x) + d_->rhs[0]);
        for (int i = 1; i < d_->A.rows(); ++i) {
          S vi = S(d_->A.row(i).dot(x) + d_->rhs[i]);
          if (vi > bv) {
            bv = vi;
            best = i;
          }
        }
        return d_->A.row(best).transpose();
      }
      case FnTag::SupportBox: {
        VecX<S> g(d_->dim);
        for (int i = 0; i < d_->dim; ++i) {
          if (x[i] > S(0))
            g[i] = d_->hi[i];
          else if (x[i] < S(0))
            g[i] = d_->lo[i];
          else {
            // any point of [lo,hi]; take the one closest to zero
            S cand(0);
            if (d_->lo_fin[i] && d_->lo[i] > S(0)) cand = d_->lo[i];
            if (d_->hi_fin[i] && d_->hi[i] < S(0)) cand = d_->hi[i];
            g[i] = cand;
          }
        }
        return g;
      }
      case FnTag::ScalarLoss: {
        VecX<S> g(1);
        const S z = x[0];
        switch (d_->kind) {
          case LossKind::Square:
            g[0] = d_->scale * (z - d_->shift);
            return g;
          case LossKind::Exponential:
            if constexpr (std::is_same_v<S, double>) {
              g[0] = d_->scale * std::exp(z - d_->shift);
              return g;
            } else {
              throw std::logic_error("exponential loss in exact mode");
            }
          case LossKind::Hinge:
            g[0] = z > d_->shift ? d_->scale : S(0);
            return g;
          case LossKind::LinearIndicator:
            g[0] = d_->scale;
            return g;
        }
        throw std::logic_error("unreachable");
      }
      case FnTag::Sum: {
        VecX<S> g = VecX<S>::Zero(d_->dim);
        for (const auto& p : d_->parts) g += p.subgradient_select(x);
        return g;
      }
      case FnTag::AffinePre:
        return mat_tvec(d_->M,
                        d_->parts[0].subgradient_select(VecX<S>(mat_vec(d_->M, x) + d_->m0)));
      case FnTag::Separable: {
        VecX<S> g(d_->dim);
        VecX<S> xi(1);
        for (int i = 0; i < d_->dim; ++i) {
          xi[0] = x[i];
          g[i] = d_->parts[i].subgradient_select(xi)[0];
        }
        return g;
      }
    }
    throw std::logic_error("unreachable");
  }

  // --- proximal map ------------------------------------------------------------

  // argmin_z f(z) + |z - x|^2 / (2 step)
  VecX<S> prox(const VecX<S>& x, const S& step) const {
    check_dim(x);
    if (!(step > S(0))) throw std::invalid_argument("prox: step must be > 0");
    switch (d_->tag) {
      case FnTag::Affine:
        return VecX<S>(x - scale_vec(step, d_->a));
      case FnTag::Quadratic: {
        MatX<S> K = d_->Q;
        for (int i = 0; i < d_->dim; ++i)
          for (int j = 0; j < d_->dim; ++j) K(i, j) = step * K(i, j) + (i == j ? S(1) : S(0));
        return solve_linear<S>(K, VecX<S>(x - scale_vec(step, d_->a))).x;
      }
      case FnTag::IndicatorPolyhedron:
        return project_polyhedron(x);
      case FnTag::MaxAffine: {
        if constexpr (std::is_same_v<S, double>) {
          // epigraph QP: min t + |z - x|^2/(2 step) st a_i z + b_i <= t
          const int n = d_->dim;
          const int k = static_cast<int>(d_->A.rows());
          QpProblem qp;
          qp.Q = MatX<double>::Zero(n + 1, n + 1);
          qp.Q.topLeftCorner(n, n) = MatX<double>::Identity(n, n) / step;
          qp.c = VecX<double>::Zero(n + 1);
          qp.c.head(n) = -x / step;
          qp.c[n] = 1.0;
          qp.A = MatX<double>::Zero(k, n + 1);
          qp.A.leftCols(n) = d_->A;
          qp.A.col(n).setConstant(-1.0);
          qp.b = -d_->rhs;
          auto r = solve_qp(qp);
          return r.z.head(n);
        } else {
          throw std::domain_error("prox: max_affine requires float mode");
        }
      }
      case FnTag::SupportBox: {
        // Moreau: prox of a support function via projection on the box
        VecX<S> z(d_->dim);
        for (int i = 0; i < d_->dim; ++i) {
          S w = x[i] / step;
          if (d_->hi_fin[i] && w > d_->hi[i]) w = d_->hi[i];
          if (d_->lo_fin[i] && w < d_->lo[i]) w = d_->lo[i];
          z[i] = x[i] - step * w;
        }
        return z;
      }
      case FnTag::ScalarLoss: {
        VecX<S> z(1);
        const S w = x[0];
        switch (d_->kind) {
          case LossKind::Square:
            z[0] = (w + step * d_->scale * d_->shift) / (S(1) + step * d_->scale);
            return z;
          case LossKind::Exponential:
            if constexpr (std::is_same_v<S, double>) {
              // solve z + step*scale*exp(z - shift) = w by Newton
              double zz = std::min(w, d_->shift);
              for (int it = 0; it < 100; ++it) {
                double e = d_->scale * std::exp(zz - d_->shift);
                double g = zz + step * e - w;
                double dg = 1.0 + step * e;
                double nz = zz - g / dg;
                if (std::abs(nz - zz) < 1e-15 * (1.0 + std::abs(zz))) {
                  zz = nz;
                  break;
                }
                zz = nz;
              }
              z[0] = zz;
              return z;
            } else {
              throw std::logic_error("exponential loss in exact mode");
            }
          case LossKind::Hinge: {
            if (w - step * d_->scale > d_->shift)
              z[0] = w - step * d_->scale;
            else if (w < d_->shift)
              z[0] = w;
            else
              z[0] = d_->shift;
            return z;
          }
          case LossKind::LinearIndicator: {
            S cand = w - step * d_->scale;
            if (d_->has_bound && cand < d_->shift) cand = d_->shift;
            z[0] = cand;
            return z;
          }
        }
        throw std::logic_error("unreachable");
      }
      case FnTag::Sum: {
        // prox-friendly when all but one part is affine
        int hard = -1;
        VecX<S> ashift = VecX<S>::Zero(d_->dim);
        for (std::size_t i = 0; i < d_->parts.size(); ++i) {
          if (d_->parts[i].tag() == FnTag::Affine) {
            ashift += d_->parts[i].data().a;
          } else if (hard < 0) {
            hard = static_cast<int>(i);
          } else {
            throw std::domain_error("prox: sum with several non-affine parts");
          }
        }
        VecX<S> base = x - scale_vec(step, ashift);
        if (hard < 0) return base;
        return d_->parts[hard].prox(base, step);
      }
      case FnTag::AffinePre:
        throw std::domain_error("prox: affine precomposition is not prox-friendly");
      case FnTag::Separable: {
        VecX<S> z(d_->dim);
        VecX<S> xi(1);
        for (int i = 0; i < d_->dim; ++i) {
          xi[0] = x[i];
          z[i] = d_->parts[i].prox(xi, step)[0];
        }
        return z;
      }
    }
    throw std::logic_error("unreachable");
  }

 private:
  static ConvexFunction make(Data d) {
    ConvexFunction f;
    f.d_ = std::make_shared<const Data>(std::move(d));
    return f;
  }

  void check_dim(const VecX<S>& x) const {
    if (static_cast<int>(x.size()) != d_->dim)
      throw std::invalid_argument("convex function: dimension mismatch");
  }

  static S recession_tol(const VecX<S>& dir) {
    if constexpr (std::is_same_v<S, double>) {
      return 1e-10 * (1.0 + inf_norm<S>(dir));
    } else {
      (void)dir;
      return S(0);
    }
  }

  static bool is_psd(const MatX<S>& Q) {
    if constexpr (std::is_same_v<S, double>) {
      if (Q.size() == 0) return true;
      Eigen::SelfAdjointEigenSolver<MatX<double>> es(Q, Eigen::EigenvaluesOnly);
      return es.eigenvalues().minCoeff() >= -1e-10;
    } else {
      // exact symmetric pivoting: Schur complements keep rational entries
      MatX<S> M = Q;
      const int n = static_cast<int>(M.rows());
      std::vector<bool> done(n, false);
      for (int round = 0; round < n; ++round) {
        int piv = -1;
        for (int i = 0; i < n; ++i) {
          if (done[i]) continue;
          if (M(i, i) < S(0)) return false;
          if (M(i, i) > S(0) && piv < 0) piv = i;
        }
        if (piv < 0) {
          for (int i = 0; i < n; ++i) {
            if (done[i]) continue;
            for (int j = 0; j < n; ++j)
              if (!done[j] && M(i, j) != S(0)) return false;
          }
          return true;
        }
        done[piv] = true;
        for (int i = 0; i < n; ++i) {
          if (done[i]) continue;
          for (int j = 0; j < n; ++j) {
            if (done[j]) continue;
            M(i, j) -= M(i, piv) * M(piv, j) / M(piv, piv);
          }
        }
      }
      return true;
    }
  }

  std::optional<Valuation<S>> block_separable_conjugate(const VecX<S>& v) const {
    VecX<S> ashift = VecX<S>::Zero(d_->dim);
    S bshift(0);
    struct Piece {
      int lo, len;
      ConvexFunction fn;
    };
    std::vector<Piece> pieces;
    std::vector<bool> covered(d_->dim, false);
    for (const auto& part : d_->parts) {
      if (part.tag() == FnTag::Affine) {
        ashift += part.data().a;
        bshift += part.data().b;
        continue;
      }
      auto mask = depends_mask(part);
      int lo = -1, hi = -1;
      for (int i = 0; i < d_->dim; ++i)
        if (mask[i]) {
          if (lo < 0) lo = i;
          hi = i;
        }
      if (lo < 0) return std::nullopt;
      auto restricted = restrict_to_block(part, lo, hi - lo + 1);
      if (!restricted) return std::nullopt;
      for (int i = lo; i <= hi; ++i) {
        if (covered[i]) return std::nullopt;
        covered[i] = true;
      }
      pieces.push_back({lo, hi - lo + 1, *restricted});
    }
    Valuation<S> out{ExtReal<S>(S(-bshift)), S(0), true};
    VecX<S> w = v - ashift;
    for (const auto& pc : pieces) {
      VecX<S> slice(pc.len);
      for (int i = 0; i < pc.len; ++i) slice[i] = w[pc.lo + i];
      auto c = pc.fn.conjugate_ex(slice);
      out.value += c.value;
      out.violation = std::max(out.violation, c.violation);
      out.exact = out.exact && c.exact;
    }
    for (int i = 0; i < d_->dim; ++i)
      if (!covered[i]) out.violation = std::max(out.violation, abs_val(w[i]));
    return out;
  }

  Valuation<S> numeric_conjugate(const VecX<S>& v) const {
    if constexpr (std::is_same_v<S, double>) {
      if (d_->dim > 2)
        throw std::domain_error("conjugate: no closed form and dimension too large for fallback");
      VecX<S> lo = VecX<S>::Constant(d_->dim, -20.0);
      VecX<S> hi = VecX<S>::Constant(d_->dim, 20.0);
      auto val = conjugate_numeric(*this, v, lo, hi, d_->dim == 1 ? 1e-3 : 2e-2);
      return {val, S(0), false};
    } else {
      throw std::domain_error("conjugate: no closed form in exact mode");
    }
  }

  VecX<S> project_polyhedron(const VecX<S>& x) const {
    if constexpr (std::is_same_v<S, double>) {
      QpProblem qp;
      const int n = d_->dim;
      qp.Q = MatX<double>::Identity(n, n);
      qp.c = -x;
      qp.A = d_->A;
      qp.b = d_->rhs;
      qp.E = d_->C;
      qp.d = d_->ceq;
      auto r = solve_qp(qp);
      return r.z;
    } else {
      throw std::domain_error("prox: polyhedral projection requires float mode");
    }
  }

  template <class T>
  friend ExtReal<T> conjugate_numeric(const ConvexFunction<T>& f, const VecX<T>& v,
                                      const VecX<T>& lo, const VecX<T>& hi, const T& step);

  std::shared_ptr<const Data> d_;
};

template <class S>
std::vector<bool> depends_mask(const ConvexFunction<S>& f) {
  const auto& d = f.data();
  std::vector<bool> mask(f.dim(), false);
  switch (f.tag()) {
    case FnTag::Affine:
      for (int i = 0; i < f.dim(); ++i) mask[i] = d.a[i] != S(0);
      break;
    case FnTag::Quadratic:
      for (int i = 0; i < f.dim(); ++i) {
        mask[i] = d.a[i] != S(0);
        for (int j = 0; j < f.dim() && !mask[i]; ++j) mask[i] = d.Q(i, j) != S(0);
      }
      break;
    case FnTag::IndicatorPolyhedron:
      for (int i = 0; i < f.dim(); ++i) {
        for (int r = 0; r < d.A.rows() && !mask[i]; ++r) mask[i] = d.A(r, i) != S(0);
        for (int r = 0; r < d.C.rows() && !mask[i]; ++r) mask[i] = d.C(r, i) != S(0);
      }
      break;
    case FnTag::MaxAffine:
      for (int i = 0; i < f.dim(); ++i)
        for (int r = 0; r < d.A.rows() && !mask[i]; ++r) mask[i] = d.A(r, i) != S(0);
      break;
    case FnTag::SupportBox:
      for (int i = 0; i < f.dim(); ++i)
        mask[i] = !(d.lo_fin[i] && d.hi_fin[i] && d.lo[i] == S(0) && d.hi[i] == S(0));
      break;
    case FnTag::ScalarLoss:
      mask[0] = true;
      break;
    case FnTag::Sum:
      for (const auto& p : d.parts) {
        auto sub = depends_mask(p);
        for (int i = 0; i < f.dim(); ++i) mask[i] = mask[i] || sub[i];
      }
      break;
    case FnTag::AffinePre: {
      auto inner = depends_mask(d.parts[0]);
      for (int j = 0; j < f.dim(); ++j)
        for (int r = 0; r < d.M.rows() && !mask[j]; ++r)
          mask[j] = inner[r] && d.M(r, j) != S(0);
      break;
    }
    case FnTag::Separable:
      for (int i = 0; i < f.dim(); ++i) mask[i] = depends_mask(d.parts[i])[0];
      break;
  }
  return mask;
}

template <class S>
std::optional<ConvexFunction<S>> restrict_to_block(const ConvexFunction<S>& f, int lo, int len) {
  const auto& d = f.data();
  auto mask = depends_mask(f);
  for (int i = 0; i < f.dim(); ++i)
    if (mask[i] && (i < lo || i >= lo + len)) return std::nullopt;
  using Fn = ConvexFunction<S>;
  switch (f.tag()) {
    case FnTag::Affine: {
      VecX<S> a(len);
      for (int i = 0; i < len; ++i) a[i] = d.a[lo + i];
      return Fn::affine(a, d.b);
    }
    case FnTag::Quadratic: {
      MatX<S> Q(len, len);
      VecX<S> a(len);
      for (int i = 0; i < len; ++i) {
        a[i] = d.a[lo + i];
        for (int j = 0; j < len; ++j) Q(i, j) = d.Q(lo + i, lo + j);
      }
      return Fn::quadratic(Q, a, d.b);
    }
    case FnTag::IndicatorPolyhedron: {
      MatX<S> A(d.A.rows(), len), C(d.C.rows(), len);
      for (int r = 0; r < d.A.rows(); ++r)
        for (int j = 0; j < len; ++j) A(r, j) = d.A(r, lo + j);
      for (int r = 0; r < d.C.rows(); ++r)
        for (int j = 0; j < len; ++j) C(r, j) = d.C(r, lo + j);
      return Fn::indicator_polyhedron(A, d.rhs, C, d.ceq);
    }
    case FnTag::MaxAffine: {
      MatX<S> A(d.A.rows(), len);
      for (int r = 0; r < d.A.rows(); ++r)
        for (int j = 0; j < len; ++j) A(r, j) = d.A(r, lo + j);
      return Fn::max_affine(A, d.rhs);
    }
    case FnTag::SupportBox: {
      VecX<S> l(len), h(len);
      std::vector<bool> lf(len), hf(len);
      for (int i = 0; i < len; ++i) {
        l[i] = d.lo[lo + i];
        h[i] = d.hi[lo + i];
        lf[i] = d.lo_fin[lo + i];
        hf[i] = d.hi_fin[lo + i];
      }
      return Fn::support_box(l, h, lf, hf);
    }
    case FnTag::ScalarLoss:
      return f;  // already one-dimensional
    case FnTag::Sum: {
      std::vector<Fn> parts;
      for (const auto& p : d.parts) {
        auto r = restrict_to_block(p, lo, len);
        if (!r) return std::nullopt;
        parts.push_back(*r);
      }
      return Fn::sum(std::move(parts));
    }
    case FnTag::AffinePre: {
      MatX<S> M(d.M.rows(), len);
      for (int r = 0; r < d.M.rows(); ++r)
        for (int j = 0; j < len; ++j) M(r, j) = d.M(r, lo + j);
      return Fn::affine_pre(M, d.m0, d.parts[0]);
    }
    case FnTag::Separable: {
      std::vector<Fn> parts(d.parts.begin() + lo, d.parts.begin() + lo + len);
      return Fn::separable(std::move(parts));
    }
  }
  return std::nullopt;
}

// Brute-force grid maximization of x.v - f(x) over a box; the independent
// oracle used by tests to validate conjugate_ex.
template <class S>
ExtReal<S> conjugate_numeric(const ConvexFunction<S>& f, const VecX<S>& v, const VecX<S>& lo,
                             const VecX<S>& hi, const S& step) {
  const int n = f.dim();
  std::vector<long> counts(n);
  for (int i = 0; i < n; ++i) {
    counts[i] = static_cast<long>(to_double((hi[i] - lo[i]) / step)) + 1;
    if (counts[i] < 1) counts[i] = 1;
  }
  VecX<S> x(n);
  std::vector<long> idx(n, 0);
  bool any = false;
  S best(0);
  while (true) {
    for (int i = 0; i < n; ++i) x[i] = lo[i] + S(static_cast<double>(idx[i])) * step;
    auto fx = f.eval(x);
    if (fx.is_finite()) {
      S cand = S(x.dot(v) - fx.value());
      if (!any || cand > best) {
        best = cand;
        any = true;
      }
    }
    int k = 0;
    while (k < n && ++idx[k] >= counts[k]) idx[k++] = 0;
    if (k == n) break;
  }
  if (!any) return ExtReal<S>::neg_inf();
  return ExtReal<S>(best);
}

}  // namespace stochdual
