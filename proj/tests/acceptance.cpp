// Acceptance suite: one pass/fail line per criterion. Run as
//   acceptance <cli-binary> <fixtures-dir>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stochdual/certify.hpp"
#include "stochdual/io.hpp"

using namespace stochdual;

namespace {

int failures = 0;

// Two-stage grid maximization of x.v - f(x): the objective is concave in x,
// so a coarse pass brackets the maximizer and a fine pass resolves it.
template <class F>
stochdual::ExtReal<double> zoom_conjugate_oracle(const F& f, const stochdual::VecX<double>& v,
                                                 double span, double coarse, double fine) {
  using stochdual::VecX;
  const int n = f.dim();
  VecX<double> lo = VecX<double>::Constant(n, -span);
  VecX<double> hi = VecX<double>::Constant(n, span);
  auto pass = [&](const VecX<double>& l, const VecX<double>& h, double step,
                  VecX<double>* arg) -> stochdual::ExtReal<double> {
    std::vector<long> counts(n);
    for (int i = 0; i < n; ++i) counts[i] = static_cast<long>((h[i] - l[i]) / step) + 1;
    VecX<double> x(n);
    std::vector<long> idx(n, 0);
    bool any = false;
    double best = 0;
    while (true) {
      for (int i = 0; i < n; ++i) x[i] = l[i] + static_cast<double>(idx[i]) * step;
      auto fx = f.eval(x);
      if (fx.is_finite()) {
        double cand = x.dot(v) - fx.value();
        if (!any || cand > best) {
          best = cand;
          any = true;
          if (arg) *arg = x;
        }
      }
      int k = 0;
      while (k < n && ++idx[k] >= counts[k]) idx[k++] = 0;
      if (k == n) break;
    }
    if (!any) return stochdual::ExtReal<double>::neg_inf();
    return stochdual::ExtReal<double>(best);
  };
  VecX<double> peak = VecX<double>::Zero(n);
  auto first = pass(lo, hi, coarse, &peak);
  if (!first.is_finite()) return first;
  VecX<double> l2 = peak - VecX<double>::Constant(n, 2 * coarse);
  VecX<double> h2 = peak + VecX<double>::Constant(n, 2 * coarse);
  auto second = pass(l2, h2, fine, nullptr);
  return second.is_finite() && second.value() > first.value() ? second : first;
}


struct Criterion {
  explicit Criterion(int id, std::string what) : id_(id), what_(std::move(what)) {
    start_ = std::chrono::steady_clock::now();
  }
  void finish(bool ok, const std::string& detail = "") {
    auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::printf("%s criterion %d: %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", id_, what_.c_str(),
                secs, detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++failures;
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  int id_;
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

int run_cmd(const std::string& cmd) {
  int rc = std::system((cmd + " > /dev/null 2> /dev/null").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- criterion 1: weak duality on fixtures + random feasible pairs ----------

bool weak_duality_all(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const int reps = 1000;

  {  // hedging
    auto sp = fixtures::hedging_fixture();
    for (int i = 0; i < reps; ++i) {
      AdaptedProcess<double> x(sp.tree, sp.dims);
      x.at(1, 0) = u(rng);
      double y1 = std::abs(u(rng));
      RandomVariable<double> y(sp.tree, 1);
      y.at(0, 0) = y1;
      y.at(1, 0) = 2.0 * y1;
      auto gap = weak_duality_gap(sp, x, hedging_dual_from_y(sp, y));
      if (!gap.is_finite() || gap.value() < -1e-9) return false;
    }
  }
  {  // stopping
    AdaptedProcess<double> reward;
    auto sp = fixtures::stopping_fixture(&reward);
    for (int i = 0; i < reps; ++i) {
      AdaptedProcess<double> x(sp.tree, sp.dims);
      double a = std::abs(u(rng)) / 4;
      x.at(0, 0) = a;
      x.at(1, 0) = std::min(1.0 - a, std::abs(u(rng)) / 4);
      x.at(2, 0) = std::min(1.0 - a, std::abs(u(rng)) / 4);
      LeafProcess<double> g(sp.tree, sp.dims);
      for (auto& st : g.values)
        for (auto& v : st) v = u(rng);
      auto p = subtract_projection(g);
      RandomVariable<double> y(sp.tree, 1);
      for (int l = 0; l < 2; ++l) {
        double need = 0;
        for (int t = 0; t <= 1; ++t)
          need = std::max(need, p.at(t, l, 0) + reward.at(sp.tree->ancestor(l, t), 0));
        y.at(l, 0) = need + std::abs(u(rng));
      }
      auto gap = weak_duality_gap(sp, x, DualPoint<double>{p, y});
      if (!gap.is_finite() || gap.value() < -1e-9) return false;
    }
  }
  {  // linear program
    auto sp = fixtures::lp_fixture();
    for (int i = 0; i < reps; ++i) {
      AdaptedProcess<double> x(sp.tree, sp.dims);
      x.at(0, 0) = 2.0 + std::abs(u(rng));
      double y1 = std::min(2.0, std::abs(u(rng)));
      RandomVariable<double> y(sp.tree, 1);
      y.at(0, 0) = y1;
      y.at(1, 0) = 2.0 - y1;  // E[y] = 1 keeps p = 1 - y orthogonal
      DualPoint<double> d;
      d.y = y;
      d.p = LeafProcess<double>(sp.tree, sp.dims);
      d.p.at(0, 0, 0) = 1.0 - y.at(0, 0);
      d.p.at(0, 1, 0) = 1.0 - y.at(1, 0);
      auto gap = weak_duality_gap(sp, x, d);
      if (!gap.is_finite() || gap.value() < -1e-9) return false;
    }
  }
  {  // control
    auto sp = fixtures::lqr_fixture();
    for (int i = 0; i < reps; ++i) {
      AdaptedProcess<double> x(sp.tree, sp.dims);
      double u0 = u(rng);
      x.at(0, 1) = u0;
      x.at(1, 0) = u0 + 1.0;
      x.at(2, 0) = u0 - 1.0;
      RandomVariable<double> y(sp.tree, 1);
      y.at(0, 0) = u(rng);
      y.at(1, 0) = u(rng);
      auto d = recover_dual(sp, x, y);
      auto gap = weak_duality_gap(sp, x, d);
      if (!gap.is_finite() || gap.value() < -1e-9) return false;
    }
  }
  {  // problem of lagrange
    auto sp = fixtures::lagrange_quad_fixture();
    for (int i = 0; i < reps; ++i) {
      AdaptedProcess<double> x(sp.tree, sp.dims);
      x.at(0, 0) = u(rng);
      x.at(1, 0) = u(rng);
      x.at(2, 0) = u(rng);
      RandomVariable<double> y(sp.tree, sp.param_dim);
      for (auto& v : y.values) v = u(rng);
      LeafProcess<double> g(sp.tree, sp.dims);
      for (auto& st : g.values)
        for (auto& v : st) v = u(rng);
      auto gap = weak_duality_gap(sp, x, DualPoint<double>{subtract_projection(g), y});
      if (!gap.is_finite() || gap.value() < -1e-9) return false;
    }
  }
  return true;
}

// ---- criterion 2: conjugate correctness across the catalogue -----------------

bool conjugates_match_oracle(std::mt19937& rng) {
  using Fn = ConvexFunction<double>;
  auto vec1 = [](double v) {
    VecX<double> x(1);
    x << v;
    return x;
  };
  std::vector<Fn> fns;
  fns.push_back(Fn::affine(vec1(2.0), -1.0));
  fns.push_back(Fn::quadratic(MatX<double>::Identity(1, 1), VecX<double>::Zero(1), 0.0));
  {
    MatX<double> A(1, 1);
    A << 1.0;
    VecX<double> b(1);
    b << 1.0;
    fns.push_back(Fn::indicator_polyhedron(A, b, MatX<double>(0, 1), VecX<double>(0)));
  }
  {
    MatX<double> A(2, 1);
    A << 1.0, 2.0;
    fns.push_back(Fn::max_affine(A, VecX<double>::Zero(2)));
  }
  fns.push_back(Fn::support_box(vec1(-1.0), vec1(1.0)));
  fns.push_back(Fn::scalar_loss(LossKind::Square, 2.0, 0.5));
  fns.push_back(Fn::scalar_loss(LossKind::Exponential, 1.0, 0.0));
  fns.push_back(Fn::scalar_loss(LossKind::Hinge, 1.5, -0.5));
  fns.push_back(Fn::scalar_loss(LossKind::LinearIndicator, 1.0, 0.0, true));
  fns.push_back(Fn::sum({fns[1], Fn::affine(vec1(1.0), 0.0)}));
  {
    MatX<double> M(1, 1);
    M << 2.0;
    fns.push_back(Fn::affine_pre(M, vec1(1.0), fns[1]));
  }
  fns.push_back(Fn::separable({Fn::scalar_loss(LossKind::Square, 1.0, 0.0),
                               Fn::scalar_loss(LossKind::Hinge, 1.0, 0.0)}));

  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (const auto& f : fns) {
    for (int rep = 0; rep < 8; ++rep) {
      VecX<double> v(f.dim());
      for (int i = 0; i < f.dim(); ++i) v[i] = u(rng);
      auto cf = f.conjugate_ex(v);
      auto oracle = zoom_conjugate_oracle(f, v, 30.0, 0.05, 1e-3);
      if (cf.fold(0.0).is_finite()) {
        if (!oracle.is_finite()) return false;
        if (std::abs(cf.value.value() - oracle.value()) > 5e-3) return false;
      }
    }
    // biconjugate against eval on a grid; x.v - f*(v) is concave in v, so a
    // coarse pass locates the peak and a fine pass resolves it
    if (f.dim() == 1) {
      for (int rep = 0; rep < 4; ++rep) {
        VecX<double> x = vec1(u(rng));
        auto fx = f.eval(x);
        if (!fx.is_finite()) continue;
        double best = -1e300, vbest = 0.0;
        for (double v = -40.0; v <= 40.0; v += 0.05) {
          auto fs = f.conjugate_ex(vec1(v));
          if (!fs.value.is_finite() || fs.violation > 1e-3) continue;
          double cand = x[0] * v - fs.value.value();
          if (cand > best) {
            best = cand;
            vbest = v;
          }
        }
        for (double v = vbest - 0.1; v <= vbest + 0.1; v += 1e-3) {
          auto fs = f.conjugate_ex(vec1(v));
          if (!fs.value.is_finite() || fs.violation > 1e-3) continue;
          best = std::max(best, x[0] * v - fs.value.value());
        }
        if (std::abs(best - fx.value()) > 5e-3) return false;
      }
    }
  }
  return true;
}

// ---- criterion 3: stopping against full enumeration ---------------------------

bool stopping_oracle(std::mt19937& rng, std::string& detail) {
  int done = 0;
  while (done < 25) {
    auto tree = testgen::random_tree<Rational>(rng, 3, 3);
    if (oracles::stopping_time_count(*tree) > 300000) continue;
    AdaptedProcess<Rational> reward(tree, std::vector<int>(tree->horizon() + 1, 1));
    for (int n = 0; n < tree->num_nodes(); ++n)
      reward.at(n, 0) = testgen::random_scalar<Rational>(rng);
    auto best = oracles::stopping_enumeration_optimum(tree, reward);

    // exact solve equals the enumeration exactly
    StoppingSpec<Rational> spec{reward};
    auto sp = build_stopping(tree, spec);
    auto cert = solve(sp);
    if (cert.status != SolveStatus::Optimal || cert.value_primal != -best) {
      detail = "exact solve mismatch";
      return false;
    }

    // float solve within 1e-6
    TreePtr<double> dtree;
    {
      std::vector<double> probs;
      for (int n = 0; n < tree->num_nodes(); ++n) probs.push_back(to_double(tree->prob(n)));
      dtree = std::make_shared<ScenarioTree<double>>(tree->parents_raw(), tree->stages_raw(),
                                                     probs);
    }
    AdaptedProcess<double> dreward(dtree, std::vector<int>(dtree->horizon() + 1, 1));
    for (int n = 0; n < dtree->num_nodes(); ++n) dreward.at(n, 0) = to_double(reward.at(n, 0));
    StoppingSpec<double> dspec{dreward};
    auto dcert = solve(build_stopping(dtree, dspec));
    if (dcert.status != SolveStatus::Optimal ||
        std::abs(dcert.value_primal + to_double(best)) > 1e-6) {
      detail = "float solve off the enumeration optimum";
      return false;
    }

    // the envelope yields a zero-gap dual certificate
    auto env = snell_envelope(reward);
    auto d = stopping_dual_from_snell(env);
    auto rule = stopping_rule_from_snell(reward, env, Rational(0));
    if (!stopping_certificate_check(reward, rule, d, Rational(0))) {
      detail = "complementarity failed";
      return false;
    }
    auto dv = dual_objective(sp, d, Rational(0), Rational(0));
    if (!dv.is_finite() || dv.value() != -best) {
      detail = "snell dual gap not zero";
      return false;
    }
    ++done;
  }
  return true;
}

// ---- criterion 4: linear stochastic programs against vertex enumeration -------

bool linear_sp_oracle(std::mt19937& rng, std::string& detail) {
  std::uniform_int_distribution<int> coef(-2, 2);
  int done = 0;
  while (done < 10) {
    auto tree = testgen::random_tree<double>(rng, 2, 2);
    std::vector<int> dims(tree->horizon() + 1, 1);
    int nvar = tree->num_nodes();
    if (nvar > 6) continue;

    MathProgSpec<double> spec;
    spec.dims = dims;
    spec.num_ineq = 1 + 2 * (tree->horizon() + 1);
    bool degenerate = false;
    for (int l = 0; l < tree->num_leaves(); ++l) {
      VecX<double> c(tree->horizon() + 1);
      for (int t = 0; t <= tree->horizon(); ++t) c[t] = coef(rng);
      spec.objective.push_back(ConvexFunction<double>::affine(c, 0.0));
      std::vector<ConvexFunction<double>> rows;
      VecX<double> a(tree->horizon() + 1);
      bool nonzero = false;
      for (int t = 0; t <= tree->horizon(); ++t) {
        a[t] = coef(rng);
        nonzero = nonzero || a[t] != 0.0;
      }
      if (!nonzero) degenerate = true;
      rows.push_back(ConvexFunction<double>::affine(a, -static_cast<double>(1 + (coef(rng) & 1))));
      for (int t = 0; t <= tree->horizon(); ++t) {
        VecX<double> e = VecX<double>::Zero(tree->horizon() + 1);
        e[t] = 1.0;
        rows.push_back(ConvexFunction<double>::affine(e, -3.0));  // x_t <= 3
        rows.push_back(ConvexFunction<double>::affine(VecX<double>(-e), -3.0));
      }
      spec.constraints.push_back(std::move(rows));
    }
    if (degenerate) continue;

    auto sp = build_mathprog(tree, spec);
    auto cert = solve(sp);
    if (cert.status != SolveStatus::Optimal) continue;

    // independent vertex enumeration on the flattened feasible set
    NodeVarMap<double> vars(sp);
    QpBuilder<double> B;
    for (int i = 0; i < vars.total; ++i) B.add_var();
    for (int l = 0; l < sp.tree->num_leaves(); ++l)
      lower_integrand(B, sp.leaf_integrands[l], path_exprs(sp, vars, l), sp.leaf_param(l),
                      sp.tree->leaf_prob(l));
    auto qp = B.build();
    auto vertex = oracles::lp_vertex_enumeration(qp.A, qp.b, qp.c);
    if (!vertex) {
      detail = "enumeration found no vertex";
      return false;
    }
    if (std::abs(cert.value_primal - *vertex) > 1e-8 ||
        std::abs(cert.value_dual - *vertex) > 1e-8) {
      detail = "value mismatch vs enumeration";
      return false;
    }

    // multiplier system per leaf: grad f0 + sum y_j a_j = p, y in K*
    for (int l = 0; l < sp.tree->num_leaves(); ++l) {
      const auto& mp = sp.leaf_integrands[l].as<Integrand<double>::MathProg>();
      VecX<double> resid = mp.objective.data().a - sp.leaf_path(cert.d.p, l);
      for (std::size_t j = 0; j < mp.constraints.size(); ++j) {
        double yj = cert.d.y.at(l, static_cast<int>(j));
        if (yj < -1e-8) {
          detail = "negative inequality multiplier";
          return false;
        }
        resid += yj * mp.constraints[j].data().a;
      }
      if (resid.lpNorm<Eigen::Infinity>() > 1e-8) {
        detail = "stationarity residual above 1e-8";
        return false;
      }
    }
    ++done;
  }
  return true;
}

// ---- criterion 5: bundled hedging fixture ---------------------------------------

bool hedging_reproduction(const std::string& fx, std::string& detail) {
  auto prob = load_problem(fx + "/hedging_binomial.json");
  auto cert = solve(prob.program);
  auto close = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };
  if (cert.status != SolveStatus::Optimal || !close(cert.x.at(1, 0), 0.8, 1e-6) ||
      !close(cert.value_primal, 0.05, 1e-6) || !close(cert.d.y.at(0, 0), 0.2, 1e-6) ||
      !close(cert.d.y.at(1, 0), 0.4, 1e-6) || !close(cert.d.p.at(1, 0, 0), -0.2, 1e-6) ||
      !close(cert.d.p.at(1, 1, 0), 0.2, 1e-6) || std::abs(cert.gap) > 1e-8) {
    detail = "optimum or dual off the hand-computed values";
    return false;
  }
  // market checks: no arbitrage and (vacuous) calibration
  auto tree = testgen::two_leaf_tree<double>();
  AdaptedProcess<double> price(tree, {1, 1});
  price.at(0, 0) = 1.0;
  price.at(1, 0) = 2.0;
  price.at(2, 0) = 0.5;
  if (!no_arbitrage_check(tree, price).holds) {
    detail = "no-arbitrage check failed";
    return false;
  }
  RandomVariable<double> y(tree, 1);
  y.at(0, 0) = 0.2;
  y.at(1, 0) = 0.4;
  if (!calibration_check(tree, y, RandomVariable<double>(tree, 0), ConvexFunction<double>::zero(0),
                         1e-9)) {
    detail = "calibration check failed";
    return false;
  }
  return true;
}

// ---- criterion 6: control reduced dual equals the full dual ----------------------

bool control_reduced_dual(std::mt19937& rng, std::string& detail) {
  std::uniform_int_distribution<int> coef(-2, 2);
  int done = 0;
  auto check_one = [&](const StochasticProgram<double>& sp) {
    auto cert = solve(sp);
    if (cert.status != SolveStatus::Optimal) return false;
    if (!control_maximum_principle_check(sp, cert.x, cert.d, 1e-6)) {
      detail = "maximum principle residual above 1e-6";
      return false;
    }
    // adapted projection of the recovered multiplier
    AdaptedProcess<double> yad(sp.tree, std::vector<int>(sp.tree->horizon() + 1, 1));
    for (int t = 1; t <= sp.tree->horizon(); ++t) {
      RandomVariable<double> yt(sp.tree, 1);
      for (int l = 0; l < sp.tree->num_leaves(); ++l) yt.at(l, 0) = cert.d.y.at(l, t - 1);
      auto cond = conditional_expectation_nodes(yt, t);
      auto nodes = sp.tree->nodes_at_stage(t);
      for (std::size_t i = 0; i < nodes.size(); ++i) yad.at(nodes[i], 0) = cond[i];
    }
    auto red = control_reduced_dual_value(sp, yad);
    if (!red.is_finite() || std::abs(red.value() - cert.value_dual) > 1e-6) {
      detail = "reduced dual differs from the full dual";
      return false;
    }
    return true;
  };

  if (!check_one(fixtures::lqr_fixture())) return false;
  while (done < 5) {
    auto tree = testgen::random_tree<double>(rng, 2, 2);
    ControlSpec<double> spec;
    spec.state_dim = 1;
    spec.control_dims.assign(tree->horizon() + 1, 1);
    spec.control_dims.back() = 0;
    for (int t = 1; t <= tree->horizon(); ++t) {
      std::vector<MatX<double>> As, Bs;
      for (std::size_t i = 0; i < tree->nodes_at_stage(t).size(); ++i) {
        As.push_back(MatX<double>::Constant(1, 1, 0.5 * coef(rng)));
        Bs.push_back(MatX<double>::Constant(1, 1, 1.0));
      }
      spec.A.push_back(As);
      spec.B.push_back(Bs);
    }
    spec.noise = AdaptedProcess<double>(tree, std::vector<int>(tree->horizon() + 1, 1));
    for (int n = 0; n < tree->num_nodes(); ++n) spec.noise.at(n, 0) = 0.5 * coef(rng);
    for (int t = 0; t <= tree->horizon(); ++t) {
      std::vector<ConvexFunction<double>> Ls;
      int dim = 1 + spec.control_dims[t];
      for (std::size_t i = 0; i < tree->nodes_at_stage(t).size(); ++i)
        Ls.push_back(ConvexFunction<double>::quadratic(MatX<double>::Identity(dim, dim),
                                                       VecX<double>::Zero(dim), 0.0));
      spec.cost.push_back(Ls);
    }
    auto sp = build_control(tree, spec);
    if (!check_one(sp)) return false;
    ++done;
  }
  return true;
}

// ---- criterion 7: exact filtration calculus ---------------------------------------

bool filtration_calculus(std::mt19937& rng) {
  using R = Rational;
  for (int trial = 0; trial < 100; ++trial) {
    auto tree = testgen::random_tree<R>(rng, 4, 3);
    std::uniform_int_distribution<int> sd(0, tree->horizon());
    int t = sd(rng);
    std::uniform_int_distribution<int> sd2(0, t);
    int s = sd2(rng);

    auto v = testgen::random_variable<R>(rng, tree, 1);
    auto lhs = conditional_expectation(conditional_expectation(v, t), s);
    auto rhs = conditional_expectation(v, s);
    if (lhs.values != rhs.values) return false;

    auto uvar = testgen::random_variable<R>(rng, tree, 1);
    auto yvar = testgen::random_variable<R>(rng, tree, 1);
    auto etu = conditional_expectation(uvar, t);
    auto ety = conditional_expectation(yvar, t);
    R left(0), right(0);
    for (int l = 0; l < tree->num_leaves(); ++l) {
      left += tree->leaf_prob(l) * etu.at(l, 0) * yvar.at(l, 0);
      right += tree->leaf_prob(l) * uvar.at(l, 0) * ety.at(l, 0);
    }
    if (left != right) return false;

    auto xi1 = conditional_expectation(testgen::random_variable<R>(rng, tree, 1), t);
    RandomVariable<R> prod(tree, 1);
    for (int l = 0; l < tree->num_leaves(); ++l) prod.at(l, 0) = xi1.at(l, 0) * uvar.at(l, 0);
    auto pulled = conditional_expectation(prod, t);
    auto etu2 = conditional_expectation(uvar, t);
    for (int l = 0; l < tree->num_leaves(); ++l)
      if (pulled.at(l, 0) != xi1.at(l, 0) * etu2.at(l, 0)) return false;

    // Jensen with a stage-t measurable quadratic
    std::vector<R> shift(tree->nodes_at_stage(t).size());
    for (auto& sh : shift) sh = testgen::random_scalar<R>(rng);
    R jl(0), jr(0);
    for (int l = 0; l < tree->num_leaves(); ++l) {
      int a = tree->pos_in_stage(tree->ancestor(l, t));
      R e = etu.at(l, 0) - shift[a];
      R w = uvar.at(l, 0) - shift[a];
      jl += tree->leaf_prob(l) * e * e;
      jr += tree->leaf_prob(l) * w * w;
    }
    if (jl > jr) return false;

    // pairing of adapted against orthogonal vanishes exactly
    std::vector<int> dims(tree->horizon() + 1, 1);
    auto p = testgen::random_leaf_process<R>(rng, tree, dims);
    auto perp = subtract_projection(p);
    if (!in_orthogonal_complement(perp, R(0))) return false;
    auto x = testgen::random_adapted<R>(rng, tree, dims);
    if (pairing(x, perp) != R(0)) return false;
  }
  return true;
}

// ---- criterion 8: linearity diagnostics agree with no-arbitrage -------------------

bool adg_vs_na(std::mt19937& rng, std::string& detail) {
  std::uniform_int_distribution<int> coin(0, 3);
  for (int rep = 0; rep < 20; ++rep) {
    auto tree = testgen::random_tree<double>(rng, 2, 3, 1);
    AdaptedProcess<double> price(tree, std::vector<int>(tree->horizon() + 1, 1));
    for (int n = 0; n < tree->num_nodes(); ++n)
      price.at(n, 0) = 1.0 + 0.25 * coin(rng) * (coin(rng) % 2 ? 1 : -1);
    auto na = no_arbitrage_check(tree, price);

    HedgingSpec<double> spec;
    spec.price = price;
    spec.claim = RandomVariable<double>(tree, 1);
    spec.static_payoff = RandomVariable<double>(tree, 0);
    spec.static_cost = ConvexFunction<double>::zero(0);
    spec.loss = ConvexFunction<double>::scalar_loss(LossKind::Hinge, 1.0, 0.0);
    auto lin = check_linearity_condition(build_hedging(tree, spec));
    if (!lin.supported) {
      detail = "linearity diagnostic unsupported";
      return false;
    }
    if (lin.is_linear != na.holds) {
      detail = "diagnostics disagree";
      return false;
    }
  }
  return true;
}

// ---- criterion 9: determinism of the command line ---------------------------------

bool cli_determinism(const std::string& cli, const std::string& fx, std::string& detail) {
  struct Case {
    const char* file;
    const char* extra;
    const char* tol;
  };
  const Case cases[] = {
      {"hedging_binomial.json", "", "1e-8"},   {"stopping_basic.json", "", "1e-8"},
      {"lp_deterministic.json", "", "1e-8"},   {"lqr_small.json", "", "1e-8"},
      {"lagrange_quadratic.json", "", "1e-8"}, {"hedging_exponential.json", "", "1e-4"},
      {"stopping_exact.json", " --exact", "1e-8"},
  };
  std::system("mkdir -p acceptance_tmp");
  for (const auto& c : cases) {
    std::string base = "acceptance_tmp/";
    std::string cmd1 = cli + " solve " + fx + "/" + c.file + c.extra + " --tol " + c.tol +
                       " --out " + base + "a.json";
    std::string cmd2 = cli + " solve " + fx + "/" + c.file + c.extra + " --tol " + c.tol +
                       " --out " + base + "b.json";
    if (run_cmd(cmd1) != 0 || run_cmd(cmd2) != 0) {
      detail = std::string("solve failed for ") + c.file;
      return false;
    }
    if (slurp(base + "a.json") != slurp(base + "b.json")) {
      detail = std::string("certificates differ for ") + c.file;
      return false;
    }
    if (run_cmd(cli + " verify " + fx + "/" + c.file + " " + base + "a.json --tol " + c.tol) !=
        0) {
      detail = std::string("verification rejected ") + c.file;
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "tools/stochdual";
  const std::string fx = argc > 2 ? argv[2] : "fixtures";
  std::mt19937 rng(20240811);
  std::string detail;

  {
    Criterion c(1, "weak duality on 1000 random feasible pairs per fixture");
    bool ok = weak_duality_all(rng);
    bool in_time = c.elapsed() < 10.0;
    c.finish(ok && in_time, ok ? (in_time ? "" : "over the 10s budget") : "negative gap found");
  }
  {
    Criterion c(2, "conjugates and biconjugates match the grid oracle");
    bool ok = conjugates_match_oracle(rng);
    bool in_time = c.elapsed() < 30.0;
    c.finish(ok && in_time, ok ? (in_time ? "" : "over the 30s budget") : "oracle mismatch");
  }
  {
    Criterion c(3, "optimal stopping equals full enumeration; snell dual has zero gap");
    detail.clear();
    c.finish(stopping_oracle(rng, detail), detail);
  }
  {
    Criterion c(4, "linear programs match vertex enumeration with exact multipliers");
    detail.clear();
    c.finish(linear_sp_oracle(rng, detail), detail);
  }
  {
    Criterion c(5, "hedging fixture reproduces the hand-computed certificate");
    detail.clear();
    c.finish(hedging_reproduction(fx, detail), detail);
  }
  {
    Criterion c(6, "control reduced dual agrees with the full dual");
    detail.clear();
    c.finish(control_reduced_dual(rng, detail), detail);
  }
  {
    Criterion c(7, "filtration calculus holds exactly on 100 random trees");
    bool ok = filtration_calculus(rng);
    bool in_time = c.elapsed() < 10.0;
    c.finish(ok && in_time, ok ? (in_time ? "" : "over the 10s budget") : "identity violated");
  }
  {
    Criterion c(8, "recession linearity coincides with no-arbitrage on 20 markets");
    detail.clear();
    c.finish(adg_vs_na(rng, detail), detail);
  }
  {
    Criterion c(9, "repeated solves are byte-identical and verify cleanly");
    detail.clear();
    c.finish(cli_determinism(cli, fx, detail), detail);
  }

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
