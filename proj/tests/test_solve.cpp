#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "stochdual/solve.hpp"

using namespace stochdual;

TEST_CASE("hedging fixture solves to the known optimum") {
  auto sp = fixtures::hedging_fixture();
  auto cert = solve(sp);
  REQUIRE(cert.status == SolveStatus::Optimal);
  CHECK(cert.x.at(1, 0) == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(cert.value_primal == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(std::abs(cert.gap) <= 1e-8);
  CHECK(cert.d.y.at(0, 0) == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(cert.d.y.at(1, 0) == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(cert.d.p.at(1, 0, 0) == doctest::Approx(-0.2).epsilon(1e-6));
  CHECK(cert.d.p.at(1, 1, 0) == doctest::Approx(0.2).epsilon(1e-6));
  double rmax = 0;
  for (int l = 0; l < 2; ++l) rmax = std::max(rmax, cert.fenchel_residuals.at(l, 0));
  CHECK(rmax <= 1e-6);
}

TEST_CASE("stopping fixture solves to the relaxed optimum") {
  auto sp = fixtures::stopping_fixture();
  auto cert = solve(sp);
  REQUIRE(cert.status == SolveStatus::Optimal);
  CHECK(cert.value_primal == doctest::Approx(-1.5).epsilon(1e-8));  // minimization form
  CHECK(cert.x.at(0, 0) == doctest::Approx(0.0).epsilon(1e-7));
  // the zero-reward leaf leaves its weight free; only the paying leaf is pinned
  CHECK(cert.x.at(2, 0) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("lp fixture with deterministic decision") {
  auto sp = fixtures::lp_fixture();
  auto cert = solve(sp);
  REQUIRE(cert.status == SolveStatus::Optimal);
  CHECK(cert.value_primal == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(cert.x.at(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(cert.d.y.at(0, 0) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(cert.d.y.at(1, 0) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(cert.d.p.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(cert.d.p.at(0, 1, 0) == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(cert.value_dual == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("lqr fixture") {
  auto sp = fixtures::lqr_fixture();
  auto cert = solve(sp);
  REQUIRE(cert.status == SolveStatus::Optimal);
  CHECK(cert.value_primal == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(cert.x.at(0, 1) == doctest::Approx(0.0).epsilon(1e-6));  // U0
  CHECK(cert.d.y.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cert.d.y.at(1, 0) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(std::abs(cert.gap) <= 1e-8);
}

TEST_CASE("arbitrage with an unbounded loss is detected by a recession ray") {
  auto sp = fixtures::arbitrage_fixture(
      ConvexFunction<double>::scalar_loss(LossKind::LinearIndicator, 1.0, 0.0, false));
  auto cert = solve(sp);
  CHECK(cert.status == SolveStatus::Unbounded);
  REQUIRE(cert.ray.has_value());
  CHECK(cert.ray->at(1, 0) > 0.0);  // buy the gaining asset
}

TEST_CASE("adapted infeasibility is reported") {
  // X1 = U0 + W with W = (1,-1), and X1 pinned to 5 in both scenarios:
  // U0 would have to depend on W, which adaptedness forbids.
  auto tree = testgen::two_leaf_tree<double>();
  ControlSpec<double> spec;
  spec.state_dim = 1;
  spec.control_dims = {1, 0};
  MatX<double> Z = MatX<double>::Zero(1, 1), I = MatX<double>::Identity(1, 1);
  spec.A = {{Z, Z}};
  spec.B = {{I, I}};
  spec.noise = AdaptedProcess<double>(tree, {1, 1});
  spec.noise.at(1, 0) = 1.0;
  spec.noise.at(2, 0) = -1.0;
  MatX<double> Qu = MatX<double>::Zero(2, 2);
  Qu(1, 1) = 1.0;
  auto L0 = ConvexFunction<double>::quadratic(Qu, VecX<double>::Zero(2), 0.0);
  VecX<double> five(1);
  five << 5.0;
  auto L1 = ConvexFunction<double>::indicator_polyhedron(MatX<double>(0, 1), VecX<double>(0), I, five);
  spec.cost = {{L0}, {L1, L1}};
  spec.x0_pin = VecX<double>::Zero(1);
  auto sp = build_control(tree, spec);
  auto cert = solve(sp);
  CHECK(cert.status == SolveStatus::PrimalInfeasible);
}

TEST_CASE("interior point and proximal splitting agree on quadratic fixtures") {
  SolveOptions prox;
  prox.backend = Backend::ProximalGradient;
  prox.max_iter = 20000;

  auto sp = fixtures::hedging_fixture();
  auto a = solve(sp);
  auto b = solve(sp, prox);
  CHECK(std::abs(a.value_primal - b.value_primal) < 1e-5);

  auto lqr = fixtures::lqr_fixture();
  auto c = solve(lqr);
  auto d = solve(lqr, prox);
  CHECK(std::abs(c.value_primal - d.value_primal) < 1e-5);
}

TEST_CASE("exponential loss goes through the proximal backend") {
  auto sp = fixtures::exp_hedging_fixture();
  auto cert = solve(sp);
  REQUIRE((cert.status == SolveStatus::Optimal || cert.status == SolveStatus::GapAboveTol));
  CHECK(std::abs(cert.gap) < 1e-5);
  // exp(c - x ds) balanced across scenarios
  double x0 = cert.x.at(1, 0);
  double hand = 0.5 * std::exp(1.0 - x0) + 0.5 * std::exp(0.5 * x0);
  CHECK(cert.value_primal == doctest::Approx(hand).epsilon(1e-6));
}

TEST_CASE("dual recovery is structural") {
  AdaptedProcess<double> reward;
  auto sp = fixtures::stopping_fixture(&reward);
  RandomVariable<double> y(sp.tree, 1);
  y.at(0, 0) = 0.0;
  y.at(1, 0) = 3.0;
  auto d = recover_dual(sp, AdaptedProcess<double>(sp.tree, sp.dims), y);
  CHECK(in_orthogonal_complement(d.p, 1e-10));
  CHECK(d.p.at(0, 0, 0) == doctest::Approx(-1.5));
  CHECK(d.p.at(0, 1, 0) == doctest::Approx(1.5));
  CHECK(d.p.at(1, 0, 0) == doctest::Approx(0.0));
  CHECK(d.p.at(1, 1, 0) == doctest::Approx(0.0));

  // deterministic tree: the orthogonal complement is trivial
  auto chain = testgen::chain_tree<double>(1);
  StoppingSpec<double> st;
  st.reward = AdaptedProcess<double>(chain, {1, 1});
  st.reward.at(0, 0) = 5.0;
  st.reward.at(1, 0) = 1.0;
  auto dsp = build_stopping(chain, st);
  RandomVariable<double> dy(chain, 1);
  dy.at(0, 0) = 5.0;
  auto dd = recover_dual(dsp, AdaptedProcess<double>(chain, dsp.dims), dy);
  for (int t = 0; t <= 1; ++t) CHECK(dd.p.at(t, 0, 0) == 0.0);
}

TEST_CASE("repeated solves produce identical results") {
  auto sp = fixtures::hedging_fixture();
  auto a = solve(sp);
  auto b = solve(sp);
  CHECK(a.value_primal == b.value_primal);  // bitwise
  CHECK(a.value_dual == b.value_dual);
  CHECK(a.x.values == b.x.values);
  CHECK(a.d.y.values == b.d.y.values);
  for (int t = 0; t <= sp.tree->horizon(); ++t) CHECK(a.d.p.values[t] == b.d.p.values[t]);
}

TEST_CASE("exact rational solve of the stopping fixture") {
  AdaptedProcess<Rational> reward;
  auto sp = fixtures::stopping_fixture_s<Rational>(&reward);
  auto cert = solve(sp);
  REQUIRE(cert.status == SolveStatus::Optimal);
  CHECK(cert.value_primal == Rational(-3, 2));
  CHECK(cert.value_dual == Rational(-3, 2));
  CHECK(cert.gap == Rational(0));
  for (int l = 0; l < 2; ++l) CHECK(cert.fenchel_residuals.at(l, 0) == Rational(0));
}
