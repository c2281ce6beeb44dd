#pragma once

// Shared problem fixtures used across the unit and acceptance suites.

#include "generators.hpp"
#include "stochdual/apps.hpp"

namespace fixtures {

using namespace stochdual;

// Binomial market: one asset, s0 = 1, up/down moves give ds = (up, down).
template <class S>
TreePtr<S> binomial_market() {
  return testgen::two_leaf_tree<S>();
}

template <class S>
HedgingSpec<S> hedging_spec(TreePtr<S> tree, S up, S down, S c_up, S c_down,
                            ConvexFunction<S> loss) {
  HedgingSpec<S> spec;
  spec.price = AdaptedProcess<S>(tree, {1, 1});
  spec.price.at(0, 0) = S(1);
  spec.price.at(1, 0) = S(1) + up;
  spec.price.at(2, 0) = S(1) + down;
  spec.claim = RandomVariable<S>(tree, 1);
  spec.claim.at(0, 0) = c_up;
  spec.claim.at(1, 0) = c_down;
  spec.static_payoff = RandomVariable<S>(tree, 0);
  spec.static_cost = ConvexFunction<S>::zero(0);
  spec.loss = std::move(loss);
  return spec;
}

// ds = (1, -0.5), c = (1, 0), V = z^2/2; optimum x0 = 0.8, value 0.05.
inline StochasticProgram<double> hedging_fixture() {
  auto tree = binomial_market<double>();
  auto spec = hedging_spec<double>(tree, 1.0, -0.5, 1.0, 0.0,
                                   ConvexFunction<double>::scalar_loss(LossKind::Square, 1.0, 0.0));
  return build_hedging(tree, spec);
}

// Same market with ds = (1, 0.5): a strict arbitrage.
inline StochasticProgram<double> arbitrage_fixture(ConvexFunction<double> loss) {
  auto tree = binomial_market<double>();
  auto spec = hedging_spec<double>(tree, 1.0, 0.5, 1.0, 0.0, std::move(loss));
  return build_hedging(tree, spec);
}

inline StochasticProgram<double> exp_hedging_fixture() {
  auto tree = binomial_market<double>();
  auto spec = hedging_spec<double>(tree, 1.0, -0.5, 1.0, 0.0,
                                   ConvexFunction<double>::scalar_loss(LossKind::Exponential, 1.0, 0.0));
  return build_hedging(tree, spec);
}

// Two-leaf stopping problem: R0 = 1, R1 = (0, 3); relaxed optimum 1.5.
template <class S>
StochasticProgram<S> stopping_fixture_s(AdaptedProcess<S>* reward_out = nullptr) {
  auto tree = testgen::two_leaf_tree<S>();
  StoppingSpec<S> spec;
  spec.reward = AdaptedProcess<S>(tree, {1, 1});
  spec.reward.at(0, 0) = S(1);
  spec.reward.at(1, 0) = S(0);
  spec.reward.at(2, 0) = S(3);
  if (reward_out) *reward_out = spec.reward;
  return build_stopping(tree, spec);
}

inline StochasticProgram<double> stopping_fixture(AdaptedProcess<double>* r = nullptr) {
  return stopping_fixture_s<double>(r);
}

// Deterministic decision, random bound: min E[x0] st x0 >= b, b = (1, 2).
inline StochasticProgram<double> lp_fixture() {
  auto tree = testgen::two_leaf_tree<double>();
  MathProgSpec<double> spec;
  spec.dims = {1, 0};
  spec.num_ineq = 1;
  VecX<double> one(1);
  one << 1.0;
  for (int l = 0; l < 2; ++l) {
    spec.objective.push_back(ConvexFunction<double>::affine(one, 0.0));
    // b - x0 <= 0
    VecX<double> a(1);
    a << -1.0;
    spec.constraints.push_back({ConvexFunction<double>::affine(a, l == 0 ? 1.0 : 2.0)});
  }
  return build_mathprog(tree, spec);
}

// One-dimensional LQR step: X1 = U0 + W1, W1 = (1, -1); L0 = U^2/2,
// L1 = X^2/2, X0 pinned at zero. Optimum U0 = 0 with value 0.5.
inline StochasticProgram<double> lqr_fixture() {
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
  auto L1 = ConvexFunction<double>::quadratic(MatX<double>::Identity(1, 1), VecX<double>::Zero(1), 0.0);
  spec.cost = {{L0}, {L1, L1}};
  spec.x0_pin = VecX<double>::Zero(1);
  return build_control(tree, spec);
}

// Quadratic problem of Lagrange: K_t(x, u) = (x^2 + u^2)/2.
inline StochasticProgram<double> lagrange_quad_fixture() {
  auto tree = testgen::two_leaf_tree<double>();
  LagrangeSpec<double> spec;
  spec.dim = 1;
  auto K = ConvexFunction<double>::quadratic(MatX<double>::Identity(2, 2), VecX<double>::Zero(2), 0.0);
  spec.running = {{K}, {K, K}};
  return build_lagrange(tree, spec);
}

// The stopping problem in running-cost form:
// K_t(x, u) = -R_t u + indicator(x <= 1) + indicator(u >= 0).
template <class S>
ConvexFunction<S> stopping_running_cost(const S& reward) {
  VecX<S> a(2);
  a << S(0), -reward;
  MatX<S> row_x(1, 2), row_u(1, 2);
  row_x << S(1), S(0);   // x <= 1
  row_u << S(0), S(-1);  // -u <= 0
  VecX<S> one(1), zero(1);
  one << S(1);
  zero << S(0);
  return ConvexFunction<S>::sum(
      {ConvexFunction<S>::affine(a, S(0)),
       ConvexFunction<S>::indicator_polyhedron(row_x, one, MatX<S>(0, 2), VecX<S>(0)),
       ConvexFunction<S>::indicator_polyhedron(row_u, zero, MatX<S>(0, 2), VecX<S>(0))});
}

template <class S>
StochasticProgram<S> stopping_as_lagrange(TreePtr<S> tree, const AdaptedProcess<S>& reward) {
  LagrangeSpec<S> spec;
  spec.dim = 1;
  spec.running.resize(tree->horizon() + 1);
  for (int t = 0; t <= tree->horizon(); ++t)
    for (int node : tree->nodes_at_stage(t))
      spec.running[t].push_back(stopping_running_cost<S>(reward.at(node, 0)));
  return build_lagrange(tree, spec);
}

}  // namespace fixtures
