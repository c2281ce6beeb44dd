#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "generators.hpp"
#include "stochdual/tree.hpp"

using namespace stochdual;

TEST_CASE("construction rejects malformed trees") {
  CHECK_THROWS(ScenarioTree<double>({-1, 0, 0}, {0, 1, 1}, {1.0, 0.5, 0.4}));
  CHECK_THROWS(ScenarioTree<double>({-1, 0, 0}, {0, 1, 1}, {1.0, 0.5, -0.5}));
  CHECK_THROWS(ScenarioTree<double>({-1, 0, 0}, {0, 1, 2}, {1.0, 0.5, 0.5}));
  CHECK_THROWS(ScenarioTree<double>({-1, 0}, {0, 0}, {1.0, 1.0}));
  // breadth-first order of a depth-2 binary tree is not depth-first preorder
  CHECK_THROWS(ScenarioTree<double>({-1, 0, 0, 1, 1, 2, 2}, {0, 1, 1, 2, 2, 2, 2},
                                    {1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25}));
  // forest with nontrivial F_0 is allowed
  CHECK_NOTHROW(ScenarioTree<double>({-1, 0, -1, 2}, {0, 1, 0, 1}, {0.5, 0.5, 0.5, 0.5}));
}

TEST_CASE("conditional expectation") {
  auto tree = testgen::two_leaf_tree<double>();
  RandomVariable<double> v(tree, 1);
  v.at(0, 0) = 2;
  v.at(1, 0) = 4;

  auto e0 = conditional_expectation(v, 0);
  CHECK(e0.at(0, 0) == doctest::Approx(3.0));
  CHECK(e0.at(1, 0) == doctest::Approx(3.0));

  auto e1 = conditional_expectation(v, 1);
  CHECK(e1.at(0, 0) == 2.0);
  CHECK(e1.at(1, 0) == 4.0);

  auto tower = conditional_expectation(conditional_expectation(v, 1), 0);
  CHECK(tower.at(0, 0) == doctest::Approx(3.0));

  CHECK_THROWS(conditional_expectation(v, 2));
}

TEST_CASE("adapted projection") {
  auto tree = testgen::two_leaf_tree<double>();
  LeafProcess<double> p(tree, {1, 1});
  p.at(0, 0, 0) = 1;
  p.at(0, 1, 0) = -1;
  p.at(1, 0, 0) = 2;
  p.at(1, 1, 0) = 4;

  auto ap = adapted_projection(p);
  CHECK(ap.at(0, 0) == doctest::Approx(0.0));  // stage-0 mean
  CHECK(ap.at(1, 0) == 2.0);
  CHECK(ap.at(2, 0) == 4.0);

  // projection is idempotent: ap(ap p) = ap p
  auto again = adapted_projection(to_leaf_process(ap));
  for (int t = 0; t <= 1; ++t) CHECK(again.values[t] == ap.values[t]);
}

TEST_CASE("pairing and orthogonal complement") {
  auto tree = testgen::two_leaf_tree<double>();
  LeafProcess<double> x(tree, {1, 1}), v(tree, {1, 1});
  CHECK(pairing(x, v) == 0.0);

  x.at(0, 0, 0) = 1;
  x.at(0, 1, 0) = 1;
  v.at(0, 0, 0) = 1;
  v.at(0, 1, 0) = -1;
  CHECK(pairing(x, v) == doctest::Approx(0.0));

  LeafProcess<double> p(tree, {1, 1});
  CHECK(in_orthogonal_complement(p, 1e-12));
  p.at(0, 0, 0) = 1;
  p.at(0, 1, 0) = -1;
  CHECK(in_orthogonal_complement(p, 1e-12));
  p.at(0, 1, 0) = 1;
  CHECK_FALSE(in_orthogonal_complement(p, 1e-12));
}

TEST_CASE("martingale test and doob decomposition") {
  auto tree = testgen::two_leaf_tree<double>();
  AdaptedProcess<double> y(tree, {1, 1});
  y.at(0, 0) = 1.5;
  y.at(1, 0) = 0;
  y.at(2, 0) = 3;
  CHECK(is_martingale(y, 1e-12));

  auto [m, a] = doob_decomposition(y);
  CHECK(a.at(1, 0) == 0.0);
  CHECK(a.at(2, 0) == 0.0);
  CHECK(m.at(2, 0) == 3.0);

  y.at(0, 0) = 1.0;
  CHECK_FALSE(is_martingale(y, 1e-12));

  AdaptedProcess<double> cst(tree, {1, 1});
  cst.at(0, 0) = cst.at(1, 0) = cst.at(2, 0) = 7;
  CHECK(is_martingale(cst, 0.0));

  // deterministic drift goes entirely into the predictable part
  auto chain = testgen::chain_tree<double>(2);
  AdaptedProcess<double> det(chain, {1, 1, 1});
  det.at(0, 0) = 0;
  det.at(1, 0) = 1;
  det.at(2, 0) = 2;
  auto [dm, da] = doob_decomposition(det);
  CHECK(da.at(0, 0) == 0.0);
  CHECK(da.at(1, 0) == 1.0);
  CHECK(da.at(2, 0) == 2.0);
  CHECK(dm.at(1, 0) == 0.0);
  CHECK(dm.at(2, 0) == 0.0);
}

TEST_CASE("filtration calculus is exact in rational mode") {
  std::mt19937 rng(20240711);
  using R = Rational;
  for (int trial = 0; trial < 100; ++trial) {
    auto tree = testgen::random_tree<R>(rng, 4, 3);
    auto v = testgen::random_variable<R>(rng, tree, 2);

    // tower property: E_s E_t = E_s for s <= t
    std::uniform_int_distribution<int> sd(0, tree->horizon());
    int t = sd(rng);
    std::uniform_int_distribution<int> sd2(0, t);
    int s = sd2(rng);
    auto lhs = conditional_expectation(conditional_expectation(v, t), s);
    auto rhs = conditional_expectation(v, s);
    CHECK(lhs.values == rhs.values);

    // self-adjointness: <E_t u, y> = <u, E_t y>
    auto u = testgen::random_variable<R>(rng, tree, 1);
    auto y = testgen::random_variable<R>(rng, tree, 1);
    auto etu = conditional_expectation(u, t);
    auto ety = conditional_expectation(y, t);
    R left(0), right(0);
    for (int l = 0; l < tree->num_leaves(); ++l) {
      left += tree->leaf_prob(l) * etu.at(l, 0) * y.at(l, 0);
      right += tree->leaf_prob(l) * u.at(l, 0) * ety.at(l, 0);
    }
    CHECK(left == right);

    // pull-out: E_t[xi1 xi2] = xi1 E_t[xi2] for F_t-measurable xi1
    auto xi1 = conditional_expectation(testgen::random_variable<R>(rng, tree, 1), t);
    auto xi2 = testgen::random_variable<R>(rng, tree, 1);
    RandomVariable<R> prod(tree, 1);
    for (int l = 0; l < tree->num_leaves(); ++l) prod.at(l, 0) = xi1.at(l, 0) * xi2.at(l, 0);
    auto pulled = conditional_expectation(prod, t);
    auto etxi2 = conditional_expectation(xi2, t);
    for (int l = 0; l < tree->num_leaves(); ++l)
      CHECK(pulled.at(l, 0) == xi1.at(l, 0) * etxi2.at(l, 0));

    // p - ap(p) is orthogonal, exactly, and pairs to zero with adapted x
    std::vector<int> dims(tree->horizon() + 1, 1);
    auto p = testgen::random_leaf_process<R>(rng, tree, dims);
    auto perp = subtract_projection(p);
    CHECK(in_orthogonal_complement(perp, R(0)));
    auto x = testgen::random_adapted<R>(rng, tree, dims);
    CHECK(pairing(x, perp) == R(0));

    // doob: m martingale, a predictable with a_0 = 0, m + a = y
    auto yproc = testgen::random_adapted<R>(rng, tree, dims);
    auto [m, a] = doob_decomposition(yproc);
    CHECK(is_martingale(m, R(0)));
    for (int node : tree->nodes_at_stage(0)) CHECK(a.at(node, 0) == R(0));
    for (int tt = 1; tt <= tree->horizon(); ++tt)
      for (int node : tree->nodes_at_stage(tt)) {
        CHECK(m.at(node, 0) + a.at(node, 0) == yproc.at(node, 0));
        // predictable: equal across siblings
        for (int sib : tree->children(tree->parent(node))) CHECK(a.at(sib, 0) == a.at(node, 0));
      }
  }
}

TEST_CASE("adjointness of conditional expectation on leaf processes") {
  std::mt19937 rng(7);
  auto tree = testgen::random_tree<double>(rng, 3, 3);
  std::vector<int> dims(tree->horizon() + 1, 2);
  auto x = testgen::random_leaf_process<double>(rng, tree, dims);
  auto v = testgen::random_leaf_process<double>(rng, tree, dims);
  auto apx = adapted_projection(x);
  auto apv = adapted_projection(v);
  CHECK(pairing(to_leaf_process(apx), v) ==
        doctest::Approx(pairing(to_leaf_process(apv), x)).epsilon(1e-12));
}
