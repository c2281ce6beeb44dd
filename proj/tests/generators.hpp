#pragma once

// Test-only fixtures and random generators.

#include <random>
#include <vector>

#include "stochdual/rational.hpp"
#include "stochdual/tree.hpp"

namespace testgen {

using stochdual::Rational;

// Root + two leaves with the given leaf probabilities.
template <class S>
stochdual::TreePtr<S> two_leaf_tree(S p1, S p2) {
  return std::make_shared<stochdual::ScenarioTree<S>>(
      std::vector<int>{-1, 0, 0}, std::vector<int>{0, 1, 1}, std::vector<S>{S(1), p1, p2});
}

template <class S>
stochdual::TreePtr<S> two_leaf_tree() {
  if constexpr (std::is_same_v<S, double>) {
    return two_leaf_tree<S>(0.5, 0.5);
  } else {
    return two_leaf_tree<S>(Rational(1, 2), Rational(1, 2));
  }
}

// Deterministic chain of the given horizon (single scenario).
template <class S>
stochdual::TreePtr<S> chain_tree(int horizon) {
  std::vector<int> parent, stage;
  std::vector<S> prob;
  for (int t = 0; t <= horizon; ++t) {
    parent.push_back(t - 1);
    stage.push_back(t);
    prob.push_back(S(1));
  }
  return std::make_shared<stochdual::ScenarioTree<S>>(parent, stage, prob);
}

namespace detail {
template <class S>
void grow(std::mt19937& rng, int node, int stage, int horizon, int max_branch,
          std::vector<int>& parent, std::vector<int>& stages, std::vector<S>& prob) {
  if (stage == horizon) return;
  std::uniform_int_distribution<int> nb(1, max_branch);
  int k = nb(rng);
  std::uniform_int_distribution<int> wdist(1, 9);
  std::vector<int> w(k);
  int wsum = 0;
  for (int i = 0; i < k; ++i) {
    w[i] = wdist(rng);
    wsum += w[i];
  }
  for (int i = 0; i < k; ++i) {
    int child = static_cast<int>(parent.size());
    parent.push_back(node);
    stages.push_back(stage + 1);
    if constexpr (std::is_same_v<S, double>) {
      prob.push_back(prob[node] * w[i] / wsum);
    } else {
      prob.push_back(prob[node] * Rational(w[i], wsum));
    }
    grow(rng, child, stage + 1, horizon, max_branch, parent, stages, prob);
  }
}
}  // namespace detail

// Random forest in depth-first preorder. Horizon >= 1, branching in
// [1, max_branch], up to max_roots stage-0 atoms.
template <class S>
stochdual::TreePtr<S> random_tree(std::mt19937& rng, int max_horizon, int max_branch,
                                  int max_roots = 2) {
  std::uniform_int_distribution<int> hdist(1, max_horizon);
  std::uniform_int_distribution<int> rdist(1, max_roots);
  const int horizon = hdist(rng);
  const int nroots = rdist(rng);
  std::uniform_int_distribution<int> wdist(1, 9);
  std::vector<int> w(nroots);
  int wsum = 0;
  for (int i = 0; i < nroots; ++i) {
    w[i] = wdist(rng);
    wsum += w[i];
  }
  std::vector<int> parent, stages;
  std::vector<S> prob;
  for (int i = 0; i < nroots; ++i) {
    int root = static_cast<int>(parent.size());
    parent.push_back(-1);
    stages.push_back(0);
    if constexpr (std::is_same_v<S, double>) {
      prob.push_back(static_cast<double>(w[i]) / wsum);
    } else {
      prob.push_back(Rational(w[i], wsum));
    }
    detail::grow(rng, root, 0, horizon, max_branch, parent, stages, prob);
  }
  return std::make_shared<stochdual::ScenarioTree<S>>(parent, stages, prob);
}

template <class S>
S random_scalar(std::mt19937& rng, int lo = -8, int hi = 8, int denom = 4) {
  std::uniform_int_distribution<int> num(lo * denom, hi * denom);
  if constexpr (std::is_same_v<S, double>) {
    return static_cast<double>(num(rng)) / denom;
  } else {
    return Rational(num(rng), denom);
  }
}

template <class S>
stochdual::RandomVariable<S> random_variable(std::mt19937& rng, stochdual::TreePtr<S> tree,
                                             int dim) {
  stochdual::RandomVariable<S> v(tree, dim);
  for (auto& x : v.values) x = random_scalar<S>(rng);
  return v;
}

template <class S>
stochdual::AdaptedProcess<S> random_adapted(std::mt19937& rng, stochdual::TreePtr<S> tree,
                                            std::vector<int> dims) {
  stochdual::AdaptedProcess<S> x(tree, std::move(dims));
  for (auto& stage : x.values)
    for (auto& v : stage) v = random_scalar<S>(rng);
  return x;
}

template <class S>
stochdual::LeafProcess<S> random_leaf_process(std::mt19937& rng, stochdual::TreePtr<S> tree,
                                              std::vector<int> dims) {
  stochdual::LeafProcess<S> p(tree, std::move(dims));
  for (auto& stage : p.values)
    for (auto& v : stage) v = random_scalar<S>(rng);
  return p;
}

}  // namespace testgen
