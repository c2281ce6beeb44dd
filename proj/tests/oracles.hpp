#pragma once

// Independent brute-force oracles. These deliberately avoid the library's
// solution paths: stopping times are enumerated outright and linear programs
// are solved by basis enumeration.

#include <optional>
#include <vector>

#include "stochdual/la.hpp"
#include "stochdual/tree.hpp"

namespace oracles {

using namespace stochdual;

// Number of stopping times on the subtree rooted at `node`.
template <class S>
long long stopping_time_count(const ScenarioTree<S>& tree, int node) {
  if (tree.children(node).empty()) return 2;  // stop here or never
  long long prod = 1;
  for (int c : tree.children(node)) {
    prod *= stopping_time_count(tree, c);
    if (prod > (1LL << 40)) return prod;
  }
  return 1 + prod;
}

template <class S>
long long stopping_time_count(const ScenarioTree<S>& tree) {
  long long prod = 1;
  for (int n = 0; n < tree.num_nodes(); ++n)
    if (tree.parent(n) == -1) {
      prod *= stopping_time_count(tree, n);
      if (prod > (1LL << 40)) return prod;
    }
  return prod;
}

namespace detail {

// All achievable expected-reward contributions of the subtree at `node`:
// either stop here (collect prob * R) or recurse independently per child.
template <class S>
std::vector<S> stopping_values(const ScenarioTree<S>& tree, const AdaptedProcess<S>& reward,
                               int node) {
  std::vector<S> out{S(tree.prob(node) * reward.at(node, 0))};
  std::vector<S> cont{S(0)};
  for (int c : tree.children(node)) {
    auto sub = stopping_values(tree, reward, c);
    std::vector<S> next;
    next.reserve(cont.size() * sub.size());
    for (const S& a : cont)
      for (const S& b : sub) next.push_back(S(a + b));
    cont = std::move(next);
  }
  if (!tree.children(node).empty()) {
    out.insert(out.end(), cont.begin(), cont.end());
  } else {
    out.push_back(S(0));  // never stop on this path
  }
  return out;
}

}  // namespace detail

// max over ALL stopping times of E[R_tau] (tau = T+1 contributes nothing).
template <class S>
S stopping_enumeration_optimum(const stochdual::TreePtr<S>& tree,
                               const AdaptedProcess<S>& reward) {
  std::vector<S> totals{S(0)};
  for (int n = 0; n < tree->num_nodes(); ++n) {
    if (tree->parent(n) != -1) continue;
    auto sub = detail::stopping_values(*tree, reward, n);
    std::vector<S> next;
    next.reserve(totals.size() * sub.size());
    for (const S& a : totals)
      for (const S& b : sub) next.push_back(S(a + b));
    totals = std::move(next);
  }
  S best = totals.front();
  for (const S& v : totals) best = std::max(best, v);
  return best;
}

// min c.z over { A z <= b } by enumerating square row subsets. The feasible
// region must be bounded (include box rows); returns nullopt when no basic
// feasible point exists.
inline std::optional<double> lp_vertex_enumeration(const MatX<double>& A, const VecX<double>& b,
                                                   const VecX<double>& c) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(A.rows());
  std::vector<int> pick(n);
  std::optional<double> best;
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  // iterate over all n-subsets of rows
  while (true) {
    MatX<double> M(n, n);
    VecX<double> rhs(n);
    for (int i = 0; i < n; ++i) {
      M.row(i) = A.row(idx[i]);
      rhs[i] = b[idx[i]];
    }
    Eigen::FullPivLU<MatX<double>> lu(M);
    if (lu.isInvertible()) {
      VecX<double> z = lu.solve(rhs);
      if ((A * z - b).maxCoeff() <= 1e-9) {
        double val = c.dot(z);
        if (!best || val < *best) best = val;
      }
    }
    // next combination
    int i = n - 1;
    while (i >= 0 && idx[i] == m - n + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

}  // namespace oracles
