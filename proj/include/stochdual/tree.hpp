#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochdual/extreal.hpp"
#include "stochdual/rational.hpp"

namespace stochdual {

// Finite filtered probability space as a rooted forest.
//
// Nodes are indexed in depth-first preorder, fixed at construction; that
// order is part of the serialized format. Stage-t nodes are the atoms of
// F_t, the leaves (all at stage `horizon`) the atoms of F. A forest with
// several roots models a nontrivial F_0; root probabilities sum to one and
// children probabilities sum to their parent's.
//
// S is double or Rational. Mass-balance invariants are checked to 1e-12 for
// double and exactly for Rational.
template <class S>
class ScenarioTree {
 public:
  // parent[i] = -1 for roots; nodes must already be in depth-first preorder.
  ScenarioTree(std::vector<int> parent, std::vector<int> stage, std::vector<S> prob)
      : parent_(std::move(parent)), stage_(std::move(stage)), prob_(std::move(prob)) {
    const int n = static_cast<int>(parent_.size());
    if (n == 0) throw std::invalid_argument("tree: empty node set");
    if (static_cast<int>(stage_.size()) != n || static_cast<int>(prob_.size()) != n)
      throw std::invalid_argument("tree: array length mismatch");

    children_.assign(n, {});
    horizon_ = 0;
    for (int i = 0; i < n; ++i) {
      if (parent_[i] >= i) throw std::invalid_argument("tree: parent must precede child");
      if (parent_[i] < -1) throw std::invalid_argument("tree: bad parent id");
      if (parent_[i] == -1) {
        if (stage_[i] != 0) throw std::invalid_argument("tree: root not at stage 0");
      } else {
        if (stage_[i] != stage_[parent_[i]] + 1)
          throw std::invalid_argument("tree: stage(child) != stage(parent)+1");
        children_[parent_[i]].push_back(i);
      }
      if (!(prob_[i] > S(0))) throw std::invalid_argument("tree: node probability must be > 0");
      horizon_ = std::max(horizon_, stage_[i]);
    }

    // Depth-first preorder check: replaying the DFS must visit 0,1,...,n-1.
    {
      std::vector<int> order;
      order.reserve(n);
      std::vector<int> stack;
      for (int i = n - 1; i >= 0; --i)
        if (parent_[i] == -1) stack.push_back(i);
      while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        order.push_back(v);
        for (auto it = children_[v].rbegin(); it != children_[v].rend(); ++it)
          stack.push_back(*it);
      }
      for (int i = 0; i < n; ++i)
        if (order[static_cast<std::size_t>(i)] != i)
          throw std::invalid_argument("tree: nodes not in depth-first preorder");
    }

    // Mass balance and leaf placement.
    S root_mass(0);
    for (int i = 0; i < n; ++i) {
      if (parent_[i] == -1) root_mass += prob_[i];
      if (children_[i].empty()) {
        if (stage_[i] != horizon_) throw std::invalid_argument("tree: leaf before final stage");
      } else {
        S mass(0);
        for (int c : children_[i]) mass += prob_[c];
        check_mass(mass, prob_[i], "children probabilities do not sum to parent");
      }
    }
    check_mass(root_mass, S(1), "root probabilities do not sum to 1");

    nodes_by_stage_.assign(static_cast<std::size_t>(horizon_) + 1, {});
    node_pos_in_stage_.assign(n, -1);
    for (int i = 0; i < n; ++i) {
      node_pos_in_stage_[i] = static_cast<int>(nodes_by_stage_[stage_[i]].size());
      nodes_by_stage_[stage_[i]].push_back(i);
    }
    leaves_ = nodes_by_stage_[horizon_];
    leaf_index_.assign(n, -1);
    for (int l = 0; l < static_cast<int>(leaves_.size()); ++l) leaf_index_[leaves_[l]] = l;

    // Ancestor-at-stage table per leaf.
    ancestor_.assign(leaves_.size(), std::vector<int>(static_cast<std::size_t>(horizon_) + 1, -1));
    for (std::size_t l = 0; l < leaves_.size(); ++l) {
      int v = leaves_[l];
      while (v != -1) {
        ancestor_[l][stage_[v]] = v;
        v = parent_[v];
      }
    }
  }

  int num_nodes() const { return static_cast<int>(parent_.size()); }
  int num_leaves() const { return static_cast<int>(leaves_.size()); }
  int horizon() const { return horizon_; }
  int parent(int node) const { return parent_[node]; }
  int stage(int node) const { return stage_[node]; }
  const S& prob(int node) const { return prob_[node]; }
  const std::vector<int>& children(int node) const { return children_[node]; }
  const std::vector<int>& nodes_at_stage(int t) const { return nodes_by_stage_[t]; }
  const std::vector<int>& leaves() const { return leaves_; }
  int leaf_node(int leaf) const { return leaves_[leaf]; }
  const S& leaf_prob(int leaf) const { return prob_[leaves_[leaf]]; }
  // Node id of the stage-t ancestor (atom of F_t) containing the given leaf.
  int ancestor(int leaf, int t) const { return ancestor_[leaf][t]; }
  // Position of `node` within nodes_at_stage(stage(node)).
  int pos_in_stage(int node) const { return node_pos_in_stage_[node]; }

  const std::vector<int>& parents_raw() const { return parent_; }
  const std::vector<int>& stages_raw() const { return stage_; }
  const std::vector<S>& probs_raw() const { return prob_; }

 private:
  static void check_mass(const S& got, const S& want, const char* msg) {
    if constexpr (std::is_same_v<S, double>) {
      if (std::abs(got - want) > 1e-12) throw std::invalid_argument(std::string("tree: ") + msg);
    } else {
      if (got != want) throw std::invalid_argument(std::string("tree: ") + msg);
    }
  }

  std::vector<int> parent_;
  std::vector<int> stage_;
  std::vector<S> prob_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> nodes_by_stage_;
  std::vector<int> node_pos_in_stage_;
  std::vector<int> leaves_;
  std::vector<int> leaf_index_;
  std::vector<std::vector<int>> ancestor_;
  int horizon_ = 0;
};

template <class S>
using TreePtr = std::shared_ptr<const ScenarioTree<S>>;

// F-measurable R^m-valued random variable: one vector per leaf.
template <class S>
struct RandomVariable {
  TreePtr<S> tree;
  int dim = 0;
  std::vector<S> values;  // leaf-major, size num_leaves * dim

  RandomVariable() = default;
  RandomVariable(TreePtr<S> t, int m) : tree(std::move(t)), dim(m) {
    values.assign(static_cast<std::size_t>(tree->num_leaves()) * dim, S(0));
  }
  S& at(int leaf, int i) { return values[static_cast<std::size_t>(leaf) * dim + i]; }
  const S& at(int leaf, int i) const { return values[static_cast<std::size_t>(leaf) * dim + i]; }
};

// Adapted process: one R^{n_t} vector per stage-t node. Adaptedness is
// structural in this storage.
template <class S>
struct AdaptedProcess {
  TreePtr<S> tree;
  std::vector<int> dims;             // n_t per stage
  std::vector<std::vector<S>> values;  // values[t], node-major within stage

  AdaptedProcess() = default;
  AdaptedProcess(TreePtr<S> t, std::vector<int> d) : tree(std::move(t)), dims(std::move(d)) {
    if (static_cast<int>(dims.size()) != tree->horizon() + 1)
      throw std::invalid_argument("adapted process: dims length != horizon+1");
    values.resize(dims.size());
    for (int s = 0; s <= tree->horizon(); ++s)
      values[s].assign(tree->nodes_at_stage(s).size() * static_cast<std::size_t>(dims[s]), S(0));
  }
  S& at(int node, int i) {
    int t = tree->stage(node);
    return values[t][static_cast<std::size_t>(tree->pos_in_stage(node)) * dims[t] + i];
  }
  const S& at(int node, int i) const {
    int t = tree->stage(node);
    return values[t][static_cast<std::size_t>(tree->pos_in_stage(node)) * dims[t] + i];
  }
};

// Possibly non-adapted process: one R^{n_t} vector per stage per leaf.
template <class S>
struct LeafProcess {
  TreePtr<S> tree;
  std::vector<int> dims;
  std::vector<std::vector<S>> values;  // values[t], leaf-major within stage

  LeafProcess() = default;
  LeafProcess(TreePtr<S> t, std::vector<int> d) : tree(std::move(t)), dims(std::move(d)) {
    if (static_cast<int>(dims.size()) != tree->horizon() + 1)
      throw std::invalid_argument("leaf process: dims length != horizon+1");
    values.resize(dims.size());
    for (int s = 0; s <= tree->horizon(); ++s)
      values[s].assign(static_cast<std::size_t>(tree->num_leaves()) * dims[s], S(0));
  }
  S& at(int t, int leaf, int i) {
    return values[t][static_cast<std::size_t>(leaf) * dims[t] + i];
  }
  const S& at(int t, int leaf, int i) const {
    return values[t][static_cast<std::size_t>(leaf) * dims[t] + i];
  }
};

namespace detail {
template <class S>
void require_same_tree(const TreePtr<S>& a, const TreePtr<S>& b) {
  if (a.get() != b.get()) throw std::invalid_argument("processes live on different trees");
}
}  // namespace detail

// E_t v realized as averaging over the stage-t atom containing each leaf.
template <class S>
RandomVariable<S> conditional_expectation(const RandomVariable<S>& v, int t) {
  const auto& tree = *v.tree;
  if (t < 0 || t > tree.horizon()) throw std::out_of_range("conditional_expectation: bad stage");
  RandomVariable<S> out(v.tree, v.dim);
  const auto& atoms = tree.nodes_at_stage(t);
  std::vector<S> acc(atoms.size() * static_cast<std::size_t>(v.dim), S(0));
  for (int l = 0; l < tree.num_leaves(); ++l) {
    int a = tree.pos_in_stage(tree.ancestor(l, t));
    for (int i = 0; i < v.dim; ++i)
      acc[static_cast<std::size_t>(a) * v.dim + i] += tree.leaf_prob(l) * v.at(l, i);
  }
  for (int l = 0; l < tree.num_leaves(); ++l) {
    int node = tree.ancestor(l, t);
    int a = tree.pos_in_stage(node);
    for (int i = 0; i < v.dim; ++i)
      out.at(l, i) = acc[static_cast<std::size_t>(a) * v.dim + i] / tree.prob(node);
  }
  return out;
}

// Same conditional expectation, stored on the stage-t atoms.
template <class S>
std::vector<S> conditional_expectation_nodes(const RandomVariable<S>& v, int t) {
  const auto& tree = *v.tree;
  if (t < 0 || t > tree.horizon()) throw std::out_of_range("conditional_expectation: bad stage");
  const auto& atoms = tree.nodes_at_stage(t);
  std::vector<S> acc(atoms.size() * static_cast<std::size_t>(v.dim), S(0));
  for (int l = 0; l < tree.num_leaves(); ++l) {
    int a = tree.pos_in_stage(tree.ancestor(l, t));
    for (int i = 0; i < v.dim; ++i)
      acc[static_cast<std::size_t>(a) * v.dim + i] += tree.leaf_prob(l) * v.at(l, i);
  }
  for (std::size_t a = 0; a < atoms.size(); ++a)
    for (int i = 0; i < v.dim; ++i) acc[a * v.dim + i] /= tree.prob(atoms[a]);
  return acc;
}

template <class S>
S expectation(const RandomVariable<S>& v, int i = 0) {
  const auto& tree = *v.tree;
  S total(0);
  for (int l = 0; l < tree.num_leaves(); ++l) total += tree.leaf_prob(l) * v.at(l, i);
  return total;
}

// ap p := (E_t p_t)_t, node-indexed.
template <class S>
AdaptedProcess<S> adapted_projection(const LeafProcess<S>& p) {
  const auto& tree = *p.tree;
  AdaptedProcess<S> out(p.tree, p.dims);
  for (int t = 0; t <= tree.horizon(); ++t) {
    if (p.dims[t] == 0) continue;
    RandomVariable<S> vt(p.tree, p.dims[t]);
    for (int l = 0; l < tree.num_leaves(); ++l)
      for (int i = 0; i < p.dims[t]; ++i) vt.at(l, i) = p.at(t, l, i);
    out.values[t] = conditional_expectation_nodes(vt, t);
  }
  return out;
}

// Evaluate an adapted process along each leaf path.
template <class S>
LeafProcess<S> to_leaf_process(const AdaptedProcess<S>& x) {
  const auto& tree = *x.tree;
  LeafProcess<S> out(x.tree, x.dims);
  for (int t = 0; t <= tree.horizon(); ++t)
    for (int l = 0; l < tree.num_leaves(); ++l) {
      int node = tree.ancestor(l, t);
      for (int i = 0; i < x.dims[t]; ++i) out.at(t, l, i) = x.at(node, i);
    }
  return out;
}

template <class S>
LeafProcess<S> subtract_projection(const LeafProcess<S>& p) {
  LeafProcess<S> ap_leaf = to_leaf_process(adapted_projection(p));
  LeafProcess<S> out = p;
  for (int t = 0; t <= p.tree->horizon(); ++t)
    for (std::size_t k = 0; k < out.values[t].size(); ++k) out.values[t][k] -= ap_leaf.values[t][k];
  return out;
}

// <x,v> = sum_t E[x_t . v_t]
template <class S>
S pairing(const LeafProcess<S>& x, const LeafProcess<S>& v) {
  detail::require_same_tree(x.tree, v.tree);
  if (x.dims != v.dims) throw std::invalid_argument("pairing: dimension mismatch");
  const auto& tree = *x.tree;
  S total(0);
  for (int t = 0; t <= tree.horizon(); ++t) {
    for (int l = 0; l < tree.num_leaves(); ++l) {
      S dot(0);
      for (int i = 0; i < x.dims[t]; ++i) dot += x.at(t, l, i) * v.at(t, l, i);
      total += tree.leaf_prob(l) * dot;
    }
  }
  return total;
}

template <class S>
S pairing(const AdaptedProcess<S>& x, const LeafProcess<S>& v) {
  return pairing(to_leaf_process(x), v);
}

// True iff ||E_t p_t||_inf <= tol for every stage t.
template <class S>
bool in_orthogonal_complement(const LeafProcess<S>& p, const S& tol) {
  AdaptedProcess<S> ap = adapted_projection(p);
  for (int t = 0; t <= p.tree->horizon(); ++t)
    for (const S& v : ap.values[t])
      if (abs_val(v) > tol) return false;
  return true;
}

template <class S>
S orthogonality_residual(const LeafProcess<S>& p, int t) {
  AdaptedProcess<S> ap = adapted_projection(p);
  S worst(0);
  for (const S& v : ap.values[t]) worst = std::max(worst, abs_val(v));
  return worst;
}

// True iff ||E_t y_{t+1} - y_t||_inf <= tol for all t < T.
template <class S>
bool is_martingale(const AdaptedProcess<S>& y, const S& tol) {
  const auto& tree = *y.tree;
  for (int t = 0; t + 1 <= tree.horizon(); ++t) {
    if (y.dims[t] != y.dims[t + 1])
      throw std::invalid_argument("is_martingale: stage dims differ");
    for (int node : tree.nodes_at_stage(t)) {
      for (int i = 0; i < y.dims[t]; ++i) {
        S acc(0);
        for (int c : tree.children(node)) acc += tree.prob(c) * y.at(c, i);
        acc /= tree.prob(node);
        if (abs_val(S(acc - y.at(node, i))) > tol) return false;
      }
    }
  }
  return true;
}

// y = m + a with m a martingale, a predictable (a_t constant on the parent
// atom), a_0 = 0, and m + a = y exactly.
template <class S>
std::pair<AdaptedProcess<S>, AdaptedProcess<S>> doob_decomposition(const AdaptedProcess<S>& y) {
  const auto& tree = *y.tree;
  for (int t = 0; t + 1 <= tree.horizon(); ++t)
    if (y.dims[t] != y.dims[t + 1]) throw std::invalid_argument("doob: stage dims differ");
  AdaptedProcess<S> m(y.tree, y.dims), a(y.tree, y.dims);
  for (int node : tree.nodes_at_stage(0))
    for (int i = 0; i < y.dims[0]; ++i) {
      m.at(node, i) = y.at(node, i);
      a.at(node, i) = S(0);
    }
  for (int t = 1; t <= tree.horizon(); ++t) {
    for (int node : tree.nodes_at_stage(t - 1)) {
      for (int i = 0; i < y.dims[t]; ++i) {
        S drift(0);  // E_{t-1}[dy_t] on this atom
        for (int c : tree.children(node)) drift += tree.prob(c) * (y.at(c, i) - y.at(node, i));
        drift /= tree.prob(node);
        for (int c : tree.children(node)) {
          a.at(c, i) = a.at(node, i) + drift;
          m.at(c, i) = y.at(c, i) - a.at(c, i);
        }
      }
    }
  }
  return {std::move(m), std::move(a)};
}

}  // namespace stochdual
