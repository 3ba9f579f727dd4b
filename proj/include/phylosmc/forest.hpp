#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "error.hpp"
#include "likelihood.hpp"
#include "tree.hpp"

namespace phylosmc {

/// Branch data of one merge. Indices refer to the source forest's trees.
/// Clock merges use delta_h; non-clock merges use b1 (edge to the member
/// with the smaller key) and b2 (edge to the other, unused for the final join).
struct MergeMove {
  std::size_t i = 0;
  std::size_t j = 1;
  double delta_h = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
};

/// A set of rooted trees partitioning the taxa, ordered by key.
struct Forest {
  std::vector<Subtree> trees;

  std::size_t size() const { return trees.size(); }
  const Subtree& operator[](std::size_t i) const { return trees[i]; }

  /// Maximum root height (0 for a forest of singletons).
  double height() const {
    double h = 0.0;
    for (const auto& t : trees) h = std::max(h, t.node->height);
    return h;
  }

  std::size_t rank(std::size_t total_taxa) const { return total_taxa - trees.size() + 1; }

  TaxonSet taxa() const {
    TaxonSet s;
    for (const auto& t : trees) s |= t.node->taxa;
    return s;
  }

  std::vector<const Node*> roots() const {
    std::vector<const Node*> r;
    r.reserve(trees.size());
    for (const auto& t : trees) r.push_back(t.node.get());
    return r;
  }

  void insert(Subtree t) {
    auto pos = std::lower_bound(trees.begin(), trees.end(), t.node->key,
                                [](const Subtree& a, int key) { return a.node->key < key; });
    trees.insert(pos, std::move(t));
  }

  std::optional<std::size_t> find(const TaxonSet& taxa) const {
    for (std::size_t i = 0; i < trees.size(); ++i) {
      if (trees[i].node->taxa == taxa) return i;
    }
    return std::nullopt;
  }
};

/// A forest plus the two subtrees merged most recently (empty at rank 1).
struct AugmentedState {
  Forest base;
  std::optional<std::array<Subtree, 2>> pair;

  std::size_t size() const { return base.size(); }
};

inline Forest initial_forest(const LikelihoodEngine& engine) {
  Forest f;
  for (std::size_t t = 0; t < engine.taxon_count(); ++t) f.insert(engine.leaf(t));
  return f;
}

inline AugmentedState initial_state(const LikelihoodEngine& engine) {
  return {initial_forest(engine), std::nullopt};
}

inline const Forest& beta(const AugmentedState& s) { return s.base; }

inline std::size_t count_nontrivial(const Forest& f) {
  std::size_t n = 0;
  for (const auto& t : f.trees) n += t.node->is_leaf() ? 0 : 1;
  return n;
}

inline bool same_forest(const Forest& a, const Forest& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_tree(a.trees[i].node, b.trees[i].node)) return false;
  }
  return true;
}

inline bool same_state(const AugmentedState& a, const AugmentedState& b) {
  if (!same_forest(a.base, b.base) || a.pair.has_value() != b.pair.has_value()) return false;
  if (!a.pair) return true;
  return same_tree((*a.pair)[0].node, (*b.pair)[0].node) &&
         same_tree((*a.pair)[1].node, (*b.pair)[1].node);
}

/// Applies a merge; returns the new forest and (optionally) the created tree.
inline Forest merge(const Forest& forest, MergeMove move, const LikelihoodEngine& engine,
                    bool clock, Subtree* created = nullptr) {
  const std::size_t n = forest.size();
  if (move.i == move.j) throw Error(ErrorKind::kCannotMerge, "cannot merge a tree with itself");
  if (move.i >= n || move.j >= n) throw Error(ErrorKind::kCannotMerge, "tree index out of range");
  if (move.i > move.j) std::swap(move.i, move.j);
  const Subtree& a = forest.trees[move.i];
  const Subtree& b = forest.trees[move.j];
  Subtree joined;
  if (clock) {
    if (!(move.delta_h >= 0.0)) throw Error(ErrorKind::kDomain, "negative height increment");
    const double h = forest.height() + move.delta_h;
    joined = engine.join(a, b, h - a.node->height, h - b.node->height, h);
  } else {
    if (!(move.b1 >= 0.0) || (n > 2 && !(move.b2 >= 0.0))) {
      throw Error(ErrorKind::kDomain, "negative branch length");
    }
    if (n == 2) {
      const double h = std::max(a.node->height + move.b1, b.node->height);
      joined = engine.join(a, b, move.b1, 0.0, h, true);
    } else {
      const double h = std::max(a.node->height + move.b1, b.node->height + move.b2);
      joined = engine.join(a, b, move.b1, move.b2, h);
    }
  }
  Forest out;
  out.trees.reserve(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    if (k != move.i && k != move.j) out.trees.push_back(forest.trees[k]);
  }
  if (created) *created = joined;
  out.insert(std::move(joined));
  return out;
}

/// Merge that records the merged pair.
inline AugmentedState merge_augmented(const Forest& forest, MergeMove move,
                                      const LikelihoodEngine& engine, bool clock,
                                      Subtree* created = nullptr) {
  if (move.i > move.j) std::swap(move.i, move.j);
  if (move.j >= forest.size()) throw Error(ErrorKind::kCannotMerge, "tree index out of range");
  std::array<Subtree, 2> pair{forest.trees[move.i], forest.trees[move.j]};
  AugmentedState s{merge(forest, move, engine, clock, created), pair};
  return s;
}

/// Index in the base forest of the tree whose children are the merged pair.
inline std::size_t pair_parent_index(const AugmentedState& s) {
  if (!s.pair) throw Error(ErrorKind::kNoLastMerge, "state has no merged pair");
  const auto& [a, b] = *s.pair;
  const TaxonSet joined = a.node->taxa | b.node->taxa;
  for (std::size_t i = 0; i < s.base.size(); ++i) {
    const Node& n = *s.base.trees[i].node;
    if (n.taxa == joined && !n.is_leaf() && same_tree(n.left, a.node) &&
        same_tree(n.right, b.node)) {
      return i;
    }
  }
  throw Error(ErrorKind::kNoLastMerge, "merged pair is not a root's children");
}

/// The revert map: removes the tree formed by the merged pair and restores
/// its two children as separate trees.
inline Forest reverted_state(const AugmentedState& s) {
  const std::size_t idx = pair_parent_index(s);
  Forest out;
  out.trees.reserve(s.base.size() + 1);
  for (std::size_t k = 0; k < s.base.size(); ++k) {
    if (k != idx) out.trees.push_back(s.base.trees[k]);
  }
  out.insert((*s.pair)[0]);
  out.insert((*s.pair)[1]);
  return out;
}

inline Forest stripped(const Forest& f) {
  Forest out;
  out.trees.reserve(f.size());
  for (const auto& t : f.trees) out.trees.push_back(stripped(t));
  return out;
}

inline AugmentedState stripped(const AugmentedState& s) {
  AugmentedState out{stripped(s.base), std::nullopt};
  if (s.pair) out.pair = std::array<Subtree, 2>{stripped((*s.pair)[0]), stripped((*s.pair)[1])};
  return out;
}

inline Forest rehydrate(const Forest& f, const LikelihoodEngine& engine,
                        LikelihoodEngine::Memo& memo) {
  Forest out;
  out.trees.reserve(f.size());
  for (const auto& t : f.trees) out.trees.push_back(engine.rebuild(t.node, memo));
  return out;
}

/// Recomputes all pruning vectors under the engine's model.
inline AugmentedState rehydrate(const AugmentedState& s, const LikelihoodEngine& engine,
                                LikelihoodEngine::Memo& memo) {
  AugmentedState out{rehydrate(s.base, engine, memo), std::nullopt};
  if (s.pair) {
    out.pair = std::array<Subtree, 2>{engine.rebuild((*s.pair)[0].node, memo),
                                      engine.rebuild((*s.pair)[1].node, memo)};
  }
  return out;
}

/// Log of the unnormalized target: tree likelihoods times the forest prior.
inline double gamma_log(const Forest& f, const PriorConfig& prior, std::size_t total_taxa) {
  double s = 0.0;
  for (const auto& t : f.trees) s += t.log_lik;
  return s + forest_log_prior(f.roots(), total_taxa, prior);
}

inline double gamma_log(const AugmentedState& s, const PriorConfig& prior,
                        std::size_t total_taxa) {
  return gamma_log(s.base, prior, total_taxa);
}

/// Same as gamma_log but recomputes every likelihood from the leaves.
inline double gamma_log_uncached(const Forest& f, const LikelihoodEngine& engine,
                                 const PriorConfig& prior) {
  double s = 0.0;
  for (const auto& t : f.trees) s += engine.tree_log_likelihood(*t.node);
  return s + forest_log_prior(f.roots(), engine.taxon_count(), prior);
}

}  // namespace phylosmc
