#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "alignment.hpp"
#include "error.hpp"
#include "k2p.hpp"
#include "tree.hpp"

namespace phylosmc {

struct PriorConfig {
  double lambda = 10.0;   // non-clock branch length rate
  double lambda0 = 10.0;  // clock coalescent rate multiplier
  bool clock = true;

  void validate() const {
    if (!(lambda > 0.0) || !(lambda0 > 0.0)) {
      throw Error(ErrorKind::kDomain, "prior rates must be positive");
    }
  }
};

inline double choose2(std::size_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

/// Per-pattern conditional likelihoods at a subtree root. Entries are kept in
/// a scaled form: the true value is `values * 2^(-kScaleBits * scale)`.
struct Partials {
  static constexpr int kScaleBits = 128;
  std::vector<double> values;  // 4 per pattern
  std::vector<int> scale;      // rescaling count per pattern

  std::size_t pattern_count() const { return scale.size(); }

  double log_value(std::size_t p, int x) const {
    return std::log(values[4 * p + x]) - scale[p] * kScaleBits * std::log(2.0);
  }
};

using PartialsPtr = std::shared_ptr<const Partials>;

/// A tree root together with its pruning vector and log-likelihood. The
/// partials may be dropped (see `stripped`) when only the topology matters.
struct Subtree {
  NodePtr node;
  PartialsPtr partials;
  double log_lik = 0.0;

  const Node& operator*() const { return *node; }
  const Node* operator->() const { return node.get(); }
};

inline Subtree stripped(const Subtree& s) { return {s.node, nullptr, s.log_lik}; }

/// Felsenstein pruning for one alignment under one K2P model.
class LikelihoodEngine {
 public:
  using Memo = std::unordered_map<const Node*, Subtree>;

  LikelihoodEngine(const Alignment& alignment, K2PModel model)
      : alignment_(&alignment), taxa_(alignment.names()), model_(model) {
    const std::size_t np = alignment.pattern_count();
    leaves_.reserve(alignment.taxon_count());
    for (std::size_t t = 0; t < alignment.taxon_count(); ++t) {
      auto part = std::make_shared<Partials>();
      part->values.assign(4 * np, 0.0);
      part->scale.assign(np, 0);
      for (std::size_t p = 0; p < np; ++p) {
        const State s = alignment.pattern_state(t, p);
        if (s == kMissing) {
          for (int x = 0; x < 4; ++x) part->values[4 * p + x] = 1.0;
        } else {
          part->values[4 * p + s] = 1.0;
        }
      }
      Subtree leaf{make_leaf(static_cast<int>(t), alignment.name_rank(t)), nullptr, 0.0};
      leaf.log_lik = log_likelihood(*part);
      leaf.partials = std::move(part);
      leaves_.push_back(std::move(leaf));
    }
  }

  const Alignment& alignment() const { return *alignment_; }
  const TaxonTable& taxa() const { return taxa_; }
  const K2PModel& model() const { return model_; }
  double kappa() const { return model_.kappa; }
  std::size_t taxon_count() const { return leaves_.size(); }

  const Subtree& leaf(std::size_t taxon) const {
    if (taxon >= leaves_.size()) throw Error(ErrorKind::kMissingTaxon, "taxon index out of range");
    return leaves_[taxon];
  }

  /// Root pruning vector of the join of `a` and `b` with edge lengths la, lb.
  PartialsPtr join_partials(const Partials& a, const Partials& b, double la, double lb) const {
    const Matrix4 pa = transition_probabilities(model_, la);
    const Matrix4 pb = transition_probabilities(model_, lb);
    const std::size_t np = a.pattern_count();
    auto out = std::make_shared<Partials>();
    out->values.resize(4 * np);
    out->scale.resize(np);
    constexpr double kSmall = 0x1.0p-128;
    constexpr double kLift = 0x1.0p+128;
    for (std::size_t p = 0; p < np; ++p) {
      const double* va = &a.values[4 * p];
      const double* vb = &b.values[4 * p];
      double* vo = &out->values[4 * p];
      double mx = 0.0;
      for (int x = 0; x < 4; ++x) {
        const double* ra = &pa[4 * x];
        const double* rb = &pb[4 * x];
        const double sa = ra[0] * va[0] + ra[1] * va[1] + ra[2] * va[2] + ra[3] * va[3];
        const double sb = rb[0] * vb[0] + rb[1] * vb[1] + rb[2] * vb[2] + rb[3] * vb[3];
        vo[x] = sa * sb;
        mx = std::max(mx, vo[x]);
      }
      int sc = a.scale[p] + b.scale[p];
      while (mx < kSmall && mx > 0.0) {
        for (int x = 0; x < 4; ++x) vo[x] *= kLift;
        mx *= kLift;
        ++sc;
      }
      out->scale[p] = sc;
    }
    return out;
  }

  double log_likelihood(const Partials& part) const {
    const auto& w = alignment_->pattern_weights();
    double sum = 0.0;
    long scale_total = 0;
    for (std::size_t p = 0; p < part.pattern_count(); ++p) {
      const double* v = &part.values[4 * p];
      sum += w[p] * std::log(0.25 * (v[0] + v[1] + v[2] + v[3]));
      scale_total += static_cast<long>(w[p]) * part.scale[p];
    }
    return sum - static_cast<double>(scale_total) * Partials::kScaleBits * std::log(2.0);
  }

  /// Joins two subtrees into a new tree and computes its pruning vector.
  Subtree join(const Subtree& a, const Subtree& b, double la, double lb, double height,
               bool single_edge = false) const {
    if (!a.partials || !b.partials) throw Error(ErrorKind::kUsage, "join of stripped subtrees");
    Subtree out;
    out.node = make_join(a.node, b.node, la, lb, height, single_edge);
    out.partials = join_partials(*a.partials, *b.partials, la, lb);
    out.log_lik = log_likelihood(*out.partials);
    return out;
  }

  /// Recomputes the pruning vector of an existing tree, reusing memoized
  /// subtrees (keyed by node identity) where available.
  Subtree rebuild(const NodePtr& node, Memo& memo) const {
    if (node->is_leaf()) {
      const Subtree& l = leaf(static_cast<std::size_t>(node->taxon));
      return {node, l.partials, l.log_lik};
    }
    if (auto it = memo.find(node.get()); it != memo.end()) return it->second;
    const Subtree l = rebuild(node->left, memo);
    const Subtree r = rebuild(node->right, memo);
    Subtree out{node, join_partials(*l.partials, *r.partials, node->left_length, node->right_length),
                0.0};
    out.log_lik = log_likelihood(*out.partials);
    memo.emplace(node.get(), out);
    return out;
  }

  Subtree rebuild(const NodePtr& node) const {
    Memo memo;
    return rebuild(node, memo);
  }

  /// Full post-order recomputation with no caching.
  double tree_log_likelihood(const Node& root) const {
    return log_likelihood(*pruning_vector(root));
  }

  PartialsPtr pruning_vector(const Node& n) const {
    if (n.is_leaf()) {
      if (n.taxon < 0 || static_cast<std::size_t>(n.taxon) >= leaves_.size()) {
        throw Error(ErrorKind::kMissingTaxon, "leaf not in alignment");
      }
      return leaves_[static_cast<std::size_t>(n.taxon)].partials;
    }
    const auto l = pruning_vector(*n.left);
    const auto r = pruning_vector(*n.right);
    return join_partials(*l, *r, n.left_length, n.right_length);
  }

 private:
  const Alignment* alignment_;
  TaxonTable taxa_;
  K2PModel model_;
  std::vector<Subtree> leaves_;
};

inline double exp_log_density(double rate, double x) {
  if (!(x >= 0.0)) return -std::numeric_limits<double>::infinity();
  return std::log(rate) - rate * x;
}

namespace detail {

inline void collect_heights(const Node& n, std::vector<double>& out) {
  if (n.is_leaf()) return;
  out.push_back(n.height);
  collect_heights(*n.left, out);
  collect_heights(*n.right, out);
}

inline bool has_negative_edge(const Node& n) {
  if (n.is_leaf()) return false;
  return n.left_length < 0.0 || n.right_length < 0.0 || has_negative_edge(*n.left) ||
         has_negative_edge(*n.right);
}

inline double edge_prior(const Node& n, double lambda) {
  if (n.is_leaf()) return 0.0;
  double s = exp_log_density(lambda, n.left_length);
  if (!n.single_edge) s += exp_log_density(lambda, n.right_length);
  return s + edge_prior(*n.left, lambda) + edge_prior(*n.right, lambda);
}

// Coalescent events at the given sorted heights, starting from k lineages.
// `with_pair_choice` uses rate lambda0 per event (pair probability folded in).
inline double coalescent_events(std::vector<double> heights, std::size_t k, double lambda0,
                                bool with_pair_choice) {
  std::sort(heights.begin(), heights.end());
  double sum = 0.0;
  double prev = 0.0;
  for (double h : heights) {
    const double rate = lambda0 * choose2(k);
    const double dt = h - prev;
    if (!(dt >= 0.0)) return -std::numeric_limits<double>::infinity();
    sum += (with_pair_choice ? std::log(lambda0) : std::log(rate)) - rate * dt;
    prev = h;
    --k;
  }
  return sum;
}

}  // namespace detail

/// Prior density of one complete tree. Non-clock: i.i.d. exponential edges
/// (topology constant dropped). Clock: coalescent waiting times.
inline double tree_log_prior(const Node& root, const PriorConfig& prior) {
  if (detail::has_negative_edge(root)) return -std::numeric_limits<double>::infinity();
  if (!prior.clock) return detail::edge_prior(root, prior.lambda);
  std::vector<double> heights;
  detail::collect_heights(root, heights);
  return detail::coalescent_events(std::move(heights), static_cast<std::size_t>(root.leaf_count),
                                   prior.lambda0, false);
}

/// Prior mass of a forest over R taxa, including the pair-choice factors of
/// the merges that built it, so that for any merge s -> s' the ratio of
/// forest priors equals the merge proposal density.
inline double forest_log_prior(const std::vector<const Node*>& roots, std::size_t total_taxa,
                               const PriorConfig& prior) {
  const std::size_t n = roots.size();
  if (!prior.clock) {
    double s = 0.0;
    for (const Node* r : roots) s += detail::edge_prior(*r, prior.lambda);
    for (std::size_t j = n + 1; j <= total_taxa; ++j) s -= std::log(choose2(j));
    return s;
  }
  std::vector<double> heights;
  for (const Node* r : roots) detail::collect_heights(*r, heights);
  return detail::coalescent_events(std::move(heights), total_taxa, prior.lambda0, true);
}

}  // namespace phylosmc
