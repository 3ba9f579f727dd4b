#pragma once

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "likelihood.hpp"
#include "tree.hpp"

namespace phylosmc {

struct WeightedTree {
  NewickNode tree;
  double weight = 1.0;
};

using SplitMap = std::unordered_map<TaxonSet, double>;

namespace detail {

inline TaxonSet label_set(const NewickNode& n, const TaxonTable& taxa) {
  TaxonSet s;
  if (n.is_leaf()) {
    const auto idx = taxa.find(n.label);
    if (!idx) throw Error(ErrorKind::kTaxonMismatch, "unknown taxon '" + n.label + "'");
    if (s.test(*idx)) throw Error(ErrorKind::kTaxonMismatch, "taxon repeated");
    s.set(*idx);
    return s;
  }
  for (const auto& c : n.children) {
    const TaxonSet cs = label_set(c, taxa);
    if ((cs & s).any()) throw Error(ErrorKind::kTaxonMismatch, "taxon repeated");
    s |= cs;
  }
  return s;
}

inline double collect_rooted(const NewickNode& n, const TaxonTable& taxa,
                             std::vector<std::tuple<TaxonSet, double, double>>& out,
                             TaxonSet& set) {
  // returns height; appends (clade, edge length above, height)
  if (n.is_leaf()) {
    set = label_set(n, taxa);
    return 0.0;
  }
  double h = 0.0;
  set.reset();
  for (const auto& c : n.children) {
    TaxonSet cs;
    const double ch = collect_rooted(c, taxa, out, cs);
    const double len = c.has_length ? c.length : 0.0;
    out.emplace_back(cs, len, ch);
    h = std::max(h, ch + len);
    set |= cs;
  }
  return h;
}

inline std::size_t first_taxon(const TaxonSet& all) {
  for (std::size_t i = 0; i < kMaxTaxa; ++i) {
    if (all.test(i)) return i;
  }
  return 0;
}

}  // namespace detail

/// Rooted clades with the length of the edge above each (root excluded).
inline SplitMap rooted_clades(const NewickNode& root, const TaxonTable& taxa) {
  std::vector<std::tuple<TaxonSet, double, double>> items;
  TaxonSet all;
  detail::collect_rooted(root, taxa, items, all);
  SplitMap out;
  for (const auto& [set, len, h] : items) out[set] += len;
  return out;
}

/// Unrooted bipartitions, each keyed by the side not containing the first
/// taxon, with the total length of the edges inducing it.
inline SplitMap unrooted_splits(const NewickNode& root, const TaxonTable& taxa) {
  std::vector<std::tuple<TaxonSet, double, double>> items;
  TaxonSet all;
  detail::collect_rooted(root, taxa, items, all);
  const std::size_t t0 = detail::first_taxon(all);
  SplitMap out;
  for (const auto& [set, len, h] : items) {
    const TaxonSet side = set.test(t0) ? (all & ~set) : set;
    if (side.none()) continue;
    out[side] += len;
  }
  return out;
}

inline TaxonSet taxon_set(const NewickNode& root, const TaxonTable& taxa) {
  return detail::label_set(root, taxa);
}

inline bool is_nontrivial_split(const TaxonSet& side, std::size_t n) {
  const std::size_t c = side.count();
  return c >= 2 && n - c >= 2;
}

/// Sum of |b1(e) - b2(e)| over the union of bipartitions.
inline double rf_branch_score(const NewickNode& a, const NewickNode& b, const TaxonTable& taxa) {
  if (taxon_set(a, taxa) != taxon_set(b, taxa)) {
    throw Error(ErrorKind::kTaxonMismatch, "trees have different taxa");
  }
  const SplitMap sa = unrooted_splits(a, taxa);
  const SplitMap sb = unrooted_splits(b, taxa);
  double d = 0.0;
  for (const auto& [s, l] : sa) {
    auto it = sb.find(s);
    d += std::fabs(l - (it == sb.end() ? 0.0 : it->second));
  }
  for (const auto& [s, l] : sb) {
    if (!sa.count(s)) d += std::fabs(l);
  }
  return d;
}

/// Number of non-trivial bipartitions present in exactly one tree.
inline std::size_t partition_metric(const NewickNode& a, const NewickNode& b,
                                    const TaxonTable& taxa) {
  const TaxonSet all = taxon_set(a, taxa);
  if (all != taxon_set(b, taxa)) throw Error(ErrorKind::kTaxonMismatch, "trees have different taxa");
  const std::size_t n = all.count();
  const SplitMap sa = unrooted_splits(a, taxa);
  const SplitMap sb = unrooted_splits(b, taxa);
  std::size_t d = 0;
  for (const auto& [s, l] : sa) {
    if (is_nontrivial_split(s, n) && !sb.count(s)) ++d;
  }
  for (const auto& [s, l] : sb) {
    if (is_nontrivial_split(s, n) && !sa.count(s)) ++d;
  }
  return d;
}

inline bool compatible(const TaxonSet& a, const TaxonSet& b) {
  const TaxonSet i = a & b;
  return i.none() || i == a || i == b;
}

struct CladeStats {
  double support = 0.0;
  double length = 0.0;  // support-weighted mean edge length
  double height = 0.0;  // support-weighted mean node height
};

/// Weighted clade frequencies of a tree sample: rooted clades for clock
/// trees, unrooted bipartitions otherwise.
class CladeTable {
 public:
  CladeTable(const TaxonTable& taxa, bool clock) : taxa_(&taxa), clock_(clock) {}

  void add(const NewickNode& tree, double weight) {
    if (!(weight >= 0.0)) throw Error(ErrorKind::kDomain, "negative sample weight");
    const TaxonSet s = taxon_set(tree, *taxa_);
    if (total_ == 0.0 && samples_ == 0) {
      all_ = s;
    } else if (s != all_) {
      throw Error(ErrorKind::kTaxonMismatch, "samples have different taxa");
    }
    ++samples_;
    total_ += weight;
    if (clock_) {
      std::vector<std::tuple<TaxonSet, double, double>> items;
      TaxonSet all;
      const double h = detail::collect_rooted(tree, *taxa_, items, all);
      items.emplace_back(all, 0.0, h);
      for (const auto& [set, len, ht] : items) {
        auto& acc = acc_[set];
        acc.support += weight;
        acc.length += weight * len;
        acc.height += weight * ht;
      }
    } else {
      for (const auto& [set, len] : unrooted_splits(tree, *taxa_)) {
        auto& acc = acc_[set];
        acc.support += weight;
        acc.length += weight * len;
      }
    }
  }

  double total_weight() const { return total_; }
  const TaxonSet& taxa() const { return all_; }
  bool clock() const { return clock_; }

  /// Normalized statistics for every clade seen.
  std::unordered_map<TaxonSet, CladeStats> stats() const {
    std::unordered_map<TaxonSet, CladeStats> out;
    for (const auto& [set, acc] : acc_) {
      CladeStats s;
      s.support = acc.support / total_;
      s.length = acc.support > 0 ? acc.length / acc.support : 0.0;
      s.height = acc.support > 0 ? acc.height / acc.support : 0.0;
      out.emplace(set, s);
    }
    return out;
  }

 private:
  const TaxonTable* taxa_;
  bool clock_;
  TaxonSet all_;
  std::size_t samples_ = 0;
  double total_ = 0.0;
  std::unordered_map<TaxonSet, CladeStats> acc_;
};

namespace detail {

struct CladeNode {
  TaxonSet set;
  double length = 0.0;
  double height = 0.0;
  std::vector<std::size_t> children;
};

inline NewickNode emit(const std::vector<CladeNode>& nodes, std::size_t i, const TaxonTable& taxa,
                       bool with_length) {
  NewickNode out;
  const auto& n = nodes[i];
  if (n.children.empty()) {
    out.label = taxa.name(first_taxon(n.set));
  } else {
    for (std::size_t c : n.children) out.children.push_back(emit(nodes, c, taxa, true));
  }
  if (with_length) {
    out.length = n.length;
    out.has_length = true;
  }
  return out;
}

}  // namespace detail

/// Majority-rule consensus: clades with support strictly above 0.5, each
/// with its mean length (non-clock) or mean height (clock).
inline NewickNode consensus_tree(const CladeTable& table, const TaxonTable& taxa) {
  if (table.total_weight() <= 0.0) throw Error(ErrorKind::kEmptyInput, "empty tree sample");
  const auto stats = table.stats();
  const TaxonSet all = table.taxa();
  const std::size_t n = all.count();
  const std::size_t t0 = detail::first_taxon(all);

  std::vector<detail::CladeNode> nodes;
  for (const auto& [set, s] : stats) {
    const bool leaf = set.count() == 1;
    const bool keep = leaf || set == all || s.support > 0.5;
    if (keep) nodes.push_back({set, s.length, s.height, {}});
  }
  if (!table.clock()) {
    // Unrooted: clades are sides away from taxon t0; the complement of t0's
    // pendant side becomes the root, t0 attaches to it directly.
    TaxonSet rest = all;
    rest.reset(t0);
    bool have_t0 = false;
    for (auto& c : nodes) {
      if (c.set == rest && n > 1) {
        c.set.reset();
        c.set.set(t0);
        have_t0 = true;
      }
    }
    if (!have_t0) {
      TaxonSet s;
      s.set(t0);
      nodes.push_back({s, 0.0, 0.0, {}});
    }
    nodes.push_back({all, 0.0, 0.0, {}});
  }
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) {
    if (a.set.count() != b.set.count()) return a.set.count() > b.set.count();
    return a.set.to_string() < b.set.to_string();
  });
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (!compatible(nodes[i].set, nodes[j].set)) {
        throw Error(ErrorKind::kUsage, "majority clades are not compatible");
      }
    }
  }
  // Parent = smallest strictly larger containing clade (last such in sorted order).
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    std::size_t parent = 0;
    for (std::size_t j = 0; j < i; ++j) {
      if (nodes[j].set.count() > nodes[i].set.count() &&
          (nodes[i].set & ~nodes[j].set).none()) {
        parent = j;
      }
    }
    nodes[parent].children.push_back(i);
    if (table.clock()) {
      nodes[i].length = std::max(0.0, nodes[parent].height - nodes[i].height);
    }
  }
  NewickNode root = detail::emit(nodes, 0, taxa, false);
  canonicalize(root);
  return root;
}

inline NewickNode consensus_tree(const std::vector<WeightedTree>& sample, const TaxonTable& taxa,
                                 bool clock) {
  if (sample.empty()) throw Error(ErrorKind::kEmptyInput, "empty tree sample");
  CladeTable table(taxa, clock);
  for (const auto& w : sample) table.add(w.tree, w.weight);
  return consensus_tree(table, taxa);
}

/// Log-likelihood of a (possibly multifurcating) tree, resolved with
/// zero-length edges.
inline double consensus_log_likelihood(const NewickNode& tree, const LikelihoodEngine& engine) {
  const NodePtr bin = resolve_to_binary(tree, engine.taxa());
  return engine.tree_log_likelihood(*bin);
}

struct EssSummary {
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double fraction_one = 0.0;
  std::size_t count = 0;
};

/// ESS of exactly one, allowing for the rounding of 1 / sum W^2.
inline bool ess_is_one(double e) { return std::fabs(e - 1.0) <= 1e-9; }

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline EssSummary ess_table(const std::vector<double>& ess_values) {
  EssSummary s;
  s.count = ess_values.size();
  if (ess_values.empty()) return s;
  double sum = 0.0;
  std::size_t ones = 0;
  for (double e : ess_values) {
    sum += e;
    ones += ess_is_one(e) ? 1 : 0;
  }
  s.mean = sum / static_cast<double>(ess_values.size());
  s.q025 = quantile(ess_values, 0.025);
  s.q975 = quantile(ess_values, 0.975);
  s.fraction_one = static_cast<double>(ones) / static_cast<double>(ess_values.size());
  return s;
}

}  // namespace phylosmc
