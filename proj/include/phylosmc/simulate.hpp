#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "alignment.hpp"
#include "error.hpp"
#include "k2p.hpp"
#include "likelihood.hpp"
#include "random.hpp"
#include "tree.hpp"

namespace phylosmc {

/// Names t01, t02, ... padded so that lexicographic and numeric order agree.
inline std::vector<std::string> default_taxon_names(std::size_t n) {
  const std::size_t width = std::to_string(n).size();
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= n; ++i) {
    std::string digits = std::to_string(i);
    names.push_back("t" + std::string(width - digits.size(), '0') + digits);
  }
  return names;
}

namespace detail {

inline std::vector<NodePtr> leaves_for(const TaxonTable& taxa) {
  std::vector<NodePtr> out;
  for (std::size_t i = 0; i < taxa.size(); ++i) out.push_back(make_leaf(static_cast<int>(i), taxa.rank(i)));
  return out;
}

inline std::pair<std::size_t, std::size_t> random_pair(std::size_t k, Rng& rng) {
  const std::size_t i = rng.below(k);
  std::size_t j = rng.below(k - 1);
  if (j >= i) ++j;
  return {std::min(i, j), std::max(i, j)};
}

}  // namespace detail

/// Coalescent clock tree: with k lineages wait Exp(lambda0 C(k,2)), then
/// merge a uniformly chosen pair.
inline NodePtr simulate_clock_tree(const TaxonTable& taxa, double lambda0, Rng& rng) {
  if (taxa.size() < 2) throw Error(ErrorKind::kDomain, "need at least two taxa");
  if (!(lambda0 > 0.0)) throw Error(ErrorKind::kDomain, "lambda0 must be positive");
  auto lineages = detail::leaves_for(taxa);
  double h = 0.0;
  while (lineages.size() > 1) {
    const std::size_t k = lineages.size();
    h += rng.exponential(lambda0 * choose2(k));
    const auto [i, j] = detail::random_pair(k, rng);
    NodePtr a = lineages[i];
    NodePtr b = lineages[j];
    lineages.erase(lineages.begin() + static_cast<long>(j));
    lineages.erase(lineages.begin() + static_cast<long>(i));
    lineages.push_back(make_join(a, b, h - a->height, h - b->height, h));
  }
  return lineages.front();
}

/// Uniform random topology by sequential pair merging with i.i.d. Exp(lambda)
/// edges; the last merge is a single edge as in the non-clock forest model.
inline NodePtr simulate_nonclock_tree(const TaxonTable& taxa, double lambda, Rng& rng) {
  if (taxa.size() < 2) throw Error(ErrorKind::kDomain, "need at least two taxa");
  if (!(lambda > 0.0)) throw Error(ErrorKind::kDomain, "lambda must be positive");
  auto lineages = detail::leaves_for(taxa);
  while (lineages.size() > 1) {
    const std::size_t k = lineages.size();
    const auto [i, j] = detail::random_pair(k, rng);
    NodePtr a = lineages[i];
    NodePtr b = lineages[j];
    if (b->key < a->key) std::swap(a, b);
    lineages.erase(lineages.begin() + static_cast<long>(j));
    lineages.erase(lineages.begin() + static_cast<long>(i));
    if (k == 2) {
      const double b1 = rng.exponential(lambda);
      lineages.push_back(make_join(a, b, b1, 0.0, std::max(a->height + b1, b->height), true));
    } else {
      const double b1 = rng.exponential(lambda);
      const double b2 = rng.exponential(lambda);
      lineages.push_back(
          make_join(a, b, b1, b2, std::max(a->height + b1, b->height + b2)));
    }
  }
  return lineages.front();
}

namespace detail {

inline std::size_t draw_state(const Matrix4& p, std::size_t from, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t to = 0; to < 3; ++to) {
    cum += p[4 * from + to];
    if (u < cum) return to;
  }
  return 3;
}

struct EdgeTable {
  std::vector<const Node*> nodes;  // preorder
  std::vector<int> parent;
  std::vector<Matrix4> p;          // transition matrix of the edge above
};

inline void build_edges(const Node& n, int parent, double length, const K2PModel& model,
                        EdgeTable& t) {
  const int me = static_cast<int>(t.nodes.size());
  t.nodes.push_back(&n);
  t.parent.push_back(parent);
  t.p.push_back(transition_probabilities(model, length));
  if (!n.is_leaf()) {
    build_edges(*n.left, me, n.left_length, model, t);
    build_edges(*n.right, me, n.right_length, model, t);
  }
}

}  // namespace detail

/// Evolves L i.i.d. sites down the tree from a uniform root state.
inline Alignment simulate_alignment(const Node& tree, const TaxonTable& taxa, double kappa,
                                    std::size_t sites, Rng& rng) {
  if (sites == 0) throw Error(ErrorKind::kDomain, "need at least one site");
  const K2PModel model(kappa);
  detail::EdgeTable edges;
  detail::build_edges(tree, -1, 0.0, model, edges);
  std::vector<std::vector<State>> rows(taxa.size(), std::vector<State>(sites, kMissing));
  std::vector<std::size_t> state(edges.nodes.size());
  for (std::size_t s = 0; s < sites; ++s) {
    for (std::size_t e = 0; e < edges.nodes.size(); ++e) {
      if (edges.parent[e] < 0) {
        state[e] = rng.below(4);
      } else {
        state[e] = detail::draw_state(edges.p[e], state[static_cast<std::size_t>(edges.parent[e])], rng);
      }
      const Node* n = edges.nodes[e];
      if (n->is_leaf()) rows[static_cast<std::size_t>(n->taxon)][s] = static_cast<State>(state[e]);
    }
  }
  std::vector<std::string> names;
  std::vector<std::vector<State>> kept;
  for (std::size_t t = 0; t < taxa.size(); ++t) {
    if (tree.taxa.test(t)) {
      names.push_back(taxa.name(t));
      kept.push_back(std::move(rows[t]));
    }
  }
  return Alignment::from_encoded(std::move(names), std::move(kept));
}

}  // namespace phylosmc
