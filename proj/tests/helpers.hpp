#pragma once

#include <string>
#include <vector>

#include "phylosmc/phylosmc.hpp"

namespace testing_util {

using namespace phylosmc;

inline std::vector<std::string> letters(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('A' + i)));
  return out;
}

/// Uniform random sequences, optionally with missing characters.
inline Alignment random_alignment(std::size_t taxa, std::size_t sites, Rng& rng,
                                  double missing = 0.0, std::vector<std::string> names = {}) {
  if (names.empty()) names = letters(taxa);
  std::vector<std::vector<State>> rows(taxa, std::vector<State>(sites));
  for (auto& row : rows) {
    for (auto& s : row) s = rng.uniform() < missing ? kMissing : static_cast<State>(rng.below(4));
  }
  return Alignment::from_encoded(std::move(names), std::move(rows));
}

/// Alignment simulated on a coalescent tree, so data carry tree signal.
inline Alignment simulated_alignment(std::size_t taxa, std::size_t sites, std::uint64_t seed,
                                     double kappa = 2.0, bool clock = true) {
  const TaxonTable table(default_taxon_names(taxa));
  Rng rng(seed);
  const NodePtr tree = clock ? simulate_clock_tree(table, 10.0, rng)
                             : simulate_nonclock_tree(table, 10.0, rng);
  return simulate_alignment(*tree, table, kappa, sites, rng);
}

/// A rank-r state reached by r-1 random base merges, recording the last pair.
inline AugmentedState random_state(const LikelihoodEngine& engine, const PriorConfig& prior,
                                   std::size_t rank, Rng& rng) {
  AugmentedState s = initial_state(engine);
  for (std::size_t r = 2; r <= rank; ++r) s = base_merge_propose(s.base, engine, prior, rng).next;
  return s;
}

/// Random binary tree over `taxa` with Exp(rate) edges, as a Newick node.
inline NewickNode random_newick(const TaxonTable& taxa, Rng& rng, double rate = 5.0) {
  const NodePtr t = simulate_nonclock_tree(taxa, rate, rng);
  NewickNode n = to_newick_node(*t, taxa);
  canonicalize(n);
  return n;
}

}  // namespace testing_util
