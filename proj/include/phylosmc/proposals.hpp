#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "error.hpp"
#include "forest.hpp"
#include "likelihood.hpp"
#include "random.hpp"

namespace phylosmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class ProposalKind { kVanilla, kRdoup };

/// Pair index q in lexicographic order of (i, j), i < j < n.
inline std::pair<std::size_t, std::size_t> decode_pair(std::size_t q, std::size_t n) {
  std::size_t i = 0;
  while (q >= n - 1 - i) {
    q -= n - 1 - i;
    ++i;
  }
  return {i, i + 1 + q};
}

inline std::size_t encode_pair(std::size_t i, std::size_t j, std::size_t n) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

/// Log density of a merge move applied to `s` under the base proposal.
inline double merge_logdensity(const Forest& s, const MergeMove& m, const PriorConfig& prior) {
  const std::size_t n = s.size();
  if (n < 2) return kNegInf;
  const double pairs = choose2(n);
  double lp = -std::log(pairs);
  if (prior.clock) {
    lp += exp_log_density(prior.lambda0 * pairs, m.delta_h);
  } else {
    lp += exp_log_density(prior.lambda, m.b1);
    if (n > 2) lp += exp_log_density(prior.lambda, m.b2);
  }
  return lp;
}

/// Draws a pair uniformly, then the branch data from the prior.
inline MergeMove draw_merge(const Forest& s, const PriorConfig& prior, Rng& rng) {
  const std::size_t n = s.size();
  if (n < 2) throw Error(ErrorKind::kCannotMerge, "forest has fewer than two trees");
  const double pairs = choose2(n);
  MergeMove m;
  std::tie(m.i, m.j) = decode_pair(rng.below(static_cast<std::uint64_t>(n * (n - 1) / 2)), n);
  if (prior.clock) {
    m.delta_h = rng.exponential(prior.lambda0 * pairs);
  } else {
    m.b1 = rng.exponential(prior.lambda);
    if (n > 2) m.b2 = rng.exponential(prior.lambda);
  }
  return m;
}

struct BaseProposal {
  MergeMove move;
  AugmentedState next;
  Subtree created;
  double log_density = 0.0;
};

/// The base merge proposal m+; the result records the merged pair.
inline BaseProposal base_merge_propose(const Forest& s, const LikelihoodEngine& engine,
                                       const PriorConfig& prior, Rng& rng) {
  BaseProposal p;
  p.move = draw_merge(s, prior, rng);
  p.next = merge_augmented(s, p.move, engine, prior.clock, &p.created);
  p.log_density = merge_logdensity(s, p.move, prior);
  return p;
}

struct MergeMatch {
  MergeMove move;
  std::size_t created_index = 0;  // index of the new tree in the target
};

namespace detail {

inline bool close(double a, double b) {
  return std::fabs(a - b) <= 1e-12 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline std::optional<std::size_t> find_tree(const Forest& f, const Node& n) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.trees[i].node->taxa == n.taxa) {
      if (same_tree(f.trees[i].node.get(), &n)) return i;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Recovers the merge that turns `s` into `target`, if one exists.
inline std::optional<MergeMatch> find_merge(const Forest& s, const Forest& target, bool clock) {
  if (s.size() < 2 || target.size() + 1 != s.size()) return std::nullopt;
  std::optional<std::size_t> fresh;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (!detail::find_tree(s, *target.trees[k].node)) {
      if (fresh) return std::nullopt;
      fresh = k;
    }
  }
  if (!fresh) return std::nullopt;
  const Node& t = *target.trees[*fresh].node;
  if (t.is_leaf()) return std::nullopt;
  const auto i = detail::find_tree(s, *t.left);
  const auto j = detail::find_tree(s, *t.right);
  if (!i || !j) return std::nullopt;
  MergeMatch match;
  match.created_index = *fresh;
  match.move.i = *i;
  match.move.j = *j;
  const std::size_t n = s.size();
  if (clock) {
    if (t.single_edge) return std::nullopt;
    const double dh = t.height - s.height();
    if (!(dh >= 0.0)) return std::nullopt;
    if (!detail::close(t.left_length, t.height - t.left->height) ||
        !detail::close(t.right_length, t.height - t.right->height)) {
      return std::nullopt;
    }
    match.move.delta_h = dh;
  } else {
    if (t.single_edge != (n == 2)) return std::nullopt;
    if (n == 2 && t.right_length != 0.0) return std::nullopt;
    match.move.b1 = t.left_length;
    match.move.b2 = n > 2 ? t.right_length : 0.0;
  }
  return match;
}

/// Evaluation form of m+: density of reaching `target` from `s` in one merge.
inline double base_merge_logdensity_of(const Forest& s, const Forest& target,
                                       const PriorConfig& prior) {
  const auto match = find_merge(s, target, prior.clock);
  if (!match) return kNegInf;
  return merge_logdensity(s, match->move, prior);
}

inline double base_merge_logdensity_of(const Forest& s, const AugmentedState& target,
                                       const PriorConfig& prior) {
  return base_merge_logdensity_of(s, target.base, prior);
}

/// Backward base kernel m-: density of un-merging `child` into `parent`.
inline double base_backward_logdensity(const Forest& child, const Forest& parent,
                                       const PriorConfig& prior) {
  if (!find_merge(parent, child, prior.clock)) return kNegInf;
  if (prior.clock) return 0.0;
  return -std::log(static_cast<double>(count_nontrivial(child)));
}

// ---------------------------------------------------------------------------
// RDouP

struct RdoupProposal {
  Forest reverted;
  MergeMove first;
  Subtree first_created;
  Forest sigma;
  MergeMove second;
  Subtree second_created;
  AugmentedState next;
  double log_forward = 0.0;
};

/// Revert the last merge, then two base merges, the second one recorded.
inline RdoupProposal rdoup_propose(const AugmentedState& s, const LikelihoodEngine& engine,
                                   const PriorConfig& prior, Rng& rng) {
  if (!s.pair) throw Error(ErrorKind::kNoLastMerge, "state has no merged pair");
  RdoupProposal p;
  p.reverted = reverted_state(s);
  p.first = draw_merge(p.reverted, prior, rng);
  p.sigma = merge(p.reverted, p.first, engine, prior.clock, &p.first_created);
  p.second = draw_merge(p.sigma, prior, rng);
  p.next = merge_augmented(p.sigma, p.second, engine, prior.clock, &p.second_created);
  p.log_forward =
      merge_logdensity(p.reverted, p.first, prior) + merge_logdensity(p.sigma, p.second, prior);
  return p;
}

/// Forward kernel density. The intermediate state is the revert of `next`.
inline double rdoup_forward_logdensity(const AugmentedState& prev, const AugmentedState& next,
                                       const PriorConfig& prior) {
  if (!prev.pair || !next.pair) return kNegInf;
  const Forest rho = reverted_state(prev);
  const Forest sigma = reverted_state(next);
  const double a = base_merge_logdensity_of(rho, sigma, prior);
  if (a == kNegInf) return kNegInf;
  return a + base_merge_logdensity_of(sigma, next.base, prior);
}

/// Backward kernel density: the new state's revert (deterministic), then
/// m- from that intermediate to the old revert, then the recorded merge of
/// the old state.
inline double rdoup_backward_logdensity(const AugmentedState& next, const AugmentedState& prev,
                                        const PriorConfig& prior) {
  if (!prev.pair || !next.pair) return kNegInf;
  const Forest sigma = reverted_state(next);
  const Forest rho = reverted_state(prev);
  const double a = base_backward_logdensity(sigma, rho, prior);
  if (a == kNegInf) return kNegInf;
  return a + base_merge_logdensity_of(rho, prev.base, prior);
}

// ---------------------------------------------------------------------------
// Incremental weights

/// Log likelihood ratio of a merge: created tree against its two children.
inline double merge_gain(const Subtree& created, const Subtree& a, const Subtree& b) {
  return created.log_lik - a.log_lik - b.log_lik;
}

/// Vanilla weight from the target and kernel densities directly.
inline double csmc_incremental_logweight(const Forest& prev, const Forest& next,
                                         const PriorConfig& prior, std::size_t total_taxa) {
  const double fwd = base_merge_logdensity_of(prev, next, prior);
  if (fwd == kNegInf) throw Error(ErrorKind::kUnsupportedMove, "forward density is zero");
  const double bwd = base_backward_logdensity(next, prev, prior);
  return gamma_log(next, prior, total_taxa) - gamma_log(prev, prior, total_taxa) + bwd - fwd;
}

/// Vanilla weight in likelihood-ratio form.
inline double csmc_simplified_logweight(const Subtree& created, const Subtree& a,
                                        const Subtree& b, const Forest& next,
                                        const PriorConfig& prior) {
  double w = merge_gain(created, a, b);
  if (!prior.clock) w -= std::log(static_cast<double>(count_nontrivial(next)));
  return w;
}

inline double csmc_simplified_logweight(const BaseProposal& p, const Forest& prev,
                                        const PriorConfig& prior) {
  return csmc_simplified_logweight(p.created, prev.trees[std::min(p.move.i, p.move.j)],
                                   prev.trees[std::max(p.move.i, p.move.j)], p.next.base, prior);
}

/// RDouP weight from the target and kernel densities directly.
inline double rdoup_incremental_logweight(const AugmentedState& prev, const AugmentedState& next,
                                          const PriorConfig& prior, std::size_t total_taxa) {
  if (!prev.pair) return csmc_incremental_logweight(prev.base, next.base, prior, total_taxa);
  const double fwd = rdoup_forward_logdensity(prev, next, prior);
  if (fwd == kNegInf) throw Error(ErrorKind::kUnsupportedMove, "forward density is zero");
  const double bwd = rdoup_backward_logdensity(next, prev, prior);
  return gamma_log(next, prior, total_taxa) - gamma_log(prev, prior, total_taxa) + bwd - fwd;
}

/// Likelihood gain of the merge recorded in an augmented state.
inline double recorded_merge_gain(const AugmentedState& s) {
  const Subtree& parent = s.base.trees[pair_parent_index(s)];
  return merge_gain(parent, (*s.pair)[0], (*s.pair)[1]);
}

/// RDouP weight in likelihood-ratio form.
inline double rdoup_simplified_logweight(const AugmentedState& prev, const RdoupProposal& p,
                                         const PriorConfig& prior) {
  const auto& r = p.reverted.trees;
  const auto& g = p.sigma.trees;
  const auto [i1, j1] = std::minmax(p.first.i, p.first.j);
  const auto [i2, j2] = std::minmax(p.second.i, p.second.j);
  double w = merge_gain(p.first_created, r[i1], r[j1]) +
             merge_gain(p.second_created, g[i2], g[j2]) - recorded_merge_gain(prev);
  if (!prior.clock) w -= std::log(static_cast<double>(count_nontrivial(p.sigma)));
  return w;
}

/// Likelihood-ratio form of the vanilla weight for a given pair of states;
/// -inf when `next` is not one merge away from `prev`.
inline double csmc_logweight_between(const Forest& prev, const Forest& next,
                                     const PriorConfig& prior) {
  const auto m = find_merge(prev, next, prior.clock);
  if (!m) return kNegInf;
  return csmc_simplified_logweight(next.trees[m->created_index], prev.trees[m->move.i],
                                   prev.trees[m->move.j], next, prior);
}

/// Likelihood-ratio form of the RDouP weight for a given pair of states;
/// -inf when the forward kernel cannot produce `next` from `prev`.
inline double rdoup_logweight_between(const AugmentedState& prev, const AugmentedState& next,
                                      const PriorConfig& prior) {
  if (!prev.pair) return csmc_logweight_between(prev.base, next.base, prior);
  if (!next.pair) return kNegInf;
  const Forest rho = reverted_state(prev);
  const Forest sigma = reverted_state(next);
  const auto m1 = find_merge(rho, sigma, prior.clock);
  if (!m1) return kNegInf;
  const auto m2 = find_merge(sigma, next.base, prior.clock);
  if (!m2) return kNegInf;
  double w = merge_gain(sigma.trees[m1->created_index], rho.trees[m1->move.i],
                        rho.trees[m1->move.j]) +
             merge_gain(next.base.trees[m2->created_index], sigma.trees[m2->move.i],
                        sigma.trees[m2->move.j]) -
             recorded_merge_gain(prev);
  if (!prior.clock) w -= std::log(static_cast<double>(count_nontrivial(sigma)));
  return w;
}

}  // namespace phylosmc
