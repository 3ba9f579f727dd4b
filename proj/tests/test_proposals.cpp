#include <gtest/gtest.h>

#include <map>
#include <set>

#include "helpers.hpp"

using namespace phylosmc;
using namespace testing_util;

namespace {

struct Abcd {
  Rng rng{61};
  Alignment aln = random_alignment(4, 15, rng);
  LikelihoodEngine engine{aln, K2PModel(2.0)};
  TaxonTable taxa{aln.names()};

  std::size_t idx(const Forest& f, std::initializer_list<std::size_t> members) const {
    TaxonSet s;
    for (auto m : members) s.set(m);
    return *f.find(s);
  }

  std::string text(const AugmentedState& s) const {
    std::string out;
    for (const auto& t : s.base.trees) out += to_newick(*t.node, taxa);
    if (s.pair) {
      out += " | " + to_newick(*(*s.pair)[0].node, taxa) + to_newick(*(*s.pair)[1].node, taxa);
    }
    return out;
  }
};

constexpr double kLen = 0.1;

/// Every augmented state one fixed-length merge above `s`.
std::vector<AugmentedState> successors(const AugmentedState& s, const LikelihoodEngine& engine,
                                       bool clock) {
  std::vector<AugmentedState> out;
  const std::size_t n = s.base.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out.push_back(merge_augmented(s.base, {i, j, kLen, kLen, kLen}, engine, clock));
    }
  }
  return out;
}

std::size_t count_paths(const AugmentedState& from, const Forest& target,
                        const LikelihoodEngine& engine) {
  if (from.base.size() == target.size()) return same_forest(from.base, target) ? 1 : 0;
  std::size_t total = 0;
  for (const auto& next : successors(from, engine, false)) total += count_paths(next, target, engine);
  return total;
}

double integrate_exponential_mass(const Forest& f, const PriorConfig& prior) {
  // midpoint rule over pair choices and branch data
  const std::size_t n = f.size();
  const std::size_t pairs = n * (n - 1) / 2;
  double total = 0.0;
  for (std::size_t q = 0; q < pairs; ++q) {
    MergeMove m;
    std::tie(m.i, m.j) = decode_pair(q, n);
    if (prior.clock) {
      const double rate = prior.lambda0 * choose2(n);
      const double upper = 20.0 / rate;
      const int points = 10000;
      const double h = upper / points;
      for (int k = 0; k < points; ++k) {
        m.delta_h = (k + 0.5) * h;
        total += std::exp(merge_logdensity(f, m, prior)) * h;
      }
    } else if (n == 2) {
      const double upper = 20.0 / prior.lambda;
      const int points = 10000;
      const double h = upper / points;
      for (int k = 0; k < points; ++k) {
        m.b1 = (k + 0.5) * h;
        total += std::exp(merge_logdensity(f, m, prior)) * h;
      }
    } else {
      const double upper = 20.0 / prior.lambda;
      const int points = 400;  // 400 x 400 grid
      const double h = upper / points;
      for (int a = 0; a < points; ++a) {
        for (int b = 0; b < points; ++b) {
          m.b1 = (a + 0.5) * h;
          m.b2 = (b + 0.5) * h;
          total += std::exp(merge_logdensity(f, m, prior)) * h * h;
        }
      }
    }
  }
  return total;
}

}  // namespace

TEST(Proposals, PairCoding) {
  for (std::size_t n = 2; n < 9; ++n) {
    std::size_t q = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++q) {
        EXPECT_EQ(decode_pair(q, n), std::make_pair(i, j));
        EXPECT_EQ(encode_pair(i, j, n), q);
      }
    }
  }
}

TEST(Proposals, PairProbabilityFourTrees) {
  Abcd f;
  PriorConfig prior;
  prior.clock = false;
  prior.lambda = 1.0;
  const Forest s = initial_forest(f.engine);
  const double lp = merge_logdensity(s, {0, 1, 0, 0, 0}, prior);  // zero lengths
  EXPECT_NEAR(lp, -std::log(6.0) + 2 * std::log(1.0), 1e-15);
}

TEST(Proposals, ClockDensityExample) {
  Abcd f;
  PriorConfig prior;
  Forest s = initial_forest(f.engine);
  s = merge(s, {0, 1, 0.05, 0, 0}, f.engine, true);
  ASSERT_EQ(s.size(), 3u);
  MergeMove m{0, 1, 0.01, 0, 0};
  EXPECT_NEAR(std::exp(merge_logdensity(s, m, prior)), 30.0 * std::exp(-0.3) / 3.0, 1e-12);
}

TEST(Proposals, NonClockFinalMergeDrawsOneLength) {
  Abcd f;
  PriorConfig prior;
  prior.clock = false;
  AugmentedState s = random_state(f.engine, prior, 3, f.rng);
  ASSERT_EQ(s.base.size(), 2u);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = base_merge_propose(s.base, f.engine, prior, f.rng);
    EXPECT_GT(p.move.b1, 0.0);
    EXPECT_EQ(p.move.b2, 0.0);
    EXPECT_NEAR(p.log_density, exp_log_density(prior.lambda, p.move.b1), 1e-15);
  }
}

TEST(Proposals, CannotMergeSingleTree) {
  Abcd f;
  PriorConfig prior;
  const AugmentedState s = random_state(f.engine, prior, 4, f.rng);
  try {
    base_merge_propose(s.base, f.engine, prior, f.rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCannotMerge);
  }
}

TEST(Proposals, EvaluationFormOfBaseDensity) {
  Abcd f;
  for (bool clock : {true, false}) {
    PriorConfig prior;
    prior.clock = clock;
    const AugmentedState s = random_state(f.engine, prior, 2, f.rng);
    const auto p = base_merge_propose(s.base, f.engine, prior, f.rng);
    EXPECT_NEAR(base_merge_logdensity_of(s.base, p.next, prior), p.log_density, 1e-12);
    EXPECT_EQ(base_merge_logdensity_of(s.base, p.next, prior),
              base_merge_logdensity_of(s.base, p.next.base, prior));
    // two merges away is unreachable
    EXPECT_EQ(base_merge_logdensity_of(initial_forest(f.engine), p.next.base, prior), kNegInf);
  }
}

TEST(Proposals, BackwardBaseKernel) {
  Abcd f;
  PriorConfig clock;
  PriorConfig nonclock;
  nonclock.clock = false;
  const Forest s0 = initial_forest(f.engine);
  const Forest ab = merge(s0, {0, 1, 0.1, 0.1, 0.1}, f.engine, false);
  const Forest abcd = merge(ab, {f.idx(ab, {2}), f.idx(ab, {3}), 0.1, 0.1, 0.1}, f.engine, false);
  EXPECT_NEAR(base_backward_logdensity(abcd, ab, nonclock), std::log(0.5), 1e-15);
  EXPECT_EQ(base_backward_logdensity(abcd, s0, nonclock), kNegInf);

  const Forest cab = merge(s0, {0, 1, 0.1, 0, 0}, f.engine, true);
  const Forest ccd = merge(cab, {f.idx(cab, {2}), f.idx(cab, {3}), 0.1, 0, 0}, f.engine, true);
  EXPECT_EQ(base_backward_logdensity(ccd, cab, clock), 0.0);
  EXPECT_EQ(base_backward_logdensity(cab, ccd, clock), kNegInf);
}

TEST(Proposals, RdoupRevertAndRemergeExample) {
  Abcd f;
  PriorConfig prior;
  prior.clock = false;
  const Forest s0 = initial_forest(f.engine);
  const AugmentedState prev = merge_augmented(s0, {0, 1, 0.1, 0.2, 0.3}, f.engine, false);
  EXPECT_EQ(f.text(prev), "(A:0.2,B:0.3);C;D; | A;B;");
  const Forest rho = reverted_state(prev);
  EXPECT_TRUE(same_forest(rho, s0));
  const MergeMove m1{1, 2, 0, 0.4, 0.5};
  const Forest sigma = merge(rho, m1, f.engine, false);  // (B,C)
  const MergeMove m2{f.idx(sigma, {0}), f.idx(sigma, {1, 2}), 0, 0.6, 0.7};
  const AugmentedState next = merge_augmented(sigma, m2, f.engine, false);
  EXPECT_EQ(f.text(next), "(A:0.6,(B:0.4,C:0.5):0.7);D; | A;(B:0.4,C:0.5);");
  EXPECT_EQ(next.base.rank(4), prev.base.rank(4) + 1);
  EXPECT_NEAR(rdoup_forward_logdensity(prev, next, prior),
              merge_logdensity(rho, m1, prior) + merge_logdensity(sigma, m2, prior), 1e-12);
  EXPECT_NEAR(rdoup_backward_logdensity(next, prev, prior),
              -std::log(1.0) + base_merge_logdensity_of(rho, prev.base, prior), 1e-12);
}

TEST(Proposals, RdoupProposeRecords) {
  Rng rng(62);
  for (bool clock : {true, false}) {
    PriorConfig prior;
    prior.clock = clock;
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t n = 3 + rng.below(6);
      const Alignment aln = random_alignment(n, 10, rng);
      const LikelihoodEngine engine(aln, K2PModel(2.0));
      const AugmentedState s = random_state(engine, prior, 2 + rng.below(n - 2), rng);
      const auto p = rdoup_propose(s, engine, prior, rng);
      EXPECT_EQ(p.next.base.rank(n), s.base.rank(n) + 1);
      EXPECT_TRUE(same_forest(reverted_state(p.next), p.sigma));
      EXPECT_NEAR(rdoup_forward_logdensity(s, p.next, prior), p.log_forward,
                  1e-12 * std::max(1.0, std::fabs(p.log_forward)));
    }
  }
}

TEST(Proposals, RdoupWithoutPairFails) {
  Abcd f;
  EXPECT_THROW(rdoup_propose(initial_state(f.engine), f.engine, PriorConfig{}, f.rng), Error);
}

TEST(Proposals, ClockBackwardIsRecordedMergeDensity) {
  Rng rng(63);
  PriorConfig prior;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 3 + rng.below(6);
    const Alignment aln = random_alignment(n, 10, rng);
    const LikelihoodEngine engine(aln, K2PModel(2.0));
    const AugmentedState s = random_state(engine, prior, 2 + rng.below(n - 2), rng);
    const auto p = rdoup_propose(s, engine, prior, rng);
    EXPECT_NEAR(rdoup_backward_logdensity(p.next, s, prior),
                base_merge_logdensity_of(reverted_state(s), s, prior), 1e-12);
  }
}

TEST(Proposals, ReplayedRevertLeavesFreshMergeGain) {
  Rng rng(64);
  PriorConfig prior;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 3 + rng.below(6);
    const Alignment aln = random_alignment(n, 20, rng);
    const LikelihoodEngine engine(aln, K2PModel(2.0));
    const AugmentedState s = random_state(engine, prior, 2 + rng.below(n - 2), rng);
    const Forest rho = reverted_state(s);
    const auto replay = find_merge(rho, s.base, true);
    ASSERT_TRUE(replay);
    const Forest sigma = merge(rho, replay->move, engine, true);
    ASSERT_TRUE(same_forest(sigma, s.base));
    const auto fresh = base_merge_propose(sigma, engine, prior, rng);
    const auto [i, j] = std::minmax(fresh.move.i, fresh.move.j);
    EXPECT_NEAR(rdoup_logweight_between(s, fresh.next, prior),
                merge_gain(fresh.created, sigma[i], sigma[j]), 1e-10);
  }
}

TEST(Proposals, RankOneFallsBackToVanilla) {
  Abcd f;
  for (bool clock : {true, false}) {
    PriorConfig prior;
    prior.clock = clock;
    const AugmentedState s = initial_state(f.engine);
    const auto p = base_merge_propose(s.base, f.engine, prior, f.rng);
    EXPECT_EQ(rdoup_incremental_logweight(s, p.next, prior, 4),
              csmc_incremental_logweight(s.base, p.next.base, prior, 4));
    EXPECT_NEAR(rdoup_logweight_between(s, p.next, prior), csmc_simplified_logweight(p, s.base, prior),
                1e-12);
  }
}

TEST(Proposals, UnsupportedMoveError) {
  Abcd f;
  PriorConfig prior;
  const AugmentedState s = random_state(f.engine, prior, 3, f.rng);
  try {
    csmc_incremental_logweight(initial_forest(f.engine), s.base, prior, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedMove);
  }
}

TEST(ProposalsProperty, VanillaOvercountingTwoOrders) {
  Abcd f;
  // (A,B),(C,D) with fixed edge lengths
  const Forest s0 = initial_forest(f.engine);
  const Forest ab = merge(s0, {0, 1, kLen, kLen, kLen}, f.engine, false);
  const Forest target = merge(ab, {f.idx(ab, {2}), f.idx(ab, {3}), kLen, kLen, kLen}, f.engine, false);
  EXPECT_EQ(count_paths(initial_state(f.engine), target, f.engine), 2u);
  // a caterpillar forest can be built in one order only
  const Forest abc = merge(ab, {f.idx(ab, {0, 1}), f.idx(ab, {2}), kLen, kLen, kLen}, f.engine, false);
  EXPECT_EQ(count_paths(initial_state(f.engine), abc, f.engine), 1u);
}

TEST(ProposalsProperty, RdoupOvercountingThreePredecessors) {
  Abcd f;
  PriorConfig prior;
  prior.clock = false;
  // all distinct rank-3 augmented states built with fixed edge lengths
  std::map<std::string, AugmentedState> rank3;
  for (const auto& s2 : successors(initial_state(f.engine), f.engine, false)) {
    for (const auto& s3 : successors(s2, f.engine, false)) rank3.emplace(f.text(s3), s3);
  }
  EXPECT_EQ(rank3.size(), 18u);  // 6 first merges, 3 second merges each, all distinct

  // target: (((A,B),C),D), last merged pair ((A,B),C) and D
  const Forest s0 = initial_forest(f.engine);
  const Forest ab = merge(s0, {0, 1, kLen, kLen, kLen}, f.engine, false);
  const Forest abc = merge(ab, {f.idx(ab, {0, 1}), f.idx(ab, {2}), kLen, kLen, kLen}, f.engine, false);
  const AugmentedState target = merge_augmented(abc, {0, 1, kLen, kLen, kLen}, f.engine, false);

  std::set<std::string> preds;
  for (const auto& [key, s] : rank3) {
    const double fwd = rdoup_forward_logdensity(s, target, prior);
    const double bwd = rdoup_backward_logdensity(target, s, prior);
    EXPECT_EQ(fwd == kNegInf, bwd == kNegInf) << key;
    if (fwd > kNegInf) {
      preds.insert(key);
      // every predecessor reverts to (A,B),C,D and spends its last merge elsewhere
      EXPECT_TRUE(same_forest(reverted_state(s), ab)) << key;
    }
  }
  EXPECT_EQ(preds.size(), 3u);
}

TEST(ProposalsProperty, SupportSymmetry) {
  Rng rng(65);
  for (bool clock : {true, false}) {
    PriorConfig prior;
    prior.clock = clock;
    for (int rep = 0; rep < 10000; ++rep) {
      const std::size_t n = 3 + rng.below(6);
      const Alignment aln = random_alignment(n, 3, rng);
      const LikelihoodEngine engine(aln, K2PModel(2.0));
      const AugmentedState s = random_state(engine, prior, 2 + rng.below(n - 2), rng);
      const auto p = rdoup_propose(s, engine, prior, rng);
      ASSERT_GT(rdoup_forward_logdensity(s, p.next, prior), kNegInf);
      ASSERT_GT(rdoup_backward_logdensity(p.next, s, prior), kNegInf);
      // a state two ranks up is never reachable, in either direction
      if (p.next.base.size() >= 2) {
        const auto q = rdoup_propose(p.next, engine, prior, rng);
        ASSERT_EQ(rdoup_forward_logdensity(s, q.next, prior), kNegInf);
        ASSERT_EQ(rdoup_backward_logdensity(q.next, s, prior), kNegInf);
      }
    }
  }
}

TEST(ProposalsProperty, ForwardDensityNormalizes) {
  Abcd f;
  for (bool clock : {true, false}) {
    PriorConfig prior;
    prior.clock = clock;
    prior.lambda = 3.0;
    for (std::size_t rank : {1u, 2u, 3u}) {
      const AugmentedState s = random_state(f.engine, prior, rank, f.rng);
      const double mass = integrate_exponential_mass(s.base, prior);
      EXPECT_NEAR(mass, 1.0, 1e-3) << "clock=" << clock << " trees=" << s.base.size();
    }
  }
}

TEST(ProposalsProperty, DualRouteWeights) {
  Rng rng(66);
  for (bool clock : {true, false}) {
    for (int rep = 0; rep < 1000; ++rep) {
      const std::size_t n = 3 + rng.below(8);
      const Alignment aln = random_alignment(n, 1 + rng.below(30), rng, 0.05);
      const LikelihoodEngine engine(aln, K2PModel(0.5 + 4 * rng.uniform()));
      PriorConfig prior;
      prior.clock = clock;
      prior.lambda = 1 + 10 * rng.uniform();
      prior.lambda0 = 1 + 10 * rng.uniform();
      const AugmentedState s = random_state(engine, prior, 1 + rng.below(n - 1), rng);

      const auto b = base_merge_propose(s.base, engine, prior, rng);
      const double vraw = csmc_incremental_logweight(s.base, b.next.base, prior, n);
      const double vsimple = csmc_simplified_logweight(b, s.base, prior);
      ASSERT_LT(std::fabs(vraw - vsimple), 1e-10) << "vanilla clock=" << clock;

      if (!s.pair) continue;
      const auto p = rdoup_propose(s, engine, prior, rng);
      const double raw = rdoup_incremental_logweight(s, p.next, prior, n);
      const double simple = rdoup_simplified_logweight(s, p, prior);
      ASSERT_LT(std::fabs(raw - simple), 1e-10) << "rdoup clock=" << clock;
      ASSERT_LT(std::fabs(rdoup_logweight_between(s, p.next, prior) - simple), 1e-10);
    }
  }
}
