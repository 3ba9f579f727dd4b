#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "alignment.hpp"
#include "error.hpp"
#include "forest.hpp"
#include "k2p.hpp"
#include "likelihood.hpp"
#include "parallel.hpp"
#include "proposals.hpp"
#include "random.hpp"
#include "smc_core.hpp"

namespace phylosmc {

struct SmcConfig {
  std::size_t particles = 100;
  double epsilon = 0.5;
  ResampleScheme scheme = ResampleScheme::kStratified;
  ProposalKind proposal = ProposalKind::kRdoup;
  bool retain_history = false;
  int threads = 1;
};

struct RankDiagnostics {
  std::size_t rank = 0;
  double ess = 0.0;          // after weighting at this rank
  double rel_ess = 0.0;
  bool resampled = false;    // resampling before propagating to this rank
};

/// Stripped particle states per rank with ancestor links.
struct History {
  std::vector<std::vector<AugmentedState>> states;       // [rank-1][particle]
  std::vector<std::vector<std::uint32_t>> ancestors;     // [rank-1][particle] -> index at rank-1
};

struct SmcResult {
  std::vector<AugmentedState> particles;  // final rank
  std::vector<double> log_weights;
  std::vector<double> weights;
  double logZ = 0.0;
  double final_ess = 0.0;
  std::vector<RankDiagnostics> ranks;
  std::optional<History> history;
  std::size_t ancestor_moves = 0;  // ranks where ancestor sampling left the reference lineage

  const Subtree& tree(std::size_t k) const { return particles[k].base.trees.front(); }
};

/// Augmented states s_1..s_R of one particle lineage.
struct Trajectory {
  std::vector<AugmentedState> states;

  const AugmentedState& final_state() const { return states.back(); }
  const NodePtr& final_tree() const { return states.back().base.trees.front().node; }
};

inline StreamKey stream(const StreamKey& base, std::uint64_t rank, std::uint64_t particle,
                        std::uint64_t purpose) {
  StreamKey k = base;
  k.rank = rank;
  k.particle = particle;
  k.purpose = purpose;
  return k;
}

/// Recomputes all pruning vectors of a trajectory under the engine's model.
inline Trajectory rehydrate(const Trajectory& t, const LikelihoodEngine& engine) {
  LikelihoodEngine::Memo memo;
  Trajectory out;
  out.states.reserve(t.states.size());
  for (const auto& s : t.states) out.states.push_back(rehydrate(s, engine, memo));
  return out;
}

inline Trajectory stripped(const Trajectory& t) {
  Trajectory out;
  for (const auto& s : t.states) out.states.push_back(stripped(s));
  return out;
}

namespace detail {

struct Propagated {
  AugmentedState next;
  double log_weight = 0.0;
};

inline Propagated propagate(const AugmentedState& s, const LikelihoodEngine& engine,
                            const PriorConfig& prior, ProposalKind kind, Rng& rng) {
  if (kind == ProposalKind::kVanilla || !s.pair) {
    auto p = base_merge_propose(s.base, engine, prior, rng);
    const double w = csmc_simplified_logweight(p, s.base, prior);
    return {std::move(p.next), w};
  }
  auto p = rdoup_propose(s, engine, prior, rng);
  const double w = rdoup_simplified_logweight(s, p, prior);
  return {std::move(p.next), w};
}

inline double logweight_between(const AugmentedState& prev, const AugmentedState& next,
                                const PriorConfig& prior, ProposalKind kind) {
  if (kind == ProposalKind::kVanilla) return csmc_logweight_between(prev.base, next.base, prior);
  return rdoup_logweight_between(prev, next, prior);
}

inline void check_reference(const Trajectory& ref, const LikelihoodEngine& engine) {
  const std::size_t R = engine.taxon_count();
  if (ref.states.size() != R) {
    throw Error(ErrorKind::kConfiguration, "reference trajectory has the wrong number of ranks");
  }
  TaxonSet all;
  for (std::size_t t = 0; t < R; ++t) all.set(t);
  for (std::size_t r = 0; r < R; ++r) {
    const auto& s = ref.states[r];
    if (s.base.size() != R - r || s.base.taxa() != all) {
      throw Error(ErrorKind::kConfiguration, "reference trajectory does not match the alignment");
    }
  }
}

inline SmcResult run_smc(const LikelihoodEngine& engine, const PriorConfig& prior,
                         const SmcConfig& config, const StreamKey& key, const Trajectory* reference,
                         bool ancestor_sampling) {
  const std::size_t K = config.particles;
  const std::size_t R = engine.taxon_count();
  if (K == 0) throw Error(ErrorKind::kConfiguration, "need at least one particle");
  if (R < 2) throw Error(ErrorKind::kConfiguration, "need at least two taxa");
  if (!(config.epsilon >= 0.0 && config.epsilon <= 1.0)) {
    throw Error(ErrorKind::kConfiguration, "ESS threshold must lie in [0, 1]");
  }
  prior.validate();
  const bool conditional = reference != nullptr;
  if (conditional) check_reference(*reference, engine);

  ParticleSystem<AugmentedState> system(std::vector<AugmentedState>(K, initial_state(engine)), 1);
  SmcResult result;
  if (config.retain_history) {
    result.history.emplace();
    result.history->states.push_back(std::vector<AugmentedState>(K, stripped(system.particles()[0])));
    result.history->ancestors.emplace_back();
  }
  const std::optional<std::size_t> protect =
      conditional ? std::optional<std::size_t>(0) : std::nullopt;

  for (std::size_t r = 2; r <= R; ++r) {
    const std::vector<double> pre_weights = system.log_weights();
    Rng resample_rng(stream(key, r, 0, purpose::kResample));
    const auto outcome = system.maybe_resample(config.epsilon, config.scheme, protect, resample_rng);
    std::vector<std::size_t> ancestors = outcome.ancestors;
    const auto& parents = system.particles();
    const AugmentedState* ref_next = conditional ? &reference->states[r - 1] : nullptr;

    if (conditional && ancestor_sampling && outcome.resampled && r >= 3) {
      std::vector<double> lp(K, kNegInf);
      parallel_for(K, config.threads, [&](std::size_t k) {
        const auto& x = parents[k];
        double fwd;
        double bwd;
        if (config.proposal == ProposalKind::kVanilla) {
          fwd = base_merge_logdensity_of(x.base, ref_next->base, prior);
          bwd = fwd == kNegInf ? kNegInf : base_backward_logdensity(ref_next->base, x.base, prior);
        } else {
          fwd = rdoup_forward_logdensity(x, *ref_next, prior);
          bwd = fwd == kNegInf ? kNegInf : rdoup_backward_logdensity(*ref_next, x, prior);
        }
        if (fwd == kNegInf || bwd == kNegInf) return;
        lp[k] = pre_weights[k] + bwd - gamma_log(x, prior, R);
      });
      Rng as_rng(stream(key, r, 0, purpose::kAncestor));
      const std::size_t a = sample_categorical(normalize_log_weights(lp), as_rng);
      if (a != 0) ++result.ancestor_moves;
      ancestors[0] = a;
    }

    std::vector<AugmentedState> next(K);
    std::vector<double> incremental(K, 0.0);
    parallel_for(K, config.threads, [&](std::size_t k) {
      const auto& parent = parents[ancestors[k]];
      if (conditional && k == 0) {
        next[0] = *ref_next;
        incremental[0] = logweight_between(parent, *ref_next, prior, config.proposal);
        if (incremental[0] == kNegInf) {
          throw Error(ErrorKind::kUnsupportedMove, "reference is not reachable from its ancestor");
        }
        return;
      }
      Rng rng(stream(key, r, k, purpose::kPropagate));
      auto p = propagate(parent, engine, prior, config.proposal, rng);
      next[k] = std::move(p.next);
      incremental[k] = p.log_weight;
    });
    system.advance(std::move(next), ancestors, incremental);
    system.update_logZ();

    const auto W = system.normalized_weights();
    RankDiagnostics d;
    d.rank = r;
    d.ess = ess(W);
    d.rel_ess = d.ess / static_cast<double>(K);
    d.resampled = outcome.resampled;
    result.ranks.push_back(d);

    if (result.history) {
      std::vector<AugmentedState> snap(K);
      std::vector<std::uint32_t> anc(K);
      for (std::size_t k = 0; k < K; ++k) {
        snap[k] = stripped(system.particles()[k]);
        anc[k] = static_cast<std::uint32_t>(ancestors[k]);
      }
      result.history->states.push_back(std::move(snap));
      result.history->ancestors.push_back(std::move(anc));
    }
  }

  result.log_weights = system.log_weights();
  result.weights = system.normalized_weights();
  // Ratio estimate Z_R / Z_1 times the exactly known rank-1 target.
  result.logZ = system.logZ() + gamma_log(initial_state(engine), prior, R);
  result.final_ess = result.ranks.empty() ? static_cast<double>(K) : result.ranks.back().ess;
  result.particles = std::move(system.particles());
  return result;
}

}  // namespace detail

/// Combinatorial SMC with the vanilla merge proposal or RDouP.
inline SmcResult run_csmc(const LikelihoodEngine& engine, const PriorConfig& prior,
                          const SmcConfig& config, const StreamKey& key) {
  return detail::run_smc(engine, prior, config, key, nullptr, false);
}

/// Conditional SMC: slot 0 follows `reference` at every rank. The reference
/// must carry pruning vectors for the engine's model (see rehydrate).
inline SmcResult run_conditional_csmc(const LikelihoodEngine& engine, const PriorConfig& prior,
                                      const SmcConfig& config, const Trajectory& reference,
                                      bool ancestor_sampling, const StreamKey& key) {
  return detail::run_smc(engine, prior, config, key, &reference, ancestor_sampling);
}

/// Draws a final particle by weight and follows its ancestry to rank 1.
inline Trajectory trajectory_of(const SmcResult& result, std::size_t k) {
  if (!result.history) throw Error(ErrorKind::kUsage, "run did not retain its history");
  const auto& h = *result.history;
  const std::size_t R = h.states.size();
  Trajectory t;
  t.states.resize(R);
  std::size_t idx = k;
  for (std::size_t r = R; r-- > 0;) {
    t.states[r] = h.states[r][idx];
    if (r > 0) idx = h.ancestors[r][idx];
  }
  return t;
}

inline Trajectory sample_trajectory(const SmcResult& result, Rng& rng) {
  if (!result.history) throw Error(ErrorKind::kUsage, "run did not retain its history");
  return trajectory_of(result, sample_categorical(result.weights, rng));
}

// ---------------------------------------------------------------------------
// Particle Gibbs

struct KappaSettings {
  KappaPrior prior;
  KappaProposal proposal;
  std::optional<double> initial;  // drawn from U(1, 3) when unset
};

struct TraceRow {
  std::size_t iteration = 0;
  double kappa = 0.0;
  double log_lik = 0.0;   // log p(y | tree, kappa) of the sampled tree
  double ess = 0.0;       // final-rank ESS of the conditional SMC
  double logZ = 0.0;
  bool accepted = false;
  std::vector<NodePtr> trees;
};

struct RunTrace {
  double initial_kappa = 0.0;
  std::vector<TraceRow> rows;
  double burn_in = 0.5;

  std::size_t first_kept() const {
    return static_cast<std::size_t>(std::floor(burn_in * static_cast<double>(rows.size())));
  }

  double acceptance_rate() const {
    if (rows.empty()) return 0.0;
    double a = 0.0;
    for (const auto& r : rows) a += r.accepted ? 1.0 : 0.0;
    return a / static_cast<double>(rows.size());
  }

  std::vector<double> kept_kappas() const {
    std::vector<double> out;
    for (std::size_t i = first_kept(); i < rows.size(); ++i) out.push_back(rows[i].kappa);
    return out;
  }
};

struct PgConfig {
  SmcConfig smc;
  std::size_t iterations = 100;
  bool ancestor_sampling = false;
  double burn_in = 0.5;
  KappaSettings kappa;
  std::uint64_t seed = 1;
  std::function<void(const TraceRow&)> on_iteration;  // progress hook
};

namespace detail {

inline double initial_kappa(const KappaSettings& k, std::uint64_t seed) {
  if (k.initial) return *k.initial;
  Rng rng(StreamKey{seed, 0, 0, 0, 0, purpose::kInit});
  return rng.uniform(1.0, 3.0);
}

inline KappaStep kappa_step(const Alignment& aln, const Node& tree, double kappa,
                            double current_loglik, const KappaSettings& k, Rng& rng) {
  return mh_update_kappa(
      kappa, k.proposal, k.prior,
      [&](double kp) { return LikelihoodEngine(aln, K2PModel(kp)).tree_log_likelihood(tree); }, rng,
      current_loglik);
}

inline void validate_kappa_settings(const KappaSettings& k) {
  if (!(k.prior.mu0 > 0.0)) throw Error(ErrorKind::kConfiguration, "mu0 must be positive");
  if (!(k.proposal.a > 1.0)) throw Error(ErrorKind::kConfiguration, "MH bound a must exceed 1");
}

}  // namespace detail

/// Particle Gibbs over (tree, kappa); optional ancestor sampling.
inline RunTrace run_pg(const Alignment& aln, const PriorConfig& prior, const PgConfig& config) {
  detail::validate_kappa_settings(config.kappa);
  SmcConfig smc = config.smc;
  smc.retain_history = true;
  RunTrace trace;
  trace.burn_in = config.burn_in;
  double kappa = detail::initial_kappa(config.kappa, config.seed);
  trace.initial_kappa = kappa;

  Trajectory ref;
  {
    LikelihoodEngine engine(aln, K2PModel(kappa));
    const StreamKey key{config.seed, 0, 0, 0, 0, 0};
    const auto init = run_csmc(engine, prior, smc, key);
    Rng rng(stream(key, 0, 0, purpose::kTrajectory));
    ref = sample_trajectory(init, rng);
  }
  double ref_loglik = LikelihoodEngine(aln, K2PModel(kappa)).tree_log_likelihood(*ref.final_tree());

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const StreamKey key{config.seed, 0, it, 0, 0, 0};
    Rng krng(stream(key, 0, 0, purpose::kKappa));
    const auto step = detail::kappa_step(aln, *ref.final_tree(), kappa, ref_loglik, config.kappa, krng);
    kappa = step.kappa;

    LikelihoodEngine engine(aln, K2PModel(kappa));
    const Trajectory hydrated = rehydrate(ref, engine);
    const auto res = run_conditional_csmc(engine, prior, smc, hydrated, config.ancestor_sampling, key);
    Rng trng(stream(key, 0, 0, purpose::kTrajectory));
    const std::size_t pick = sample_categorical(res.weights, trng);
    ref = trajectory_of(res, pick);
    ref_loglik = res.tree(pick).log_lik;

    TraceRow row;
    row.iteration = it;
    row.kappa = kappa;
    row.log_lik = ref_loglik;
    row.ess = res.final_ess;
    row.logZ = res.logZ;
    row.accepted = step.accepted;
    row.trees.push_back(ref.final_tree());
    if (config.on_iteration) config.on_iteration(row);
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Interacting PMCMC

struct IpmcmcConfig {
  SmcConfig smc;
  std::size_t nodes = 4;        // M
  std::size_t conditional = 2;  // P
  std::size_t iterations = 100;
  double burn_in = 0.5;
  KappaSettings kappa;
  std::uint64_t seed = 1;
  std::function<void(const TraceRow&)> on_iteration;
};

/// M SMC nodes of which P are conditional; references are exchanged by
/// marginal-likelihood weights after every sweep.
inline RunTrace run_ipmcmc(const Alignment& aln, const PriorConfig& prior,
                           const IpmcmcConfig& config) {
  const std::size_t M = config.nodes;
  const std::size_t P = config.conditional;
  if (P < 1 || P >= M) {
    if (!(M == 1 && P == 1)) {
      throw Error(ErrorKind::kConfiguration, "need 1 <= conditional nodes < nodes");
    }
  }
  detail::validate_kappa_settings(config.kappa);
  SmcConfig smc = config.smc;
  smc.retain_history = true;
  RunTrace trace;
  trace.burn_in = config.burn_in;
  double kappa = detail::initial_kappa(config.kappa, config.seed);
  trace.initial_kappa = kappa;

  std::vector<Trajectory> refs(P);
  {
    LikelihoodEngine engine(aln, K2PModel(kappa));
    for (std::size_t j = 0; j < P; ++j) {
      const StreamKey key{config.seed, j, 0, 0, 0, 0};
      const auto init = run_csmc(engine, prior, smc, key);
      Rng rng(stream(key, 0, 0, purpose::kTrajectory));
      refs[j] = sample_trajectory(init, rng);
    }
  }
  // Conditional node indices c_j; initially the first P nodes.
  std::vector<std::size_t> c(P);
  std::iota(c.begin(), c.end(), std::size_t{0});
  std::size_t chosen = 0;
  double chosen_loglik =
      LikelihoodEngine(aln, K2PModel(kappa)).tree_log_likelihood(*refs[0].final_tree());

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    LikelihoodEngine engine(aln, K2PModel(kappa));
    std::vector<SmcResult> results(M);
    std::vector<bool> is_conditional(M, false);
    for (std::size_t j = 0; j < P; ++j) is_conditional[c[j]] = true;
    for (std::size_t m = 0; m < M; ++m) {
      const StreamKey key{config.seed, m, it, 0, 0, 0};
      if (is_conditional[m]) {
        const auto slot = static_cast<std::size_t>(std::find(c.begin(), c.end(), m) - c.begin());
        results[m] = run_conditional_csmc(engine, prior, smc, rehydrate(refs[slot], engine), false, key);
      } else {
        results[m] = run_csmc(engine, prior, smc, key);
      }
    }
    std::vector<double> logZ(M);
    for (std::size_t m = 0; m < M; ++m) logZ[m] = results[m].logZ;

    double ess_sum = 0.0;
    const StreamKey sweep{config.seed, 0, it, 0, 0, 0};
    std::vector<std::size_t> new_c = c;
    std::vector<Trajectory> new_refs(P);
    std::vector<double> ref_logliks(P);
    for (std::size_t j = 0; j < P; ++j) {
      std::vector<double> lw(M);
      for (std::size_t m = 0; m < M; ++m) {
        bool held = false;
        for (std::size_t l = 0; l < P; ++l) held = held || (l != j && new_c[l] == m);
        lw[m] = held ? kNegInf : logZ[m];
      }
      Rng crng(stream(sweep, 0, j, purpose::kInteract));
      new_c[j] = sample_categorical(normalize_log_weights(lw), crng);
      const auto& node = results[new_c[j]];
      Rng brng(stream(sweep, 1, j, purpose::kInteract));
      const std::size_t b = sample_categorical(node.weights, brng);
      new_refs[j] = trajectory_of(node, b);
      ref_logliks[j] = node.tree(b).log_lik;
      ess_sum += results[c[j]].final_ess;
    }
    c = new_c;
    refs = std::move(new_refs);

    Rng pick_rng(stream(sweep, 2, 0, purpose::kInteract));
    chosen = static_cast<std::size_t>(pick_rng.below(P));
    chosen_loglik = ref_logliks[chosen];
    Rng krng(stream(sweep, 0, 0, purpose::kKappa));
    const auto step =
        detail::kappa_step(aln, *refs[chosen].final_tree(), kappa, chosen_loglik, config.kappa, krng);
    kappa = step.kappa;

    TraceRow row;
    row.iteration = it;
    row.kappa = kappa;
    row.log_lik = step.accepted
                      ? LikelihoodEngine(aln, K2PModel(kappa)).tree_log_likelihood(*refs[chosen].final_tree())
                      : chosen_loglik;
    row.ess = ess_sum / static_cast<double>(P);
    row.logZ = log_sum_exp(logZ) - std::log(static_cast<double>(M));
    row.accepted = step.accepted;
    for (const auto& r : refs) row.trees.push_back(r.final_tree());
    if (config.on_iteration) config.on_iteration(row);
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

}  // namespace phylosmc
