// One PASS/FAIL line per acceptance criterion. Tolerances and budgets are
// fixed here; `acceptance --criterion N` runs a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace phylosmc;
using namespace testing_util;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

// --------------------------------------------------------------------------

Outcome likelihood_oracle() {
  constexpr double kRelTol = 1e-12;
  constexpr double kBudget = 1.0;
  Stopwatch clock;
  Rng rng(1001);
  const TaxonTable taxa(letters(4));
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Alignment aln = random_alignment(4, 5, rng);
    const NodePtr tree = simulate_nonclock_tree(taxa, 5.0, rng);
    const double kappa = 0.5 + 4.5 * rng.uniform();
    const double pruning = LikelihoodEngine(aln, K2PModel(kappa)).tree_log_likelihood(*tree);
    const double brute = oracle::brute_force_loglik(*tree, aln, kappa);
    worst = std::max(worst, std::fabs(pruning - brute) / std::fabs(brute));
  }
  const double t = clock.seconds();
  return {worst < kRelTol && t < kBudget,
          "max relative error " + num(worst) + " (< " + num(kRelTol) + "), " + num(t) + " s"};
}

Outcome k2p_closed_form() {
  constexpr double kTol = 1e-10;
  constexpr double kBudget = 1.0;
  Stopwatch clock;
  double worst = 0.0;
  for (double k : {0.5, 1.0, 2.0, 5.0}) {
    for (double b : {0.01, 0.1, 1.0, 10.0}) {
      const Matrix4 p = transition_probabilities(K2PModel(k), b);
      const auto o = oracle::transition(k, b);
      for (int e = 0; e < 16; ++e) worst = std::max(worst, std::fabs(p[e] - o[e]));
    }
  }
  const double t = clock.seconds();
  return {worst < kTol && t < kBudget,
          "max abs difference " + num(worst) + " (< " + num(kTol) + "), " + num(t) + " s"};
}

Outcome weight_identity() {
  constexpr double kTol = 1e-10;
  constexpr double kBudget = 10.0;
  constexpr int kTransitions = 1000;
  Stopwatch clock;
  Rng rng(1003);
  double worst = 0.0;
  std::size_t vanilla = 0;
  std::size_t rdoup = 0;
  for (bool is_clock : {true, false}) {
    int rdoup_here = 0;
    int vanilla_here = 0;
    while (vanilla_here < kTransitions || rdoup_here < kTransitions) {
      const std::size_t n = 3 + rng.below(8);
      const Alignment aln = random_alignment(n, 1 + rng.below(30), rng, 0.05);
      const LikelihoodEngine engine(aln, K2PModel(0.5 + 4 * rng.uniform()));
      PriorConfig prior;
      prior.clock = is_clock;
      prior.lambda = 1 + 10 * rng.uniform();
      prior.lambda0 = 1 + 10 * rng.uniform();
      const AugmentedState s = random_state(engine, prior, 1 + rng.below(n - 1), rng);
      if (vanilla_here < kTransitions) {
        const auto b = base_merge_propose(s.base, engine, prior, rng);
        const double raw = csmc_incremental_logweight(s.base, b.next.base, prior, n);
        worst = std::max(worst, std::fabs(raw - csmc_simplified_logweight(b, s.base, prior)));
        ++vanilla_here;
      }
      if (s.pair && rdoup_here < kTransitions) {
        const auto p = rdoup_propose(s, engine, prior, rng);
        const double raw = rdoup_incremental_logweight(s, p.next, prior, n);
        worst = std::max(worst, std::fabs(raw - rdoup_simplified_logweight(s, p, prior)));
        ++rdoup_here;
      }
    }
    vanilla += static_cast<std::size_t>(vanilla_here);
    rdoup += static_cast<std::size_t>(rdoup_here);
  }
  const double t = clock.seconds();
  return {worst < kTol && t < kBudget,
          std::to_string(vanilla) + " vanilla and " + std::to_string(rdoup) +
              " RDouP transitions, max difference " + num(worst) + " (< " + num(kTol) + "), " +
              num(t) + " s"};
}

Outcome marginal_likelihood() {
  constexpr double kSigmas = 3.0;
  constexpr double kBudget = 300.0;
  constexpr std::size_t kParticles = 1000;
  constexpr int kRepeats = 50;
  Stopwatch clock;
  const Alignment aln = simulated_alignment(5, 200, 1004, 2.0, true);
  const LikelihoodEngine engine(aln, K2PModel(2.0));
  PriorConfig prior;
  const auto truth = oracle::prior_is_logz(aln, 2.0, prior.lambda0, 100000, 1005);
  bool pass = true;
  std::string detail = "oracle " + num(truth.mean) + " +- " + num(truth.se);
  for (ProposalKind kind : {ProposalKind::kRdoup, ProposalKind::kVanilla}) {
    SmcConfig c;
    c.particles = kParticles;
    c.proposal = kind;
    std::vector<double> z;
    for (int rep = 0; rep < kRepeats; ++rep) {
      z.push_back(run_csmc(engine, prior, c, StreamKey{1006, 0, static_cast<std::uint64_t>(rep), 0, 0, 0}).logZ);
    }
    const double m = oracle::mean(z);
    const double se = oracle::standard_error(z);
    const double gap = std::fabs(m - truth.mean);
    const double bound = kSigmas * combined_se(se, truth.se);
    pass = pass && gap < bound;
    detail += std::string("; ") + (kind == ProposalKind::kRdoup ? "CSMC-RDouP " : "CSMC ") + num(m) +
              " +- " + num(se) + " (gap " + num(gap) + ", bound " + num(bound) + ")";
  }
  const double t = clock.seconds();
  return {pass && t < kBudget, detail + ", " + num(t) + " s"};
}

RunTrace pg_chain(const Alignment& aln, std::size_t particles, std::size_t iterations,
                  ProposalKind kind, bool ancestor_sampling, std::uint64_t seed) {
  PgConfig c;
  c.smc.particles = particles;
  c.smc.proposal = kind;
  c.iterations = iterations;
  c.ancestor_sampling = ancestor_sampling;
  c.seed = seed;
  return run_pg(aln, PriorConfig{}, c);
}

Outcome pg_invariance() {
  constexpr double kSigmas = 3.0;
  constexpr double kBudget = 600.0;
  constexpr std::size_t kBatches = 30;
  Stopwatch clock;
  const Alignment aln = simulated_alignment(4, 100, 1007, 2.0, true);
  const auto small = pg_chain(aln, 2, 20000, ProposalKind::kRdoup, false, 1008).kept_kappas();
  const auto large = pg_chain(aln, 500, 2000, ProposalKind::kRdoup, false, 1009).kept_kappas();
  const double ms = oracle::mean(small);
  const double ml = oracle::mean(large);
  const double ses = oracle::batch_means_se(small, kBatches);
  const double sel = oracle::batch_means_se(large, kBatches);
  const double gap = std::fabs(ms - ml);
  const double bound = kSigmas * combined_se(ses, sel);
  const double t = clock.seconds();
  return {gap < bound && t < kBudget,
          "kappa K=2 " + num(ms) + " +- " + num(ses) + ", K=500 " + num(ml) + " +- " + num(sel) +
              " (gap " + num(gap) + ", bound " + num(bound) + "), " + num(t) + " s"};
}

Outcome ess_degeneracy() {
  constexpr double kBudget = 1800.0;
  Stopwatch clock;
  const Alignment aln = simulated_alignment(10, 500, 1010, 2.0, true);
  const auto fraction = [&](ProposalKind kind, bool as, std::uint64_t seed) {
    std::vector<double> e;
    for (const auto& row : pg_chain(aln, 1000, 200, kind, as, seed).rows) e.push_back(row.ess);
    return ess_table(e).fraction_one;
  };
  const double pg = fraction(ProposalKind::kVanilla, false, 1011);
  const double pg_rdoup = fraction(ProposalKind::kRdoup, false, 1012);
  const double pgas_rdoup = fraction(ProposalKind::kRdoup, true, 1013);
  const double t = clock.seconds();
  return {pg > 0.0 && pg_rdoup == 0.0 && pgas_rdoup == 0.0 && t < kBudget,
          "ESS=1 fraction PG " + num(pg) + " (> 0), PG-RDouP " + num(pg_rdoup) + " (= 0), PGAS-RDouP " +
              num(pgas_rdoup) + " (= 0), " + num(t) + " s"};
}

Outcome tree_quality() {
  constexpr double kBudget = 1800.0;
  constexpr int kDatasets = 5;
  Stopwatch clock;
  const TaxonTable taxa(default_taxon_names(20));
  std::vector<double> rf_small;
  std::vector<double> rf_large;
  for (int d = 0; d < kDatasets; ++d) {
    Rng rng(2000 + static_cast<std::uint64_t>(d));
    const NodePtr truth = simulate_clock_tree(taxa, 10.0, rng);
    const Alignment aln = simulate_alignment(*truth, taxa, 2.0, 1000, rng);
    NewickNode true_nw = to_newick_node(*truth, taxa);
    canonicalize(true_nw);
    const LikelihoodEngine engine(aln, K2PModel(2.0));
    for (std::size_t K : {std::size_t{1000}, std::size_t{10000}}) {
      SmcConfig c;
      c.particles = K;
      c.threads = default_thread_count();
      const auto res = run_csmc(engine, PriorConfig{}, c, StreamKey{3000 + static_cast<std::uint64_t>(d), 0, 0, 0, 0, 0});
      std::vector<WeightedTree> sample;
      for (std::size_t k = 0; k < res.particles.size(); ++k) {
        if (res.weights[k] <= 0.0) continue;
        NewickNode nw = to_newick_node(*res.tree(k).node, taxa);
        canonicalize(nw);
        sample.push_back({std::move(nw), res.weights[k]});
      }
      const double rf = rf_branch_score(consensus_tree(sample, taxa, true), true_nw, taxa);
      (K == 1000 ? rf_small : rf_large).push_back(rf);
    }
  }
  const double a = median(rf_small);
  const double b = median(rf_large);
  const double t = clock.seconds();
  return {b < a && t < kBudget,
          "median RF branch score K=1000 " + num(a) + ", K=10000 " + num(b) + ", " + num(t) + " s"};
}

Outcome primates() {
  constexpr double kLow = -5640.0;
  constexpr double kHigh = -5585.0;
  Stopwatch clock;
  const fs::path out = fs::temp_directory_path() / "phylosmc_acceptance_primates";
  fs::remove_all(out);
  const std::vector<std::string> args = {
      "phylosmc", "infer", "--method", "ipmcmc", "--in", PHYLOSMC_PRIMATES, "--particles", "2000",
      "--nodes", "4", "--conditional", "2", "--iterations", "1000", "--seed", "1", "--quiet",
      "--threads", std::to_string(default_thread_count()), "--out-dir", out.string()};
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream sink;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), sink, std::cerr);
  if (rc != 0) return {false, "infer exited with " + std::to_string(rc)};
  const auto run = nlohmann::json::parse(cli::read_file((out / "run.json").string()));
  const double ll = run["consensus_log_likelihood"];
  const double t = clock.seconds();
  return {ll >= kLow && ll <= kHigh,
          "consensus log-likelihood " + num(ll) + " in [" + num(kLow) + ", " + num(kHigh) +
              "], posterior mean kappa " + num(run["posterior_mean_kappa"].get<double>()) + ", " +
              num(t) + " s"};
}

Outcome parallel_scaling() {
  constexpr double kRatio = 0.5;
  const TaxonTable taxa(default_taxon_names(20));
  Rng rng(4000);
  const NodePtr truth = simulate_clock_tree(taxa, 10.0, rng);
  const Alignment aln = simulate_alignment(*truth, taxa, 2.0, 1000, rng);
  const LikelihoodEngine engine(aln, K2PModel(2.0));
  const auto timed = [&](int threads, double& seconds) {
    SmcConfig c;
    c.particles = 10000;
    c.threads = threads;
    Stopwatch w;
    auto res = run_csmc(engine, PriorConfig{}, c, StreamKey{4001, 0, 0, 0, 0, 0});
    seconds = w.seconds();
    return res;
  };
  double t1 = 0.0;
  double t4 = 0.0;
  const auto a = timed(1, t1);
  const auto b = timed(4, t4);
  bool identical = a.logZ == b.logZ && a.weights == b.weights;
  for (std::size_t k = 0; identical && k < a.particles.size(); ++k) {
    identical = to_newick(*a.tree(k).node, taxa) == to_newick(*b.tree(k).node, taxa);
  }
  const double ratio = t4 / t1;
  return {identical && ratio <= kRatio,
          "4-thread/1-thread time " + num(ratio) + " (<= " + num(kRatio) + ", " + num(t4) + " s vs " +
              num(t1) + " s, " + std::to_string(std::thread::hardware_concurrency()) +
              " hardware threads), outputs " + (identical ? "identical" : "differ")};
}

Outcome property_suites() {
  constexpr double kBudget = 300.0;
  Stopwatch clock;
  const std::string cmd = std::string("\"") + PHYLOSMC_UNIT_TESTS + "\" --gtest_filter=*Property* --gtest_brief=1";
  const int rc = std::system(cmd.c_str());
  const double t = clock.seconds();
  return {rc == 0 && t < kBudget, "property tests exit status " + std::to_string(rc) + ", " + num(t) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {
      likelihood_oracle, k2p_closed_form, weight_identity, marginal_likelihood, pg_invariance,
      ess_degeneracy,    tree_quality,    primates,        parallel_scaling,    property_suites};

  CLI::App app("phylosmc acceptance checks");
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")
      ->check(CLI::Range(1, static_cast<int>(criteria.size())));
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << i + 1 << ": " << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
