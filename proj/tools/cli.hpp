#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "phylosmc/phylosmc.hpp"

namespace phylosmc::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kUsage, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kUsage, "cannot write '" + path.string() + "'");
  out << text;
}

inline std::string weighted_newick(const std::string& newick, double weight) {
  return "[&W " + format_length(weight) + "] " + newick;
}

/// Reads one tree per line; a leading "[&W w]" comment sets the weight.
inline std::vector<WeightedTree> read_tree_file(const std::string& text) {
  std::vector<WeightedTree> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos) continue;
    double w = 1.0;
    std::string_view rest(line);
    rest.remove_prefix(start);
    if (rest.substr(0, 3) == "[&W") {
      const auto close = rest.find(']');
      if (close == std::string_view::npos) throw ParseError("unterminated weight comment", start);
      w = std::stod(std::string(rest.substr(3, close - 3)));
      rest.remove_prefix(close + 1);
    }
    out.push_back({parse_newick(rest), w});
  }
  if (out.empty()) throw Error(ErrorKind::kEmptyInput, "no trees in input");
  return out;
}

inline std::string fmt(double x) { return format_length(x); }

// ---------------------------------------------------------------------------

inline int cmd_simulate(std::size_t taxa_n, std::size_t sites, double kappa, double lambda0,
                        double lambda, bool clock, std::uint64_t seed, const std::string& out_dir) {
  if (taxa_n < 2) throw Error(ErrorKind::kUsage, "--taxa must be at least 2");
  if (sites < 1) throw Error(ErrorKind::kUsage, "--sites must be at least 1");
  if (!(kappa > 0.0) || !(lambda0 > 0.0) || !(lambda > 0.0)) {
    throw Error(ErrorKind::kUsage, "--kappa, --lambda0 and --lambda must be positive");
  }
  const TaxonTable taxa(default_taxon_names(taxa_n));
  Rng tree_rng(StreamKey{seed, 0, 0, 0, 0, purpose::kSimulate});
  const NodePtr tree = clock ? simulate_clock_tree(taxa, lambda0, tree_rng)
                             : simulate_nonclock_tree(taxa, lambda, tree_rng);
  Rng seq_rng(StreamKey{seed, 0, 0, 1, 0, purpose::kSimulate});
  const Alignment aln = simulate_alignment(*tree, taxa, kappa, sites, seq_rng);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  NewickNode nw = to_newick_node(*tree, taxa);
  canonicalize(nw);
  write_file(dir / "alignment.fasta", to_fasta(aln));
  write_file(dir / "tree.nwk", write_newick(nw) + "\n");
  json manifest = {{"seed", seed},     {"taxa", taxa_n},     {"sites", sites},
                   {"kappa", kappa},   {"lambda0", lambda0}, {"lambda", lambda},
                   {"clock", clock},   {"alignment", "alignment.fasta"},
                   {"tree", "tree.nwk"}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

struct InferOptions {
  std::string method = "csmc-rdoup";
  std::string input;
  std::string out_dir = ".";
  std::size_t particles = 100;
  std::size_t iterations = 100;
  bool iterations_set = false;
  double epsilon = 0.5;
  bool clock = true;
  double mu0 = 1.0;
  double lambda = 10.0;
  double lambda0 = 10.0;
  double mh_a = 1.5;
  double kappa = 2.0;
  bool kappa_set = false;
  std::size_t nodes = 4;
  std::size_t conditional = 2;
  bool nodes_set = false;
  int threads = 1;
  std::uint64_t seed = 1;
  double burn_in = 0.5;
  std::string resampling = "stratified";
  std::string proposal;
  bool quiet = false;
};

inline json echo(const InferOptions& o) {
  json j = {{"method", o.method},          {"input", o.input},
            {"particles", o.particles},    {"ess_threshold", o.epsilon},
            {"clock", o.clock},            {"lambda", o.lambda},
            {"lambda0", o.lambda0},        {"seed", o.seed},
            {"threads", o.threads},        {"resampling", o.resampling}};
  if (o.method == "csmc" || o.method == "csmc-rdoup") {
    j["kappa"] = o.kappa;
  } else {
    j["iterations"] = o.iterations;
    j["mu0"] = o.mu0;
    j["mh_a"] = o.mh_a;
    j["burn_in"] = o.burn_in;
    if (o.kappa_set) j["initial_kappa"] = o.kappa;
    if (!o.proposal.empty()) j["proposal"] = o.proposal;
  }
  if (o.method == "ipmcmc") {
    j["nodes"] = o.nodes;
    j["conditional"] = o.conditional;
  }
  return j;
}

inline int cmd_infer(const InferOptions& o) {
  const bool smc_only = o.method == "csmc" || o.method == "csmc-rdoup";
  const bool chain = o.method == "pg" || o.method == "pg-rdoup" || o.method == "pgas" ||
                     o.method == "ipmcmc";
  if (!smc_only && !chain) throw Error(ErrorKind::kUsage, "unknown method '" + o.method + "'");
  if (smc_only && o.iterations_set) {
    throw Error(ErrorKind::kUsage, "--iterations does not apply to " + o.method);
  }
  if (o.nodes_set && o.method != "ipmcmc") {
    throw Error(ErrorKind::kUsage, "--nodes/--conditional only apply to ipmcmc");
  }
  if (!o.proposal.empty() && o.method != "pgas" && o.method != "ipmcmc") {
    throw Error(ErrorKind::kUsage, "--proposal only applies to pgas and ipmcmc");
  }
  if (o.proposal != "" && o.proposal != "vanilla" && o.proposal != "rdoup") {
    throw Error(ErrorKind::kUsage, "--proposal must be vanilla or rdoup");
  }
  if (o.particles < 1) throw Error(ErrorKind::kUsage, "--particles must be at least 1");
  if (!(o.epsilon >= 0.0 && o.epsilon <= 1.0)) {
    throw Error(ErrorKind::kUsage, "--ess-threshold must lie in [0, 1]");
  }
  if (!(o.burn_in >= 0.0 && o.burn_in < 1.0)) throw Error(ErrorKind::kUsage, "--burn-in must lie in [0, 1)");
  if (chain && o.iterations < 1) throw Error(ErrorKind::kUsage, "--iterations must be at least 1");
  if (o.method == "ipmcmc" && !(o.conditional >= 1 && o.conditional < o.nodes) &&
      !(o.nodes == 1 && o.conditional == 1)) {
    throw Error(ErrorKind::kUsage, "--conditional must be at least 1 and below --nodes");
  }
  if (!(o.lambda > 0.0) || !(o.lambda0 > 0.0) || !(o.mu0 > 0.0) || !(o.mh_a > 1.0) ||
      !(o.kappa > 0.0)) {
    throw Error(ErrorKind::kUsage, "rates and kappa must be positive and --mh-a above 1");
  }
  if (o.threads < 1) throw Error(ErrorKind::kUsage, "--threads must be at least 1");
  if (o.resampling != "stratified" && o.resampling != "multinomial") {
    throw Error(ErrorKind::kUsage, "--resampling must be stratified or multinomial");
  }
  if (o.input.empty()) throw Error(ErrorKind::kUsage, "--in is required");

  const Alignment aln = read_alignment_file(o.input);
  const TaxonTable taxa(aln.names());
  PriorConfig prior;
  prior.clock = o.clock;
  prior.lambda = o.lambda;
  prior.lambda0 = o.lambda0;
  SmcConfig smc;
  smc.particles = o.particles;
  smc.epsilon = o.epsilon;
  smc.threads = o.threads;
  smc.scheme = o.resampling == "stratified" ? ResampleScheme::kStratified
                                            : ResampleScheme::kMultinomial;
  const bool vanilla = o.method == "csmc" || o.method == "pg" || o.proposal == "vanilla";
  smc.proposal = vanilla ? ProposalKind::kVanilla : ProposalKind::kRdoup;

  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  json run = {{"config", echo(o)}};
  std::vector<WeightedTree> sample;
  std::ostringstream trace_csv;
  std::ostringstream trees_out;
  double kappa_for_loglik = o.kappa;

  if (smc_only) {
    const LikelihoodEngine engine(aln, K2PModel(o.kappa));
    const auto res = run_csmc(engine, prior, smc, StreamKey{o.seed, 0, 0, 0, 0, 0});
    trace_csv << "rank,ess,rel_ess,resampled\n";
    for (const auto& r : res.ranks) {
      trace_csv << r.rank << ',' << fmt(r.ess) << ',' << fmt(r.rel_ess) << ','
                << (r.resampled ? 1 : 0) << '\n';
    }
    for (std::size_t k = 0; k < res.particles.size(); ++k) {
      if (res.weights[k] <= 0.0) continue;
      NewickNode nw = to_newick_node(*res.tree(k).node, taxa);
      canonicalize(nw);
      trees_out << weighted_newick(write_newick(nw), res.weights[k]) << '\n';
      sample.push_back({std::move(nw), res.weights[k]});
    }
    run["logZ"] = res.logZ;
    run["final_ess"] = res.final_ess;
  } else {
    KappaSettings ks;
    ks.prior.mu0 = o.mu0;
    ks.proposal.a = o.mh_a;
    if (o.kappa_set) ks.initial = o.kappa;
    auto progress = [&, every = std::max<std::size_t>(1, o.iterations / 10)](const TraceRow& row) {
      if (!o.quiet && row.iteration % every == 0) {
        std::cerr << "iteration " << row.iteration << "/" << o.iterations << " kappa "
                  << fmt(row.kappa) << " loglik " << fmt(row.log_lik) << " ess "
                  << fmt(row.ess) << '\n';
      }
    };
    RunTrace trace;
    if (o.method == "ipmcmc") {
      IpmcmcConfig c;
      c.smc = smc;
      c.nodes = o.nodes;
      c.conditional = o.conditional;
      c.iterations = o.iterations;
      c.burn_in = o.burn_in;
      c.kappa = ks;
      c.seed = o.seed;
      c.on_iteration = progress;
      trace = run_ipmcmc(aln, prior, c);
    } else {
      PgConfig c;
      c.smc = smc;
      c.iterations = o.iterations;
      c.ancestor_sampling = o.method == "pgas";
      c.burn_in = o.burn_in;
      c.kappa = ks;
      c.seed = o.seed;
      c.on_iteration = progress;
      trace = run_pg(aln, prior, c);
    }
    trace_csv << "iteration,kappa,log_likelihood,ess,accepted\n";
    for (const auto& r : trace.rows) {
      trace_csv << r.iteration << ',' << fmt(r.kappa) << ',' << fmt(r.log_lik) << ','
                << fmt(r.ess) << ',' << (r.accepted ? 1 : 0) << '\n';
    }
    const auto kept = trace.kept_kappas();
    double mean_kappa = 0.0;
    for (double k : kept) mean_kappa += k;
    mean_kappa /= static_cast<double>(std::max<std::size_t>(1, kept.size()));
    for (std::size_t i = trace.first_kept(); i < trace.rows.size(); ++i) {
      for (const auto& t : trace.rows[i].trees) {
        NewickNode nw = to_newick_node(*t, taxa);
        canonicalize(nw);
        trees_out << write_newick(nw) << '\n';
        sample.push_back({std::move(nw), 1.0});
      }
    }
    std::vector<double> ess_values;
    for (const auto& r : trace.rows) ess_values.push_back(r.ess);
    const auto table = ess_table(ess_values);
    run["initial_kappa"] = trace.initial_kappa;
    run["posterior_mean_kappa"] = mean_kappa;
    run["acceptance_rate"] = trace.acceptance_rate();
    run["ess"] = {{"mean", table.mean},
                  {"q025", table.q025},
                  {"q975", table.q975},
                  {"fraction_one", table.fraction_one}};
    kappa_for_loglik = mean_kappa;
  }
  const NewickNode consensus = consensus_tree(sample, taxa, o.clock);
  const LikelihoodEngine engine(aln, K2PModel(kappa_for_loglik));
  run["consensus_log_likelihood"] = consensus_log_likelihood(consensus, engine);
  run["consensus_kappa"] = kappa_for_loglik;
  run["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_file(dir / "trace.csv", trace_csv.str());
  write_file(dir / "trees.nwk", trees_out.str());
  write_file(dir / "consensus.nwk", write_newick(consensus) + "\n");
  write_file(dir / "run.json", run.dump(2) + "\n");
  return kExitOk;
}

struct SummarizeOptions {
  std::string trees;
  std::string truth;
  std::string alignment;
  std::string trace;
  std::string out;
  std::string consensus_out;
  double kappa = 0.0;
  bool kappa_set = false;
  bool clock = true;
};

/// One CSV line per metric; ESS rows follow the "mean (q0.025, q0.975)" layout.
inline int cmd_summarize(const SummarizeOptions& o, std::ostream& report) {
  if (o.trees.empty() && o.trace.empty()) {
    throw Error(ErrorKind::kUsage, "nothing to summarize: give --trees and/or --trace");
  }
  if (o.kappa_set != !o.alignment.empty()) {
    throw Error(ErrorKind::kUsage, "consensus log-likelihood needs both --alignment and --kappa");
  }
  if (!o.truth.empty() && o.trees.empty()) throw Error(ErrorKind::kUsage, "--truth needs --trees");
  std::ostringstream csv;
  csv << "metric,value\n";
  if (!o.trees.empty()) {
    const auto sample = read_tree_file(read_file(o.trees));
    std::vector<std::string> names = leaf_labels(sample.front().tree);
    std::optional<Alignment> aln;
    if (!o.alignment.empty()) {
      aln = read_alignment_file(o.alignment);
      names = aln->names();
    }
    const TaxonTable taxa(names);
    const NewickNode consensus = consensus_tree(sample, taxa, o.clock);
    const std::string cons_text = write_newick(consensus);
    csv << "trees," << sample.size() << '\n';
    csv << "consensus," << '"' << cons_text << '"' << '\n';
    if (!o.consensus_out.empty()) write_file(o.consensus_out, cons_text + "\n");
    if (!o.truth.empty()) {
      const auto truth = read_tree_file(read_file(o.truth));
      if (taxon_set(truth.front().tree, taxa) != taxon_set(consensus, taxa)) {
        throw Error(ErrorKind::kTaxonMismatch, "truth tree has different taxa");
      }
      csv << "rf_branch_score," << fmt(rf_branch_score(consensus, truth.front().tree, taxa)) << '\n';
      csv << "partition_metric," << partition_metric(consensus, truth.front().tree, taxa) << '\n';
    }
    if (aln) {
      const LikelihoodEngine engine(*aln, K2PModel(o.kappa));
      csv << "consensus_log_likelihood," << fmt(consensus_log_likelihood(consensus, engine)) << '\n';
    }
  }
  if (!o.trace.empty()) {
    std::istringstream in(read_file(o.trace));
    std::string header;
    std::getline(in, header);
    std::vector<std::string> cols;
    {
      std::istringstream hs(header);
      std::string c;
      while (std::getline(hs, c, ',')) cols.push_back(c);
    }
    const auto it = std::find(cols.begin(), cols.end(), "ess");
    if (it == cols.end()) throw Error(ErrorKind::kParse, "trace has no ess column");
    const auto col = static_cast<std::size_t>(it - cols.begin());
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string cell;
      for (std::size_t i = 0; i <= col; ++i) std::getline(ls, cell, ',');
      values.push_back(std::stod(cell));
    }
    const auto t = ess_table(values);
    csv << "ESS," << '"' << fmt(t.mean) << " (" << fmt(t.q025) << ", " << fmt(t.q975) << ")\"\n";
    csv << "ESS=1," << fmt(100.0 * t.fraction_one) << "%\n";
  }
  if (o.out.empty()) {
    report << csv.str();
  } else {
    write_file(o.out, csv.str());
  }
  return kExitOk;
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Combinatorial SMC and particle Gibbs for phylogenetics"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "simulate a tree and an alignment");
  std::size_t taxa_n = 0, sites = 0;
  double sim_kappa = 2.0, sim_lambda0 = 10.0, sim_lambda = 10.0;
  std::uint64_t sim_seed = 1;
  bool sim_nonclock = false;
  std::string sim_out = ".";
  sim->add_option("--taxa", taxa_n, "number of taxa")->required();
  sim->add_option("--sites", sites, "number of sites")->required();
  sim->add_option("--kappa", sim_kappa, "K2P kappa");
  sim->add_option("--lambda0", sim_lambda0, "clock coalescent rate multiplier");
  sim->add_option("--lambda", sim_lambda, "non-clock branch length rate");
  sim->add_flag("--non-clock", sim_nonclock, "simulate a non-clock tree");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out-dir", sim_out, "output directory");

  auto* inf = app.add_subcommand("infer", "run a sampler on an alignment");
  InferOptions io;
  io.threads = default_thread_count();
  bool nonclock = false, clockflag = false;
  inf->add_option("--method", io.method, "csmc, csmc-rdoup, pg, pg-rdoup, pgas or ipmcmc");
  inf->add_option("--in", io.input, "alignment (FASTA or PHYLIP)")->required();
  inf->add_option("--out-dir", io.out_dir, "output directory");
  inf->add_option("--particles", io.particles, "particles per SMC");
  auto* iter_opt = inf->add_option("--iterations", io.iterations, "MCMC iterations");
  inf->add_option("--ess-threshold", io.epsilon, "resample when rESS falls below this");
  inf->add_flag("--clock", clockflag, "clock trees (default)");
  inf->add_flag("--non-clock", nonclock, "non-clock trees");
  inf->add_option("--mu0", io.mu0, "rate of the exponential kappa prior");
  inf->add_option("--lambda", io.lambda, "non-clock branch length rate");
  inf->add_option("--lambda0", io.lambda0, "clock coalescent rate multiplier");
  inf->add_option("--mh-a", io.mh_a, "kappa multiplier bound");
  auto* kappa_opt = inf->add_option("--kappa", io.kappa, "kappa (SMC) or initial kappa (chains)");
  auto* nodes_opt = inf->add_option("--nodes", io.nodes, "IPMCMC nodes M");
  auto* cond_opt = inf->add_option("--conditional", io.conditional, "IPMCMC conditional nodes P");
  inf->add_option("--threads", io.threads, "worker threads");
  inf->add_option("--seed", io.seed, "random seed");
  inf->add_option("--burn-in", io.burn_in, "fraction of the chain discarded");
  inf->add_option("--resampling", io.resampling, "stratified or multinomial");
  inf->add_option("--proposal", io.proposal, "vanilla or rdoup (pgas, ipmcmc)");
  inf->add_flag("--quiet", io.quiet, "no progress lines");

  auto* sum = app.add_subcommand("summarize", "summarize sampled trees and traces");
  SummarizeOptions so;
  bool sum_nonclock = false;
  sum->add_option("--trees", so.trees, "trees.nwk");
  sum->add_option("--truth", so.truth, "true tree (Newick)");
  sum->add_option("--alignment", so.alignment, "alignment for the consensus log-likelihood");
  auto* sum_kappa = sum->add_option("--kappa", so.kappa, "kappa for the consensus log-likelihood");
  sum->add_option("--trace", so.trace, "trace.csv");
  sum->add_option("--out", so.out, "report file (default stdout)");
  sum->add_option("--consensus-out", so.consensus_out, "write the consensus tree here");
  sum->add_flag("--non-clock", sum_nonclock, "use unrooted bipartitions for the consensus");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (sim->parsed()) {
      return cmd_simulate(taxa_n, sites, sim_kappa, sim_lambda0, sim_lambda, !sim_nonclock,
                          sim_seed, sim_out);
    }
    if (inf->parsed()) {
      if (nonclock && clockflag) throw Error(ErrorKind::kUsage, "--clock and --non-clock conflict");
      io.clock = !nonclock;
      io.iterations_set = iter_opt->count() > 0;
      io.kappa_set = kappa_opt->count() > 0;
      io.nodes_set = nodes_opt->count() > 0 || cond_opt->count() > 0;
      return cmd_infer(io);
    }
    so.kappa_set = sum_kappa->count() > 0;
    so.clock = !sum_nonclock;
    return cmd_summarize(so, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kUsage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace phylosmc::cli
