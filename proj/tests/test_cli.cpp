#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using phylosmc::cli::read_file;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phylosmc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "phylosmc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o;
  std::ostringstream e;
  const int rc = phylosmc::cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return rc;
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::string simulate(const fs::path& dir, int taxa, int sites, int seed) {
  EXPECT_EQ(run({"simulate", "--taxa", std::to_string(taxa), "--sites", std::to_string(sites),
                 "--seed", std::to_string(seed), "--out-dir", dir.string()}),
            0);
  return (dir / "alignment.fasta").string();
}

}  // namespace

TEST(Cli, SimulateIsDeterministic) {
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  simulate(a, 10, 500, 1);
  simulate(b, 10, 500, 1);
  for (const char* f : {"alignment.fasta", "tree.nwk", "manifest.json"}) {
    EXPECT_EQ(read_file((a / f).string()), read_file((b / f).string())) << f;
  }
  const auto m = nlohmann::json::parse(read_file((a / "manifest.json").string()));
  EXPECT_EQ(m["taxa"], 10);
  EXPECT_EQ(m["sites"], 500);
  EXPECT_EQ(m["seed"], 1);
  EXPECT_EQ(m["kappa"], 2.0);
  EXPECT_EQ(m["lambda0"], 10.0);
  EXPECT_TRUE(m.contains("lambda"));
  EXPECT_TRUE(m.contains("clock"));
  const auto aln = phylosmc::parse_fasta(read_file((a / "alignment.fasta").string()));
  EXPECT_EQ(aln.taxon_count(), 10u);
  EXPECT_EQ(aln.site_count(), 500u);
}

TEST(Cli, SimulateRejectsOneTaxon) {
  const auto d = scratch("sim_one");
  std::string err;
  EXPECT_EQ(run({"simulate", "--taxa", "1", "--sites", "10", "--out-dir", d.string()}, nullptr, &err), 2);
  EXPECT_NE(err.find("taxa"), std::string::npos);
}

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"infer", "--bogus"}), 2);
  EXPECT_EQ(run({}), 2);
}

TEST(Cli, CsmcOutputs) {
  const auto d = scratch("csmc");
  const std::string in = simulate(d, 4, 50, 3);
  const auto out = d / "out";
  ASSERT_EQ(run({"infer", "--method", "csmc-rdoup", "--in", in, "--particles", "20", "--seed", "2",
                 "--out-dir", out.string()}),
            0);
  const std::string trace = read_file((out / "trace.csv").string());
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "rank,ess,rel_ess,resampled");
  EXPECT_EQ(line_count(trace), 1u + 3u);  // ranks 2..4
  EXPECT_EQ(line_count(read_file((out / "trees.nwk").string())), 20u);
  EXPECT_EQ(line_count(read_file((out / "consensus.nwk").string())), 1u);
  const auto j = nlohmann::json::parse(read_file((out / "run.json").string()));
  EXPECT_TRUE(j.contains("logZ"));
  EXPECT_TRUE(j.contains("wall_time_seconds"));
  EXPECT_TRUE(j.contains("consensus_log_likelihood"));
  EXPECT_EQ(j["config"]["method"], "csmc-rdoup");
}

TEST(Cli, ChainOutputsAndThreadDeterminism) {
  const auto d = scratch("pg");
  const std::string in = simulate(d, 5, 80, 4);
  std::string traces[2];
  std::string trees[2];
  int i = 0;
  for (const char* threads : {"1", "4"}) {
    const auto out = d / ("out" + std::string(threads));
    ASSERT_EQ(run({"infer", "--method", "pgas", "--in", in, "--particles", "16", "--iterations", "10",
                   "--seed", "5", "--threads", threads, "--quiet", "--out-dir", out.string()}),
              0);
    traces[i] = read_file((out / "trace.csv").string());
    trees[i] = read_file((out / "trees.nwk").string());
    ++i;
  }
  EXPECT_EQ(traces[0], traces[1]);
  EXPECT_EQ(trees[0], trees[1]);
  EXPECT_EQ(traces[0].substr(0, traces[0].find('\n')), "iteration,kappa,log_likelihood,ess,accepted");
  EXPECT_EQ(line_count(traces[0]), 11u);
  EXPECT_EQ(line_count(trees[0]), 5u);  // default burn-in 0.5
  const auto j = nlohmann::json::parse(read_file((d / "out1" / "run.json").string()));
  EXPECT_TRUE(j.contains("posterior_mean_kappa"));
  EXPECT_TRUE(j.contains("acceptance_rate"));
}

TEST(Cli, IpmcmcRun) {
  const auto d = scratch("ipmcmc");
  const std::string in = simulate(d, 4, 40, 6);
  const auto out = d / "out";
  ASSERT_EQ(run({"infer", "--method", "ipmcmc", "--in", in, "--particles", "8", "--iterations", "6",
                 "--nodes", "4", "--conditional", "2", "--quiet", "--out-dir", out.string()}),
            0);
  EXPECT_EQ(line_count(read_file((out / "trace.csv").string())), 7u);
  // both conditional references are kept per iteration
  EXPECT_EQ(line_count(read_file((out / "trees.nwk").string())), 6u);
}

TEST(Cli, IncompatibleFlags) {
  const auto d = scratch("flags");
  const std::string in = simulate(d, 4, 20, 7);
  const std::string o = (d / "out").string();
  EXPECT_EQ(run({"infer", "--method", "csmc", "--iterations", "5", "--in", in, "--out-dir", o}), 2);
  EXPECT_EQ(run({"infer", "--method", "pg", "--nodes", "3", "--in", in, "--out-dir", o}), 2);
  EXPECT_EQ(run({"infer", "--method", "ipmcmc", "--nodes", "2", "--conditional", "2", "--in", in,
                 "--out-dir", o}),
            2);
  EXPECT_EQ(run({"infer", "--method", "nope", "--in", in, "--out-dir", o}), 2);
  EXPECT_EQ(run({"infer", "--clock", "--non-clock", "--in", in, "--out-dir", o}), 2);
  EXPECT_EQ(run({"infer", "--in", (d / "missing.fasta").string(), "--out-dir", o}), 2);
}

TEST(Cli, SummarizeAgainstTruth) {
  const auto d = scratch("summarize");
  simulate(d, 6, 30, 8);
  const std::string tree = (d / "tree.nwk").string();
  std::ofstream(d / "trace.csv") << "iteration,kappa,log_likelihood,ess,accepted\n"
                                 << "1,2,-10,1,1\n2,2,-10,1,0\n3,2,-10,3,1\n";
  std::string out;
  ASSERT_EQ(run({"summarize", "--trees", tree, "--truth", tree, "--trace", (d / "trace.csv").string(),
                 "--alignment", (d / "alignment.fasta").string(), "--kappa", "2"},
                &out),
            0);
  const auto rf = out.find("rf_branch_score,");
  ASSERT_NE(rf, std::string::npos) << out;
  EXPECT_LT(std::stod(out.substr(rf + 16)), 1e-9);  // heights are re-derived from lengths
  EXPECT_NE(out.find("partition_metric,0\n"), std::string::npos);
  EXPECT_NE(out.find("consensus_log_likelihood,"), std::string::npos);
  EXPECT_NE(out.find("ESS,\"1.66666666667 (1, 2.9)\""), std::string::npos) << out;
  EXPECT_NE(out.find("ESS=1,66.6666666667%"), std::string::npos) << out;

  EXPECT_EQ(run({"summarize", "--trees", tree, "--kappa", "2"}), 2);
  EXPECT_EQ(run({"summarize"}), 2);
}

TEST(Cli, SummarizeTaxonMismatch) {
  const auto a = scratch("mismatch_a");
  const auto b = scratch("mismatch_b");
  simulate(a, 5, 10, 9);
  simulate(b, 6, 10, 9);
  EXPECT_EQ(run({"summarize", "--trees", (a / "tree.nwk").string(), "--truth", (b / "tree.nwk").string()}),
            1);
}
