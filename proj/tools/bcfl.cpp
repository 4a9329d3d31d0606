#include <CLI11.hpp>

#include <iostream>

#include "bcfl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bcfl: federated learning with encrypted model verification and a proof-of-work ledger"};
  app.require_subcommand(1);

  bcfl::RunOptions run;
  uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config");
  run_cmd->add_option("--config", run.config_path, "experiment config (JSON)")->required()->envname("BCFL_CONFIG");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "override seeds.master")->envname("BCFL_SEED");
  run_cmd->add_option("--out-dir", run.out_dir, "artifact directory (default runs/<name>-seed<seed>)")
      ->envname("BCFL_OUT_DIR");
  run_cmd->add_flag("--plaintext-debug", run.plaintext_debug, "verify and aggregate in the clear")
      ->envname("BCFL_PLAINTEXT_DEBUG");

  bcfl::SelftestOptions self;
  auto* self_cmd = app.add_subcommand("selftest", "brute-force protocol checks");
  self_cmd->add_option("--seed", self.seed, "randomness seed");
  self_cmd->add_option("--inject-fault", self.inject_fault, "perturb one suite (sharing, dcf, beaver)")
      ->group("");  // test hook, hidden from help

  std::string action, chain_path;
  auto* chain_cmd = app.add_subcommand("chain", "inspect a chain file");
  chain_cmd->add_option("action", action, "dump or verify")->required()->check(CLI::IsMember({"dump", "verify"}));
  chain_cmd->add_option("path", chain_path, "chain.bin path")->required();

  bcfl::BenchOptions bench;
  std::string bench_config;
  auto* bench_cmd = app.add_subcommand("bench", "ledger deploy/verify timing versus node count (CSV)");
  bench_cmd->add_option("--config", bench_config, "config supplying model shape and difficulty");
  bench_cmd->add_option("--nodes", bench.nodes, "node counts")->delimiter(',');
  bench_cmd->add_option("--runs", bench.runs, "runs per node count (median reported)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      if (*seed_opt) run.seed = seed;
      return bcfl::cmd_run(run, std::cout, std::cerr);
    }
    if (*self_cmd) return bcfl::cmd_selftest(self, std::cout);
    if (*chain_cmd) return bcfl::cmd_chain(action, chain_path, std::cout, std::cerr);
    if (*bench_cmd) return bcfl::cmd_bench(bench_config, bench, std::cout, std::cerr);
  } catch (const bcfl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return bcfl::kExitFailure;
  }
  return bcfl::kExitFailure;
}
