#include <iostream>

#include <CLI11.hpp>

#include "pmopt/runner.hpp"

int main(int argc, char** argv) {
  pmopt::cli::RunManifest m;
  CLI::App cli{"Preventive-maintenance schedule optimizer for a fleet sharing a spare-parts stock"};
  cli.add_option("--config", m.config_path, "System configuration (JSON)")->required();
  cli.add_option("--mode", m.mode, "simulate | optimize-app | optimize-direct | evaluate | tune")
      ->required()
      ->check(CLI::IsMember(pmopt::cli::modes()));
  cli.add_option("--seed", m.seed, "Seed of every random stream");
  cli.add_option("--out", m.out_dir, "Output directory");
  cli.add_option("--iterations", m.iterations, "Fixed-point iterations M");
  cli.add_option("--budget", m.budget,
                 "Evaluations per subproblem and iteration (optimize-app, tune) or in total (optimize-direct)");
  cli.add_option("--scenarios", m.scenarios, "Optimization scenarios (default: Q from the config)");
  cli.add_option("--validation-scenarios", m.validation_scenarios, "Exact-dynamics validation scenarios");
  cli.add_option("--params", m.params_path, "APP parameter file (JSON)");
  cli.add_option("--strategy", m.strategy_path, "Strategy CSV to simulate, evaluate or start from");
  cli.add_option("--lhs-count", m.lhs_count, "Latin hypercube samples for tune");
  cli.add_option("--lhs-restarts", m.lhs_restarts, "Maximin restarts of the Latin hypercube design");
  cli.add_option("--threads", m.threads, "Worker threads (0 = hardware concurrency)");
  cli.add_flag("--record-timing", m.record_timing, "Add wall-clock seconds to history.csv");
  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? 0 : pmopt::cli::kConfigError;
  }
  return pmopt::cli::run(m, std::cout, std::cerr);
}
