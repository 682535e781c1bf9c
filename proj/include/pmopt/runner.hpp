#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pmopt/app.hpp"
#include "pmopt/evaluation.hpp"
#include "pmopt/io.hpp"
#include "pmopt/tune.hpp"

namespace pmopt::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDimensionError = 3,
  kIoError = 4,
};

struct RunManifest {
  std::string config_path;
  std::string mode;  // simulate | optimize-app | optimize-direct | evaluate | tune
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> budget;  // per subproblem for optimize-app, total for optimize-direct
  std::optional<std::size_t> scenarios;
  std::optional<std::size_t> validation_scenarios;
  std::optional<std::string> params_path;
  std::optional<std::string> strategy_path;
  std::size_t lhs_count = 8;
  std::size_t lhs_restarts = 10;
  std::size_t threads = 1;
  bool record_timing = false;
};

inline const std::vector<std::string>& modes() {
  static const std::vector<std::string> m{"simulate", "optimize-app", "optimize-direct", "evaluate", "tune"};
  return m;
}

namespace detail {

inline app::APPParams resolve_params(const RunManifest& m) {
  app::APPParams p = m.params_path ? io::load_params(*m.params_path) : app::APPParams::reference();
  if (m.iterations) p.iterations = *m.iterations;
  if (m.budget && m.mode != "optimize-direct") p.subproblem_budget = *m.budget;
  p.validate();
  return p;
}

inline std::vector<Scenario> optimization_scenarios(const SystemConfig& cfg, const RunManifest& m) {
  return eval::generate_scenarios(cfg.n, cfg.horizon, m.scenarios.value_or(cfg.scenario_count), m.seed);
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m, const char* dynamics,
                           const io::json& extra = io::json::object()) {
  io::json j = {{"mode", m.mode}, {"config", m.config_path}, {"seed", m.seed}, {"objective_dynamics", dynamics}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  io::write_text(dir / "manifest.json", j.dump(2) + "\n");
}

inline int execute(const RunManifest& m, std::ostream& log) {
  bool known = false;
  for (const auto& mode : modes()) known = known || mode == m.mode;
  if (!known) throw ConfigError("unknown mode '" + m.mode + "'");
  if (m.config_path.empty()) throw ConfigError("--config is required");
  const SystemConfig cfg = io::load_config(m.config_path);
  const std::filesystem::path out(m.out_dir);
  io::ensure_directory(out);

  if (m.mode == "simulate") {
    const Strategy u = m.strategy_path ? io::read_strategy(*m.strategy_path) : Strategy(cfg.n, cfg.horizon);
    check_dimensions(cfg, u);
    const Scenario w = eval::scenario_at(cfg.n, cfg.horizon, m.seed, 0);
    const Trajectory traj = simulate(cfg, u, w);
    const auto cost = total_cost(cfg, traj, u);
    io::write_text(out / "trajectory.csv", io::trajectory_to_csv(traj, cfg));
    write_manifest(out, m, "exact",
                   {{"cost", {{"pm", cost.pm}, {"cm", cost.cm}, {"fo", cost.fo}, {"total", cost.total}}}});
    log << "simulate: total cost " << io::fmt(cost.total) << " k€\n";
    return kOk;
  }

  if (m.mode == "optimize-app") {
    const auto p = resolve_params(m);
    const auto scenarios = optimization_scenarios(cfg, m);
    app::APPOptions opt;
    opt.threads = m.threads;
    opt.on_iteration = [&](const app::HistoryRecord& h) {
      log << "iteration " << h.k << ": alpha " << io::fmt(h.schedule.alpha) << ", relaxed SAA "
          << io::fmt(h.relaxed_saa) << ", exact SAA (projected) " << io::fmt(h.exact_saa) << "\n";
    };
    const auto res = app::app_fixed_point(cfg, p, scenarios, m.seed, opt);
    io::write_strategy(out / "strategy.csv", res.strategy, cfg.pm_threshold);
    io::write_strategy(out / "strategy_projected.csv", eval::project_strategy(res.strategy, cfg.pm_threshold),
                       cfg.pm_threshold);
    io::write_text(out / "history.csv", io::history_to_csv(res.history, m.record_timing));
    io::write_text(out / "params.json", io::params_to_json(p).dump(2) + "\n");
    write_manifest(out, m, "relaxed", {{"scenarios", scenarios.size()}});
    return kOk;
  }

  if (m.mode == "optimize-direct") {
    // equal total evaluations with the decomposition arm unless a total is given
    const auto p = resolve_params(m);
    const std::size_t total = m.budget.value_or(p.iterations * cfg.n * p.subproblem_budget);
    const auto scenarios = optimization_scenarios(cfg, m);
    const Strategy start = m.strategy_path ? io::read_strategy(*m.strategy_path) : Strategy(cfg.n, cfg.horizon);
    dsearch::SearchBudget budget;
    budget.max_evals = std::max<std::size_t>(1, total);
    budget.seed = derive_seed(m.seed, 0xd1ec7ull);
    const auto res = app::direct_search(cfg, scenarios, start, budget);
    Strategy u(cfg.n, cfg.horizon);
    std::copy(res.x.begin(), res.x.end(), u.controls.flat().begin());
    io::write_strategy(out / "strategy.csv", u, cfg.pm_threshold);
    io::write_strategy(out / "strategy_projected.csv", eval::project_strategy(u, cfg.pm_threshold), cfg.pm_threshold);
    write_manifest(out, m, "exact",
                   {{"scenarios", scenarios.size()}, {"evaluations", res.evals}, {"exact_saa", res.value}});
    log << "optimize-direct: exact SAA " << io::fmt(res.value) << " after " << res.evals << " evaluations\n";
    return kOk;
  }

  if (m.mode == "evaluate") {
    if (!m.strategy_path) throw ConfigError("evaluate needs --strategy");
    const Strategy u = io::read_strategy(*m.strategy_path);
    check_dimensions(cfg, u);
    eval::EvaluationOptions eo;
    eo.threads = m.threads;
    const std::size_t count = m.validation_scenarios.value_or(100000);
    const auto report = eval::evaluate_strategy(u, eval::validation_seed(m.seed), count, cfg, eo);
    io::write_report(out, report);
    write_manifest(out, m, "exact", {{"validation_scenarios", count}});
    log << "evaluate: mean cost " << io::fmt(report.mean_cost) << " k€ over " << count << " scenarios\n";
    return kOk;
  }

  // tune
  app::APPParams base = resolve_params(m);
  if (!m.iterations) base.iterations = 5;
  if (!m.budget) base.subproblem_budget = 100;
  const auto samples = tune::lhs_sample(tune::ParamBounds::reference(), m.lhs_count, m.seed, m.lhs_restarts, base);
  const auto scenarios = optimization_scenarios(cfg, m);
  tune::TuneOptions to;
  to.threads = m.threads;
  to.seed = m.seed;
  to.validation_seed = eval::validation_seed(m.seed);
  to.validation_scenarios = m.validation_scenarios.value_or(1000);
  const auto res = tune::tune(cfg, samples, scenarios, to);
  io::write_text(out / "leaderboard.csv", io::leaderboard_to_csv(res));
  io::write_text(out / "best_params.json", io::params_to_json(res.best).dump(2) + "\n");
  write_manifest(out, m, "relaxed", {{"samples", samples.size()}, {"best_sample", res.best_index}});
  log << "tune: best sample " << res.best_index << " with mean cost " << io::fmt(res.leaderboard.front().mean_cost)
      << "\n";
  return kOk;
}

}  // namespace detail

/// Runs one subcommand; errors are reported on `err` and mapped to exit codes.
inline int run(const RunManifest& m, std::ostream& log, std::ostream& err) {
  try {
    return detail::execute(m, log);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DimensionError& e) {
    err << "dimension mismatch: " << e.what() << "\n";
    return kDimensionError;
  } catch (const io::IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace pmopt::cli
