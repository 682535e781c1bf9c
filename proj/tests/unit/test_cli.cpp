#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "pmopt/io.hpp"
#include "pmopt/runner.hpp"
#include "pmopt/tune.hpp"

using namespace pmopt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pmopt_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) { return io::read_text(p); }

fs::path write_tiny_config(const fs::path& dir, const std::string& body = "") {
  const auto path = dir / "tiny.json";
  io::write_text(path, body.empty() ? R"({"n": 3, "T": 6, "D": 2, "s": 1, "Q": 4,
    "components": {"C_P": 50, "C_C": 200, "weibull_shape": 3, "weibull_scale": 5}})"
                                    : body);
  return path;
}

cli::RunManifest manifest(const fs::path& config, const std::string& mode, const fs::path& out) {
  cli::RunManifest m;
  m.config_path = config.string();
  m.mode = mode;
  m.out_dir = out.string();
  m.seed = 7;
  return m;
}

int run(const cli::RunManifest& m) {
  std::ostringstream log, err;
  return cli::run(m, log, err);
}

}  // namespace

TEST(Config, BroadcastAndArrayComponentsParse) {
  const auto cfg = io::parse_config(io::json::parse(R"({"n": 2, "T": 5, "D": 1, "s": 0,
      "components": [{"C_P": 10}, {"weibull_scale": 7}]})"));
  EXPECT_EQ(cfg.n, 2u);
  EXPECT_EQ(cfg.components[0].pm_cost, 10.0);
  EXPECT_EQ(cfg.components[1].weibull_scale, 7.0);
  EXPECT_EQ(cfg.pm_threshold, 0.9);
  const auto round = io::parse_config(io::config_to_json(cfg));
  EXPECT_EQ(io::config_to_json(round), io::config_to_json(cfg));
}

TEST(Config, ShippedConfigsLoad) {
  const fs::path root = PMOPT_SOURCE_DIR;
  const auto c1 = io::load_config(root / "configs/case1.json");
  EXPECT_EQ(c1.n, 80u);
  EXPECT_EQ(c1.initial_stock, 16u);
  const auto c2 = io::load_config(root / "configs/case2.json");
  EXPECT_EQ(c2.components[0].weibull_scale, 20.0);
  EXPECT_EQ(c2.scenario_count, 300u);
  const auto s = io::load_config(root / "configs/small10.json");
  EXPECT_EQ(s.n, 10u);
  EXPECT_EQ(s.initial_stock, 2u);
  EXPECT_EQ(io::load_params(root / "configs/params_reference.json"), app::APPParams::reference());
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_THROW(io::parse_config(io::json::parse(R"({"n": 2, "T": 5, "D": 1, "s": 0, "components": {}, "bogus": 1})")),
               ConfigError);
  EXPECT_THROW(io::parse_config(io::json::parse(R"({"n": 2, "T": 5, "D": 1, "components": {}})")), ConfigError);
  EXPECT_THROW(io::parse_config(io::json::parse(R"({"n": 2, "T": 5, "D": 1, "s": 0, "components": [{}]})")),
               ConfigError);
  EXPECT_THROW(io::parse_config(io::json::parse(R"({"n": 2, "T": 5, "D": 1, "s": 0, "nu": 1.5, "components": {}})")),
               ConfigError);
  EXPECT_THROW(io::parse_config(io::json::parse(R"({"n": "two", "T": 5, "D": 1, "s": 0, "components": {}})")),
               ConfigError);
}

TEST(Params, NamedAndArrayFormsRoundTrip) {
  app::APPParams p;
  p.gamma_u0 = 3.5;
  p.iterations = 7;
  EXPECT_EQ(io::parse_params(io::params_to_json(p)), p);
  const auto a = io::parse_params(io::json::parse(R"({"p": [1, 2, 3, 4, 5, 6]})"));
  EXPECT_EQ(tune::to_array(a), (std::array<double, 6>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(io::parse_params(io::json::parse(R"({"p": [1, 2]})")), ConfigError);
  EXPECT_THROW(io::parse_params(io::json::parse(R"({"gamma_u0": -1})")), ConfigError);
}

TEST(StrategyCsv, RoundTripsExactly) {
  Strategy u(3, 4);
  u(0, 0) = 1.0;
  u(1, 2) = 0.1234567890123456;
  u(2, 3) = 1e-300;
  const auto text = io::strategy_to_csv(u, 0.9);
  EXPECT_EQ(text.substr(0, 18), "# n=3 T=4 nu=0.9\nt");
  EXPECT_EQ(io::parse_strategy(text), u);
}

TEST(StrategyCsv, MalformedFilesAreRejected) {
  EXPECT_THROW(io::parse_strategy(""), ConfigError);
  EXPECT_THROW(io::parse_strategy("n=3\n"), ConfigError);
  EXPECT_THROW(io::parse_strategy("# n=2 T=2 nu=0.9\nt,u0,u1\n0,0,0\n"), DimensionError);
  EXPECT_THROW(io::parse_strategy("# n=2 T=1 nu=0.9\nt,u0,u1\n0,0\n"), DimensionError);
  EXPECT_THROW(io::parse_strategy("# n=1 T=1 nu=0.9\nt,u0\n0,1.5\n"), ConfigError);
  EXPECT_THROW(io::parse_strategy("# n=1 T=1 nu=0.9\nt,u0\n0,x\n"), ConfigError);
  EXPECT_THROW(io::parse_strategy("# n=1 T=1 nu=0.9\nt,u0\n0,0\n1,0\n"), DimensionError);
}

TEST(Runner, SimulateIsReproducibleByteForByte) {
  const auto dir = scratch("sim");
  const auto cfg = write_tiny_config(dir);
  ASSERT_EQ(run(manifest(cfg, "simulate", dir / "a")), cli::kOk);
  ASSERT_EQ(run(manifest(cfg, "simulate", dir / "b")), cli::kOk);
  EXPECT_EQ(slurp(dir / "a/trajectory.csv"), slurp(dir / "b/trajectory.csv"));
  const auto manifest_json = io::json::parse(slurp(dir / "a/manifest.json"));
  EXPECT_EQ(manifest_json["objective_dynamics"], "exact");
  EXPECT_FALSE(manifest_json.contains("threads"));
  // header plus T+1 rows
  const auto traj = slurp(dir / "a/trajectory.csv");
  EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), 8);
}

TEST(Runner, OptimizeDirectWithBudgetOneReturnsTheStart) {
  const auto dir = scratch("direct");
  const auto cfg = write_tiny_config(dir);
  Strategy start(3, 6);
  start(1, 3) = 1.0;
  io::write_strategy(dir / "start.csv", start, 0.9);
  auto m = manifest(cfg, "optimize-direct", dir / "out");
  m.budget = 1;
  m.strategy_path = (dir / "start.csv").string();
  ASSERT_EQ(run(m), cli::kOk);
  EXPECT_EQ(io::read_strategy(dir / "out/strategy.csv"), start);
  EXPECT_EQ(io::json::parse(slurp(dir / "out/manifest.json"))["evaluations"], 1);
}

TEST(Runner, OptimizeAppWritesStrategyHistoryAndManifest) {
  const auto dir = scratch("app");
  const auto cfg = write_tiny_config(dir);
  auto m = manifest(cfg, "optimize-app", dir / "out");
  m.iterations = 2;
  m.budget = 30;
  ASSERT_EQ(run(m), cli::kOk);
  const auto u = io::read_strategy(dir / "out/strategy.csv");
  EXPECT_EQ(u.components(), 3u);
  const auto projected = io::read_strategy(dir / "out/strategy_projected.csv");
  for (double v : projected.controls.flat()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  const auto hist = slurp(dir / "out/history.csv");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 3);
  EXPECT_EQ(hist.find("wall_seconds"), std::string::npos);
  EXPECT_EQ(io::json::parse(slurp(dir / "out/manifest.json"))["objective_dynamics"], "relaxed");

  m.out_dir = (dir / "timed").string();
  m.record_timing = true;
  ASSERT_EQ(run(m), cli::kOk);
  EXPECT_NE(slurp(dir / "timed/history.csv").find("wall_seconds"), std::string::npos);
}

TEST(Runner, EvaluateWritesTheReportSchema) {
  const auto dir = scratch("eval");
  const auto cfg = write_tiny_config(dir);
  io::write_strategy(dir / "u.csv", Strategy(3, 6), 0.9);
  auto m = manifest(cfg, "evaluate", dir / "out");
  m.strategy_path = (dir / "u.csv").string();
  m.validation_scenarios = 500;
  ASSERT_EQ(run(m), cli::kOk);
  const auto r = io::json::parse(slurp(dir / "out/report.json"));
  for (const char* key : {"mean_cost", "quantiles", "breakdown", "mean_pms_per_component",
                          "mean_failures_per_component", "forced_outages", "scheduled_pms"})
    EXPECT_TRUE(r.contains(key)) << key;
  EXPECT_EQ(r["scenarios"], 500);
  EXPECT_EQ(r["dynamics"], "exact");
  EXPECT_EQ(r["forced_outages"]["denominator"], 500);
  EXPECT_EQ(r["quantiles"].size(), 7u);
  for (const char* f : {"quantiles.csv", "cumulative_pms.csv", "empty_stock.csv", "cost_histogram.csv"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
}

TEST(Runner, OutputsDoNotDependOnThreadCount) {
  const auto dir = scratch("threads");
  const auto cfg = write_tiny_config(dir);
  for (const std::string mode : {"optimize-app", "evaluate"}) {
    io::write_strategy(dir / "u.csv", Strategy(3, 6, 1.0), 0.9);
    auto a = manifest(cfg, mode, dir / (mode + "1"));
    a.iterations = 2;
    a.budget = 20;
    a.validation_scenarios = 600;
    a.strategy_path = (dir / "u.csv").string();
    auto b = a;
    b.out_dir = (dir / (mode + "3")).string();
    b.threads = 3;
    ASSERT_EQ(run(a), cli::kOk);
    ASSERT_EQ(run(b), cli::kOk);
    for (const auto& entry : fs::directory_iterator(a.out_dir))
      EXPECT_EQ(slurp(entry.path()), slurp(fs::path(b.out_dir) / entry.path().filename())) << entry.path();
  }
}

TEST(Runner, ExitCodes) {
  const auto dir = scratch("codes");
  const auto cfg = write_tiny_config(dir);
  EXPECT_EQ(run(manifest(dir / "missing.json", "simulate", dir / "o")), cli::kIoError);
  const auto bad = dir / "bad.json";
  io::write_text(bad, "{ not json");
  EXPECT_EQ(run(manifest(bad, "simulate", dir / "o")), cli::kConfigError);
  EXPECT_EQ(run(manifest(cfg, "dance", dir / "o")), cli::kConfigError);
  auto no_strategy = manifest(cfg, "evaluate", dir / "o");
  EXPECT_EQ(run(no_strategy), cli::kConfigError);

  io::write_strategy(dir / "wide.csv", Strategy(4, 6), 0.9);
  auto wide = manifest(cfg, "evaluate", dir / "o");
  wide.strategy_path = (dir / "wide.csv").string();
  EXPECT_EQ(run(wide), cli::kDimensionError);

  io::write_text(dir / "blocker", "file in the way");
  EXPECT_EQ(run(manifest(cfg, "simulate", dir / "blocker" / "sub")), cli::kIoError);
}

TEST(Binary, ParseErrorsAndHelp) {
  const std::string exe = PMOPT_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status(exe + " --help"), 0);
  EXPECT_EQ(status(exe + " --mode simulate"), cli::kConfigError);
  EXPECT_EQ(status(exe + " --config x.json --mode fly"), cli::kConfigError);
  const auto dir = scratch("bin");
  const auto cfg = write_tiny_config(dir);
  EXPECT_EQ(status(exe + " --config " + cfg.string() + " --mode simulate --out " + (dir / "o").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "o/trajectory.csv"));
}

TEST(Tune, LatinHypercubeIsStratified) {
  for (std::size_t count : {1u, 5u, 12u}) {
    const auto pts = tune::lhs_unit_design(count, 3, 4);
    ASSERT_EQ(pts.size(), count);
    for (std::size_t k = 0; k < tune::kParamCount; ++k) {
      std::set<std::size_t> strata;
      for (const auto& p : pts) {
        ASSERT_GE(p[k], 0.0);
        ASSERT_LT(p[k], 1.0);
        strata.insert(static_cast<std::size_t>(p[k] * static_cast<double>(count)));
      }
      EXPECT_EQ(strata.size(), count) << "coordinate " << k;
    }
  }
  EXPECT_THROW(tune::lhs_unit_design(0, 1), std::invalid_argument);
}

TEST(Tune, RestartsNeverShrinkTheMinimumDistance) {
  const auto one = tune::lhs_unit_design(10, 5, 1);
  const auto many = tune::lhs_unit_design(10, 5, 20);
  EXPECT_GE(tune::min_pairwise_distance(many), tune::min_pairwise_distance(one));
  EXPECT_EQ(tune::lhs_unit_design(10, 5, 20), many);
}

TEST(Tune, SamplesRespectTheReferenceBox) {
  const auto box = tune::ParamBounds::reference();
  for (const auto& p : tune::lhs_sample(box, 16, 2, 3)) {
    const auto v = tune::to_array(p);
    for (std::size_t k = 0; k < tune::kParamCount; ++k) {
      EXPECT_GE(v[k], box.ranges[k].first);
      EXPECT_LE(v[k], box.ranges[k].second);
    }
  }
}

TEST(Tune, LeaderboardIsSortedAndBestIsItsHead) {
  const auto cfg = SystemConfig::homogeneous(3, 6, 2, 1, {50.0, 200.0, 3.0, 5.0});
  const auto sc = eval::generate_scenarios(3, 6, 3, 1);
  app::APPParams base;
  base.iterations = 2;
  base.subproblem_budget = 20;
  const auto samples = tune::lhs_sample(tune::ParamBounds::reference(), 4, 9, 2, base);
  tune::TuneOptions opt;
  opt.validation_scenarios = 200;
  const auto r = tune::tune(cfg, samples, sc, opt);
  ASSERT_EQ(r.leaderboard.size(), 4u);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_LE(r.leaderboard[k - 1].mean_cost, r.leaderboard[k].mean_cost);
  EXPECT_EQ(r.best, samples[r.best_index]);
  EXPECT_EQ(r.leaderboard.front().index, r.best_index);
  opt.threads = 2;
  const auto r2 = tune::tune(cfg, samples, sc, opt);
  EXPECT_EQ(r2.best_index, r.best_index);
  EXPECT_EQ(r2.leaderboard.front().mean_cost, r.leaderboard.front().mean_cost);
}

TEST(Tune, SingleSampleWins) {
  const auto cfg = SystemConfig::homogeneous(2, 4, 2, 1);
  const auto sc = eval::generate_scenarios(2, 4, 2, 1);
  app::APPParams p;
  p.iterations = 1;
  p.subproblem_budget = 5;
  const std::vector<app::APPParams> one{p};
  tune::TuneOptions opt;
  opt.validation_scenarios = 50;
  const auto r = tune::tune(cfg, one, sc, opt);
  EXPECT_EQ(r.best_index, 0u);
  EXPECT_EQ(r.best, p);
}

TEST(Runner, TuneModeWritesLeaderboard) {
  const auto dir = scratch("tune");
  const auto cfg = write_tiny_config(dir);
  auto m = manifest(cfg, "tune", dir / "out");
  m.lhs_count = 3;
  m.iterations = 1;
  m.budget = 10;
  m.validation_scenarios = 100;
  ASSERT_EQ(run(m), cli::kOk);
  const auto board = slurp(dir / "out/leaderboard.csv");
  EXPECT_EQ(std::count(board.begin(), board.end(), '\n'), 4);
  EXPECT_NO_THROW(io::load_params(dir / "out/best_params.json"));
}
