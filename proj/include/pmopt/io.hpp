#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmopt/app.hpp"
#include "pmopt/config.hpp"
#include "pmopt/evaluation.hpp"
#include "pmopt/state.hpp"
#include "pmopt/tune.hpp"

namespace pmopt::io {

using json = nlohmann::json;

/// Raised when a file cannot be read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that round-trips the double.
inline std::string fmt(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  const auto probe = dir / ".pmopt_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + dir.string());
  }
  std::filesystem::remove(probe, ec);
}

// ---- configuration -------------------------------------------------------------

namespace detail {

template <class T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline ComponentSpec parse_component(const json& j) {
  if (!j.is_object()) throw ConfigError("component record must be an object");
  static const std::set<std::string> allowed{"C_P", "C_C", "weibull_shape", "weibull_scale"};
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown component key '" + k + "'");
  ComponentSpec c;
  if (j.contains("C_P")) c.pm_cost = get_as<double>(j, "C_P");
  if (j.contains("C_C")) c.cm_cost = get_as<double>(j, "C_C");
  if (j.contains("weibull_shape")) c.weibull_shape = get_as<double>(j, "weibull_shape");
  if (j.contains("weibull_scale")) c.weibull_scale = get_as<double>(j, "weibull_scale");
  return c;
}

}  // namespace detail

/// Keys: n, T, dt, D, s, delta, tau, nu, C_F, Q, components. `components` is either
/// one record applied to every component or an array of n records.
inline SystemConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  static const std::set<std::string> allowed{"n", "T", "dt", "D", "s", "delta", "tau", "nu", "C_F", "Q", "components"};
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown configuration key '" + k + "'");
  for (const char* req : {"n", "T", "D", "s", "components"})
    if (!j.contains(req)) throw ConfigError(std::string("missing configuration key '") + req + "'");

  auto count = [&](const char* key) {
    const auto v = detail::get_as<long long>(j, key);
    if (v < 0) throw ConfigError(std::string("'") + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
  };
  SystemConfig cfg;
  cfg.n = count("n");
  cfg.horizon = count("T");
  cfg.delay = count("D");
  cfg.initial_stock = count("s");
  if (j.contains("Q")) cfg.scenario_count = count("Q");
  if (j.contains("dt")) cfg.dt = detail::get_as<double>(j, "dt");
  if (j.contains("delta")) cfg.delta = detail::get_as<double>(j, "delta");
  if (j.contains("tau")) cfg.discount_rate = detail::get_as<double>(j, "tau");
  if (j.contains("nu")) cfg.pm_threshold = detail::get_as<double>(j, "nu");
  if (j.contains("C_F")) cfg.forced_outage_cost = detail::get_as<double>(j, "C_F");

  const json& comps = j.at("components");
  if (comps.is_object()) {
    cfg.components.assign(cfg.n, detail::parse_component(comps));
  } else if (comps.is_array()) {
    for (const auto& c : comps) cfg.components.push_back(detail::parse_component(c));
  } else {
    throw ConfigError("'components' must be an object or an array");
  }
  cfg.validate();
  return cfg;
}

inline SystemConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed configuration " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

inline json config_to_json(const SystemConfig& cfg) {
  json comps = json::array();
  for (const auto& c : cfg.components)
    comps.push_back({{"C_P", c.pm_cost}, {"C_C", c.cm_cost}, {"weibull_shape", c.weibull_shape},
                     {"weibull_scale", c.weibull_scale}});
  return {{"n", cfg.n},     {"T", cfg.horizon},          {"dt", cfg.dt},           {"D", cfg.delay},
          {"s", cfg.initial_stock}, {"delta", cfg.delta}, {"tau", cfg.discount_rate}, {"nu", cfg.pm_threshold},
          {"C_F", cfg.forced_outage_cost}, {"Q", cfg.scenario_count}, {"components", comps}};
}

// ---- APP parameters --------------------------------------------------------------

inline json params_to_json(const app::APPParams& p) {
  return {{"gamma_u0", p.gamma_u0}, {"r_x", p.r_x},         {"r_s", p.r_s},
          {"d_gamma", p.d_gamma},   {"alpha0", p.alpha0},   {"d_alpha", p.d_alpha},
          {"iterations", p.iterations}, {"subproblem_budget", p.subproblem_budget}};
}

/// Named keys, or "p": [γ_u⁰, r_x, r_s, Δγ, α⁰, Δα]; missing entries keep their defaults.
inline app::APPParams parse_params(const json& j) {
  if (!j.is_object()) throw ConfigError("parameter file must be a JSON object");
  static const std::set<std::string> allowed{"gamma_u0", "r_x", "r_s", "d_gamma", "alpha0",
                                             "d_alpha", "iterations", "subproblem_budget", "p"};
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown parameter key '" + k + "'");
  app::APPParams p;
  if (j.contains("p")) {
    const auto v = detail::get_as<std::vector<double>>(j, "p");
    if (v.size() != tune::kParamCount) throw ConfigError("'p' must have 6 entries");
    std::array<double, tune::kParamCount> a{};
    std::copy(v.begin(), v.end(), a.begin());
    p = tune::from_array(a, p);
  }
  if (j.contains("gamma_u0")) p.gamma_u0 = detail::get_as<double>(j, "gamma_u0");
  if (j.contains("r_x")) p.r_x = detail::get_as<double>(j, "r_x");
  if (j.contains("r_s")) p.r_s = detail::get_as<double>(j, "r_s");
  if (j.contains("d_gamma")) p.d_gamma = detail::get_as<double>(j, "d_gamma");
  if (j.contains("alpha0")) p.alpha0 = detail::get_as<double>(j, "alpha0");
  if (j.contains("d_alpha")) p.d_alpha = detail::get_as<double>(j, "d_alpha");
  if (j.contains("iterations")) p.iterations = detail::get_as<std::size_t>(j, "iterations");
  if (j.contains("subproblem_budget")) p.subproblem_budget = detail::get_as<std::size_t>(j, "subproblem_budget");
  p.validate();
  return p;
}

inline app::APPParams load_params(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed parameter file " + path.string() + ": " + e.what());
  }
  return parse_params(j);
}

// ---- strategies ----------------------------------------------------------------

/// T rows by n columns; the first line records n, T and ν.
inline std::string strategy_to_csv(const Strategy& u, double nu) {
  std::ostringstream out;
  out << "# n=" << u.components() << " T=" << u.horizon() << " nu=" << fmt(nu) << "\n";
  out << "t";
  for (std::size_t i = 0; i < u.components(); ++i) out << ",u" << i;
  out << "\n";
  for (std::size_t t = 0; t < u.horizon(); ++t) {
    out << t;
    for (std::size_t i = 0; i < u.components(); ++i) out << "," << fmt(u(i, t));
    out << "\n";
  }
  return out.str();
}

inline void write_strategy(const std::filesystem::path& path, const Strategy& u, double nu) {
  write_text(path, strategy_to_csv(u, nu));
}

inline Strategy parse_strategy(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty strategy file");
  std::size_t n = 0, T = 0;
  double nu = 0.0;
  if (std::sscanf(line.c_str(), "# n=%zu T=%zu nu=%lf", &n, &T, &nu) != 3)
    throw ConfigError("strategy header must read '# n=<n> T=<T> nu=<nu>'");
  if (!std::getline(in, line)) throw ConfigError("strategy file lacks a column header");
  Strategy u(n, T);
  for (std::size_t t = 0; t < T; ++t) {
    if (!std::getline(in, line)) throw DimensionError("strategy file has fewer than T rows");
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(row, cell, ',')) throw DimensionError("strategy row " + std::to_string(t) + " is short");
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ConfigError("bad strategy entry '" + cell + "'");
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("strategy entries must lie in [0,1]");
      u(i, t) = v;
    }
  }
  while (std::getline(in, line))
    if (!line.empty()) throw DimensionError("strategy file has more than T rows");
  return u;
}

inline Strategy read_strategy(const std::filesystem::path& path) { return parse_strategy(read_text(path)); }

// ---- trajectories and histories -----------------------------------------------

/// One row per t: stock, forced-outage flag, then regime, age, P^1..P^D and event
/// flags (p = PM, f = failure, c = CM, '-' for none) of every component.
inline std::string trajectory_to_csv(const Trajectory& traj, const SystemConfig& cfg) {
  std::ostringstream out;
  out << "t,stock,forced_outage";
  for (std::size_t i = 0; i < traj.components(); ++i) {
    out << ",E" << i << ",A" << i;
    for (std::size_t d = 0; d < cfg.delay; ++d) out << ",P" << i << "_" << d + 1;
    out << ",ev" << i;
  }
  out << "\n";
  for (std::size_t t = 0; t <= traj.horizon(); ++t) {
    out << t << "," << fmt(traj.stock(t)) << "," << (traj.forced_outage(t) ? 1 : 0);
    for (std::size_t i = 0; i < traj.components(); ++i) {
      for (double v : traj.component(t, i)) out << "," << fmt(v);
      std::string ev;
      if (traj.pm_performed(t, i)) ev += 'p';
      if (traj.failure(t, i)) ev += 'f';
      if (traj.cm_performed(t, i)) ev += 'c';
      out << "," << (ev.empty() ? "-" : ev);
    }
    out << "\n";
  }
  return out.str();
}

inline std::string history_to_csv(const std::vector<app::HistoryRecord>& history, bool with_timing) {
  std::ostringstream out;
  out << "k,alpha,gamma_x,gamma_s,gamma_u,relaxed_saa,exact_saa,control_change";
  const std::size_t n = history.empty() ? 0 : history.front().subproblem_best.size();
  for (std::size_t i = 0; i < n; ++i) out << ",start" << i << ",best" << i;
  if (with_timing) out << ",wall_seconds";
  out << "\n";
  for (const auto& h : history) {
    out << h.k << "," << fmt(h.schedule.alpha) << "," << fmt(h.schedule.gamma_x) << "," << fmt(h.schedule.gamma_s)
        << "," << fmt(h.schedule.gamma_u) << "," << fmt(h.relaxed_saa) << "," << fmt(h.exact_saa) << ","
        << fmt(h.control_change);
    for (std::size_t i = 0; i < n; ++i) out << "," << fmt(h.subproblem_start[i]) << "," << fmt(h.subproblem_best[i]);
    if (with_timing) out << "," << fmt(h.wall_seconds);
    out << "\n";
  }
  return out.str();
}

// ---- evaluation reports ---------------------------------------------------------

inline json report_to_json(const eval::EvaluationReport& r) {
  json q = json::array();
  for (const auto& e : r.quantiles) q.push_back({{"level", e.level}, {"value", e.value}});
  return {{"scenarios", r.scenarios},
          {"components", r.components},
          {"projected", r.projected},
          {"dynamics", "exact"},
          {"mean_cost", r.mean_cost},
          {"quantiles", q},
          {"breakdown", {{"pm", r.mean_breakdown.pm}, {"cm", r.mean_breakdown.cm}, {"fo", r.mean_breakdown.fo}}},
          {"scheduled_pms", r.scheduled_pms},
          {"mean_performed_pms", r.mean_performed_pms},
          {"mean_pms_per_component", r.mean_pms_per_component},
          {"mean_failures_per_component", r.mean_failures_per_component},
          {"forced_outages",
           {{"counting", eval::to_string(r.outage_counting)},
            {"total", r.forced_outages},
            {"denominator", r.scenarios},
            {"mean", r.mean_forced_outages},
            {"scenarios_with_outage", r.scenarios_with_outage}}}};
}

/// report.json plus plot-ready CSVs (quantiles, cumulative PMs, empty-stock probability, histogram).
inline void write_report(const std::filesystem::path& dir, const eval::EvaluationReport& r) {
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  std::ostringstream q;
  q << "level,cost\n";
  for (const auto& e : r.quantiles) q << fmt(e.level) << "," << fmt(e.value) << "\n";
  write_text(dir / "quantiles.csv", q.str());
  std::ostringstream c;
  c << "t,cumulative_pms\n";
  for (std::size_t t = 0; t < r.cumulative_pms.size(); ++t) c << t << "," << fmt(r.cumulative_pms[t]) << "\n";
  write_text(dir / "cumulative_pms.csv", c.str());
  std::ostringstream e;
  e << "t,empty_stock_probability\n";
  for (std::size_t t = 0; t < r.empty_stock_probability.size(); ++t)
    e << t << "," << fmt(r.empty_stock_probability[t]) << "\n";
  write_text(dir / "empty_stock.csv", e.str());
  std::ostringstream h;
  h << "lower,upper,count\n";
  for (std::size_t b = 0; b < r.histogram.counts.size(); ++b)
    h << fmt(r.histogram.edges[b]) << "," << fmt(r.histogram.edges[b + 1]) << "," << r.histogram.counts[b] << "\n";
  write_text(dir / "cost_histogram.csv", h.str());
}

inline std::string leaderboard_to_csv(const tune::TuneResult& r) {
  std::ostringstream out;
  out << "rank,sample,gamma_u0,r_x,r_s,d_gamma,alpha0,d_alpha,mean_cost,final_exact_saa\n";
  for (std::size_t k = 0; k < r.leaderboard.size(); ++k) {
    const auto& e = r.leaderboard[k];
    out << k << "," << e.index;
    for (double v : tune::to_array(e.params)) out << "," << fmt(v);
    out << "," << fmt(e.mean_cost) << "," << fmt(e.final_exact_saa) << "\n";
  }
  return out.str();
}

}  // namespace pmopt::io
