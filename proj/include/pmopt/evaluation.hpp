#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmopt/config.hpp"
#include "pmopt/dynamics.hpp"
#include "pmopt/parallel.hpp"
#include "pmopt/random.hpp"
#include "pmopt/relax.hpp"
#include "pmopt/state.hpp"

namespace pmopt::eval {

/// Noise W_{i,t+1} of scenario q, keyed by (seed, q, i, t).
inline double scenario_noise(std::uint64_t seed, std::size_t q, std::size_t i, std::size_t t) {
  return unit_interval(hash_key({seed, q, i, t}));
}

inline Scenario scenario_at(std::size_t n, std::size_t horizon, std::uint64_t seed, std::size_t q) {
  Scenario s(n, horizon);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < horizon; ++t) s(i, t) = scenario_noise(seed, q, i, t);
  return s;
}

inline std::vector<Scenario> generate_scenarios(std::size_t n, std::size_t horizon, std::size_t count,
                                                std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("scenario count must be at least 1");
  std::vector<Scenario> out;
  out.reserve(count);
  for (std::size_t q = 0; q < count; ++q) out.push_back(scenario_at(n, horizon, seed, q));
  return out;
}

/// Validation scenarios use a stream derived from the run seed, disjoint from the
/// optimization stream keyed by the seed itself.
inline std::uint64_t validation_seed(std::uint64_t seed) { return derive_seed(seed, 0x7a11da7eull); }

struct SaaMode {
  bool relaxed = false;
  double alpha = 0.0;

  static SaaMode exact() { return {}; }
  static SaaMode relaxed_at(double alpha) { return {true, alpha}; }
};

/// (1/Q) Σ_q total cost along the simulated trajectory, summed in scenario order.
inline double saa_objective(const Strategy& strategy, std::span<const Scenario> scenarios,
                            const SystemConfig& cfg, SaaMode mode = SaaMode::exact()) {
  if (scenarios.empty()) throw std::invalid_argument("saa_objective: no scenarios");
  double sum = 0.0;
  for (const auto& w : scenarios) {
    if (mode.relaxed) {
      const auto traj = relax::simulate_relaxed(cfg, strategy, w, mode.alpha);
      sum += relax::relaxed_total_cost(cfg, traj, strategy, mode.alpha).total;
    } else {
      sum += simulate_cost(cfg, strategy, w).total;
    }
  }
  return sum / static_cast<double>(scenarios.size());
}

/// Entries >= ν become 1 (as-good-as-new PM), the rest 0.
inline Strategy project_strategy(const Strategy& u, double nu) {
  Strategy p = u;
  for (auto& v : p.controls.flat()) v = v >= nu ? 1.0 : 0.0;
  return p;
}

enum class OutageCounting { onsets, steps };

inline std::string to_string(OutageCounting c) { return c == OutageCounting::onsets ? "onsets" : "steps"; }

struct EvaluationOptions {
  std::size_t threads = 1;
  OutageCounting outage_counting = OutageCounting::onsets;
  std::size_t histogram_bins = 50;
  bool project = true;
};

inline constexpr std::array<double, 7> kQuantileLevels{1, 5, 25, 50, 75, 95, 99};

struct Quantile {
  double level;
  double value;
};

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

struct EvaluationReport {
  std::size_t scenarios = 0;
  std::size_t components = 0;
  bool projected = false;
  double mean_cost = 0.0;
  std::vector<Quantile> quantiles;
  CostBreakdown mean_breakdown;
  std::size_t scheduled_pms = 0;           // entries of the evaluated strategy at or above ν
  double mean_performed_pms = 0.0;         // per scenario, PMs actually applied (healthy components)
  double mean_pms_per_component = 0.0;
  double mean_failures_per_component = 0.0;
  OutageCounting outage_counting = OutageCounting::onsets;
  std::size_t forced_outages = 0;          // total over all scenarios
  double mean_forced_outages = 0.0;        // forced_outages / scenarios
  std::size_t scenarios_with_outage = 0;
  std::vector<double> cumulative_pms;      // t = 0..T-1, mean PMs performed up to t
  std::vector<double> empty_stock_probability;  // t = 0..T
  Histogram histogram;
  std::vector<double> totals;              // per-scenario total cost, scenario order
};

/// Nearest-rank quantile of sorted data: the ceil(p/100 * N)-th smallest value.
inline double nearest_rank(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw std::invalid_argument("nearest_rank: empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(level / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

namespace detail {

struct ChunkStats {
  std::size_t performed_pms = 0;
  std::size_t failures = 0;
  std::size_t outages = 0;
  std::size_t scenarios_with_outage = 0;
  std::vector<std::size_t> pm_by_t;
  std::vector<std::size_t> empty_by_t;
};

template <class ScenarioAt>
EvaluationReport evaluate_impl(const Strategy& strategy, std::size_t count, ScenarioAt&& scenario_at_q,
                               const SystemConfig& cfg, const EvaluationOptions& opt) {
  check_dimensions(cfg, strategy);
  if (count < 1) throw std::invalid_argument("evaluate_strategy: no scenarios");
  const Strategy u = opt.project ? project_strategy(strategy, cfg.pm_threshold) : strategy;
  const std::size_t T = cfg.horizon, n = cfg.n;

  std::vector<CostBreakdown> costs(count);
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  std::vector<ChunkStats> stats(chunks);

  parallel_for(chunks, opt.threads, [&](std::size_t c) {
    auto& s = stats[c];
    s.pm_by_t.assign(T, 0);
    s.empty_by_t.assign(T + 1, 0);
    const std::size_t end = std::min(count, (c + 1) * kChunk);
    for (std::size_t q = c * kChunk; q < end; ++q) {
      const Scenario w = scenario_at_q(q);
      const Trajectory traj = simulate(cfg, u, w);
      costs[q] = total_cost(cfg, traj, u);
      std::size_t outages = 0;
      for (std::size_t t = 0; t <= T; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          if (t < T && traj.pm_performed(t, i)) {
            ++s.performed_pms;
            ++s.pm_by_t[t];
          }
          if (traj.failure(t, i)) ++s.failures;
        }
        if (traj.stock(t) == 0.0) ++s.empty_by_t[t];
        const bool fo = traj.forced_outage(t);
        if (opt.outage_counting == OutageCounting::steps) {
          outages += fo ? 1 : 0;
        } else if (fo && (t == 0 || !traj.forced_outage(t - 1))) {
          ++outages;
        }
      }
      s.outages += outages;
      if (outages > 0) ++s.scenarios_with_outage;
    }
  });

  EvaluationReport r;
  r.scenarios = count;
  r.components = n;
  r.projected = opt.project;
  r.outage_counting = opt.outage_counting;
  r.totals.resize(count);
  double pm = 0.0, cm = 0.0, fo = 0.0, total = 0.0;
  for (std::size_t q = 0; q < count; ++q) {
    pm += costs[q].pm;
    cm += costs[q].cm;
    fo += costs[q].fo;
    total += costs[q].total;
    r.totals[q] = costs[q].total;
  }
  const double N = static_cast<double>(count);
  r.mean_breakdown = {pm / N, cm / N, fo / N, total / N};
  r.mean_cost = total / N;

  std::vector<double> sorted = r.totals;
  std::sort(sorted.begin(), sorted.end());
  for (double level : kQuantileLevels) r.quantiles.push_back({level, nearest_rank(sorted, level)});

  for (double v : u.controls.flat()) r.scheduled_pms += v >= cfg.pm_threshold ? 1 : 0;

  std::vector<std::size_t> pm_by_t(T, 0), empty_by_t(T + 1, 0);
  std::size_t performed = 0, failures = 0;
  for (const auto& s : stats) {
    performed += s.performed_pms;
    failures += s.failures;
    r.forced_outages += s.outages;
    r.scenarios_with_outage += s.scenarios_with_outage;
    for (std::size_t t = 0; t < T; ++t) pm_by_t[t] += s.pm_by_t[t];
    for (std::size_t t = 0; t <= T; ++t) empty_by_t[t] += s.empty_by_t[t];
  }
  r.mean_performed_pms = static_cast<double>(performed) / N;
  r.mean_pms_per_component = r.mean_performed_pms / static_cast<double>(n);
  r.mean_failures_per_component = static_cast<double>(failures) / N / static_cast<double>(n);
  r.mean_forced_outages = static_cast<double>(r.forced_outages) / N;

  std::size_t running = 0;
  for (std::size_t t = 0; t < T; ++t) {
    running += pm_by_t[t];
    r.cumulative_pms.push_back(static_cast<double>(running) / N);
  }
  for (std::size_t t = 0; t <= T; ++t) r.empty_stock_probability.push_back(static_cast<double>(empty_by_t[t]) / N);

  const std::size_t bins = std::max<std::size_t>(1, opt.histogram_bins);
  const double lo = sorted.front(), hi = sorted.back();
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  r.histogram.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) r.histogram.edges.push_back(lo + width * static_cast<double>(b));
  for (double v : sorted) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++r.histogram.counts[std::min(b, bins - 1)];
  }
  return r;
}

}  // namespace detail

/// Evaluates the strategy with the exact dynamics on the given scenarios.
inline EvaluationReport evaluate_strategy(const Strategy& strategy, std::span<const Scenario> scenarios,
                                          const SystemConfig& cfg, const EvaluationOptions& opt = {}) {
  for (const auto& w : scenarios) check_dimensions(cfg, w);
  return detail::evaluate_impl(strategy, scenarios.size(), [&](std::size_t q) { return scenarios[q]; }, cfg,
                               opt);
}

/// Same, generating scenario q of the keyed stream on demand (large validation sets).
inline EvaluationReport evaluate_strategy(const Strategy& strategy, std::uint64_t scenario_seed,
                                          std::size_t count, const SystemConfig& cfg,
                                          const EvaluationOptions& opt = {}) {
  return detail::evaluate_impl(
      strategy, count, [&](std::size_t q) { return scenario_at(cfg.n, cfg.horizon, scenario_seed, q); }, cfg,
      opt);
}

}  // namespace pmopt::eval
