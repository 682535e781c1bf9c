#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "pmopt/app.hpp"
#include "pmopt/config.hpp"
#include "pmopt/evaluation.hpp"
#include "pmopt/parallel.hpp"
#include "pmopt/random.hpp"

namespace pmopt::tune {

inline constexpr std::size_t kParamCount = 6;
using UnitPoint = std::array<double, kParamCount>;

/// Intervals for (γ_u⁰, r_x, r_s, Δγ, α⁰, Δα).
struct ParamBounds {
  std::array<std::pair<double, double>, kParamCount> ranges{};

  /// Search box of the reference tuning study.
  static ParamBounds reference() {
    return {{{{1.0, 100.0}, {1.0, 1e4}, {1.0, 1e3}, {0.0, 100.0}, {2.0, 200.0}, {0.0, 200.0}}}};
  }

  void validate() const {
    for (const auto& [lo, hi] : ranges)
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) throw std::invalid_argument("invalid parameter bounds");
  }
};

inline std::array<double, kParamCount> to_array(const app::APPParams& p) {
  return {p.gamma_u0, p.r_x, p.r_s, p.d_gamma, p.alpha0, p.d_alpha};
}

inline app::APPParams from_array(const std::array<double, kParamCount>& v, const app::APPParams& base) {
  app::APPParams p = base;
  p.gamma_u0 = v[0];
  p.r_x = v[1];
  p.r_s = v[2];
  p.d_gamma = v[3];
  p.alpha0 = v[4];
  p.d_alpha = v[5];
  return p;
}

inline double min_pairwise_distance(std::span<const UnitPoint> pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < kParamCount; ++k) d2 += (pts[a][k] - pts[b][k]) * (pts[a][k] - pts[b][k]);
      best = std::min(best, d2);
    }
  return std::sqrt(best);
}

/// Latin hypercube in [0,1]^6: coordinate k of point m lies in stratum perm_k[m].
/// With restarts > 1 the design with the largest minimum pairwise distance wins
/// (earliest restart on ties).
inline std::vector<UnitPoint> lhs_unit_design(std::size_t count, std::uint64_t seed, std::size_t restarts = 1) {
  if (count < 1) throw std::invalid_argument("lhs count must be at least 1");
  restarts = std::max<std::size_t>(1, restarts);
  std::vector<UnitPoint> best;
  double best_spread = -1.0;
  for (std::size_t r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(derive_seed(seed, r));
    std::vector<UnitPoint> pts(count);
    std::vector<std::size_t> perm(count);
    for (std::size_t k = 0; k < kParamCount; ++k) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t m = count; m > 1; --m) std::swap(perm[m - 1], perm[rng() % m]);
      for (std::size_t m = 0; m < count; ++m)
        pts[m][k] = (static_cast<double>(perm[m]) + unit_interval(rng())) / static_cast<double>(count);
    }
    const double spread = count > 1 ? min_pairwise_distance(pts) : 0.0;
    if (spread > best_spread) {
      best_spread = spread;
      best = std::move(pts);
    }
  }
  return best;
}

inline std::vector<app::APPParams> lhs_sample(const ParamBounds& bounds, std::size_t count, std::uint64_t seed,
                                              std::size_t restarts = 1, const app::APPParams& base = {}) {
  bounds.validate();
  std::vector<app::APPParams> out;
  for (const auto& u : lhs_unit_design(count, seed, restarts)) {
    std::array<double, kParamCount> v{};
    for (std::size_t k = 0; k < kParamCount; ++k) {
      const auto [lo, hi] = bounds.ranges[k];
      v[k] = std::min(hi, lo + u[k] * (hi - lo));
    }
    out.push_back(from_array(v, base));
  }
  return out;
}

struct TuneEntry {
  std::size_t index = 0;
  app::APPParams params;
  double mean_cost = 0.0;
  double final_exact_saa = 0.0;
};

struct TuneResult {
  std::size_t best_index = 0;
  app::APPParams best;
  std::vector<TuneEntry> leaderboard;  // nondecreasing mean cost, ties by sample index
};

struct TuneOptions {
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::uint64_t validation_seed = 1;
  std::size_t validation_scenarios = 1000;
};

/// Runs the fixed point once per sample (samples in parallel, one worker each) and
/// ranks the projected strategies on a shared validation set.
inline TuneResult tune(const SystemConfig& cfg, std::span<const app::APPParams> samples,
                       std::span<const Scenario> scenarios, const TuneOptions& opt = {}) {
  if (samples.empty()) throw std::invalid_argument("tune: no samples");
  std::vector<TuneEntry> entries(samples.size());
  parallel_for(samples.size(), opt.threads, [&](std::size_t s) {
    const auto res = app::app_fixed_point(cfg, samples[s], scenarios, opt.seed, {});
    eval::EvaluationOptions eo;
    eo.threads = 1;
    const auto report = eval::evaluate_strategy(res.strategy, opt.validation_seed, opt.validation_scenarios, cfg, eo);
    entries[s] = {s, samples[s], report.mean_cost, res.history.empty() ? 0.0 : res.history.back().exact_saa};
  });
  std::stable_sort(entries.begin(), entries.end(),
                   [](const TuneEntry& a, const TuneEntry& b) { return a.mean_cost < b.mean_cost; });
  TuneResult r;
  r.best_index = entries.front().index;
  r.best = entries.front().params;
  r.leaderboard = std::move(entries);
  return r;
}

}  // namespace pmopt::tune
