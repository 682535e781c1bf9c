#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "pmopt/config.hpp"
#include "pmopt/state.hpp"
#include "pmopt/weibull.hpp"

// Exact (integer-regime) dynamics of the fleet and its discounted costs.

namespace pmopt {

namespace detail {

inline double indicator(bool b) { return b ? 1.0 : 0.0; }

struct ExactStepResult {
  bool pm = false;
  bool failed = false;
  bool cm = false;
};

/// One exact transition of component i. `x` and `out` use the packed layout;
/// `broken_upto_i` counts broken components with index <= i at t.
inline ExactStepResult exact_component_step(const SystemConfig& cfg, std::size_t i,
                                            std::span<const double> x, double broken_upto_i,
                                            double stock, double u, double w,
                                            std::span<double> out) {
  const std::size_t D = cfg.delay;
  const double E = x[0];
  const double A = x[1];
  ExactStepResult r;

  if (E != 0.0) {
    if (u >= cfg.pm_threshold) {
      out[0] = 1.0;
      out[1] = (1.0 - u) * A + 1.0;
      r.pm = true;
    } else {
      const auto& c = cfg.component(i);
      const double p = failure_probability(c.weibull_shape, c.weibull_scale, A, cfg.dt);
      if (w < p) {
        out[0] = 0.0;
        out[1] = 0.0;
        r.failed = true;
      } else {
        out[0] = 1.0;
        out[1] = A + 1.0;
      }
    }
  } else if (stock >= broken_upto_i) {
    out[0] = 1.0;
    out[1] = 1.0;
    r.cm = true;
  } else {
    out[0] = 0.0;
    out[1] = A + 1.0;
  }

  auto P = x.subspan(2, D);
  auto Pn = out.subspan(2, D);
  if (!r.failed) {
    for (std::size_t d = 0; d < D; ++d) Pn[d] = P[d] >= 0.0 ? P[d] + 1.0 : cfg.delta;
  } else if (P[D - 1] < 0.0) {
    // fewer than D recorded failures: shift, append 0, keep sentinels
    bool placed = false;
    for (std::size_t d = 0; d < D; ++d) {
      if (P[d] >= 0.0) {
        Pn[d] = P[d] + 1.0;
      } else if (!placed) {
        Pn[d] = 0.0;
        placed = true;
      } else {
        Pn[d] = cfg.delta;
      }
    }
  } else {
    // full record: the oldest entry has already produced its part, discard it
    for (std::size_t d = 0; d + 1 < D; ++d) Pn[d] = P[d + 1] + 1.0;
    Pn[D - 1] = 0.0;
  }
  return r;
}

/// Number of broken components (regime 0) among packed states [0, upto].
inline double broken_count(std::span<const double> packed, std::size_t dim, std::size_t upto) {
  double count = 0.0;
  for (std::size_t j = 0; j <= upto; ++j) count += indicator(packed[j * dim] == 0.0);
  return count;
}

inline double exact_stock_step(const SystemConfig& cfg, std::span<const double> packed,
                               double stock) {
  const std::size_t dim = cfg.state_dim();
  const double due = static_cast<double>(cfg.delay) - 1.0;
  double arrivals = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i)
    for (std::size_t d = 0; d < cfg.delay; ++d)
      arrivals += indicator(packed[i * dim + 2 + d] == due);
  const double broken = broken_count(packed, dim, cfg.n - 1);
  return stock + arrivals - std::min(stock, broken);
}

inline std::vector<double> pack(std::span<const ComponentState> states) {
  std::vector<double> packed;
  for (const auto& s : states) {
    packed.push_back(s.regime);
    packed.push_back(s.age);
    packed.insert(packed.end(), s.last_failures.begin(), s.last_failures.end());
  }
  return packed;
}

}  // namespace detail

struct CostBreakdown {
  double pm = 0.0;
  double cm = 0.0;
  double fo = 0.0;
  double total = 0.0;
};

/// Running discounted cost in a fixed (t outer, i inner) summation order. Shared by
/// the exact and relaxed evaluators so that identical indicator values yield
/// bit-identical totals.
class CostAccumulator {
public:
  explicit CostAccumulator(const SystemConfig& cfg) : cfg_(&cfg), beta_(cfg.discount_table()) {}

  /// `broken_now` / `zero_age` / `waiting` are the (possibly relaxed) indicators
  /// 1{E=0}, 1{A=0}, 1{A>0} of component i at time t.
  void add_component(std::size_t t, std::size_t i, double u, double broken_now, double zero_age,
                     double waiting) {
    const auto& c = cfg_->component(i);
    if (t < cfg_->horizon) pm_ += beta_[t] * c.pm_cost * u * u;
    cm_ += beta_[t] * c.cm_cost * broken_now * zero_age;
    outage_ += broken_now * waiting;
  }

  void close_step(std::size_t t) {
    fo_ += beta_[t] * cfg_->forced_outage_cost * std::min(1.0, outage_);
    outage_ = 0.0;
  }

  CostBreakdown result() const { return {pm_, cm_, fo_, pm_ + cm_ + fo_}; }
  std::span<const double> discount() const { return beta_; }

private:
  const SystemConfig* cfg_;
  std::vector<double> beta_;
  double pm_ = 0.0, cm_ = 0.0, fo_ = 0.0, outage_ = 0.0;
};

/// Whether a spare is available for component i: stock covers every broken
/// component with index <= i (lowest indices are repaired first).
inline bool spare_available(std::span<const ComponentState> states, double stock, std::size_t i) {
  if (i >= states.size()) throw DimensionError("spare_available: index out of range");
  double broken = 0.0;
  for (std::size_t j = 0; j <= i; ++j) broken += detail::indicator(states[j].regime == 0.0);
  return stock >= broken;
}

/// State of component i at t+1. `states` holds the system's components at t
/// (entries past i are ignored).
inline ComponentState step_component(const SystemConfig& cfg, std::span<const ComponentState> states,
                                     std::size_t i, double stock, double u, double w) {
  if (i >= states.size()) throw DimensionError("step_component: index out of range");
  const auto x = states[i].packed();
  std::vector<double> out(cfg.state_dim());
  double broken = 0.0;
  for (std::size_t j = 0; j <= i; ++j) broken += detail::indicator(states[j].regime == 0.0);
  detail::exact_component_step(cfg, i, x, broken, stock, u, w, out);
  return ComponentState::unpack(out);
}

inline double step_stock(const SystemConfig& cfg, std::span<const ComponentState> states,
                         double stock) {
  if (states.size() != cfg.n) throw DimensionError("step_stock: wrong component count");
  return detail::exact_stock_step(cfg, detail::pack(states), stock);
}

/// Rolls the exact dynamics forward from the all-new initial state.
inline Trajectory simulate(const SystemConfig& cfg, const Strategy& strategy,
                           const Scenario& scenario) {
  check_dimensions(cfg, strategy);
  check_dimensions(cfg, scenario);
  const std::size_t n = cfg.n, T = cfg.horizon, dim = cfg.state_dim();
  Trajectory traj(n, T, dim);

  for (std::size_t i = 0; i < n; ++i) {
    auto x0 = traj.component(0, i);
    x0[0] = 1.0;
    x0[1] = 0.0;
    for (std::size_t d = 0; d < cfg.delay; ++d) x0[2 + d] = cfg.delta;
  }
  traj.stock(0) = static_cast<double>(cfg.initial_stock);

  for (std::size_t t = 0; t <= T; ++t) {
    const auto now = traj.slice(t);
    double waiting = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      waiting += detail::indicator(now[i * dim] == 0.0) * detail::indicator(now[i * dim + 1] > 0.0);
    traj.outage_flag(t) = waiting >= 1.0 ? 1 : 0;
    if (t == T) break;

    const double stock = traj.stock(t);
    double broken = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      broken += detail::indicator(now[i * dim] == 0.0);
      const auto r = detail::exact_component_step(cfg, i, traj.component(t, i), broken, stock,
                                                  strategy(i, t), scenario(i, t),
                                                  traj.component(t + 1, i));
      if (r.pm) traj.events(t, i) |= kPreventive;
      if (r.cm) traj.events(t, i) |= kCorrective;
      if (r.failed) traj.events(t + 1, i) |= kFailure;
    }
    traj.stock(t + 1) = detail::exact_stock_step(cfg, now, stock);
  }
  return traj;
}

/// Discounted PM (quadratic in u), CM (charged at failure time) and forced-outage costs.
inline CostBreakdown total_cost(const SystemConfig& cfg, const Trajectory& traj,
                                const Strategy& strategy) {
  check_dimensions(cfg, strategy);
  if (traj.components() != cfg.n || traj.horizon() != cfg.horizon)
    throw DimensionError("total_cost: trajectory does not match the system");
  CostAccumulator acc(cfg);
  for (std::size_t t = 0; t <= cfg.horizon; ++t) {
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const double E = traj.regime(t, i), A = traj.age(t, i);
      const double u = t < cfg.horizon ? strategy(i, t) : 0.0;
      acc.add_component(t, i, u, detail::indicator(E == 0.0), detail::indicator(A == 0.0),
                        detail::indicator(A > 0.0));
    }
    acc.close_step(t);
  }
  return acc.result();
}

/// Cost of one scenario without materializing the trajectory. Agrees bit-for-bit
/// with total_cost(simulate(...)).
inline CostBreakdown simulate_cost(const SystemConfig& cfg, const Strategy& strategy,
                                   const Scenario& scenario) {
  check_dimensions(cfg, strategy);
  check_dimensions(cfg, scenario);
  const std::size_t n = cfg.n, T = cfg.horizon, dim = cfg.state_dim();
  std::vector<double> cur(n * dim), next(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    cur[i * dim] = 1.0;
    cur[i * dim + 1] = 0.0;
    for (std::size_t d = 0; d < cfg.delay; ++d) cur[i * dim + 2 + d] = cfg.delta;
  }
  double stock = static_cast<double>(cfg.initial_stock);
  CostAccumulator acc(cfg);
  std::span<const double> cur_view(cur);
  for (std::size_t t = 0; t <= T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double E = cur[i * dim], A = cur[i * dim + 1];
      acc.add_component(t, i, t < T ? strategy(i, t) : 0.0, detail::indicator(E == 0.0),
                        detail::indicator(A == 0.0), detail::indicator(A > 0.0));
    }
    acc.close_step(t);
    if (t == T) break;
    double broken = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      broken += detail::indicator(cur[i * dim] == 0.0);
      detail::exact_component_step(cfg, i, cur_view.subspan(i * dim, dim), broken, stock,
                                   strategy(i, t), scenario(i, t),
                                   std::span<double>(next).subspan(i * dim, dim));
    }
    stock = detail::exact_stock_step(cfg, cur, stock);
    cur.swap(next);
    cur_view = std::span<const double>(cur);
  }
  return acc.result();
}

/// Orders placed by failures at t_f arrive at t_f + D; parts in transit at t.
inline double in_flight(const SystemConfig& cfg, const Trajectory& traj, std::size_t t) {
  double count = 0.0;
  const std::size_t first = t + 1 > cfg.delay ? t + 1 - cfg.delay : 0;
  for (std::size_t tf = first; tf <= t; ++tf)
    for (std::size_t i = 0; i < cfg.n; ++i) count += detail::indicator(traj.failure(tf, i));
  return count;
}

/// stock + in transit - broken - s; zero on every exact trajectory.
inline double conservation_residual(const SystemConfig& cfg, const Trajectory& traj,
                                    std::size_t t) {
  double broken = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) broken += detail::indicator(traj.regime(t, i) == 0.0);
  return traj.stock(t) + in_flight(cfg, traj, t) - broken - static_cast<double>(cfg.initial_stock);
}

}  // namespace pmopt
