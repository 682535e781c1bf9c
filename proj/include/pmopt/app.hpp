#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmopt/config.hpp"
#include "pmopt/dsearch.hpp"
#include "pmopt/dynamics.hpp"
#include "pmopt/evaluation.hpp"
#include "pmopt/parallel.hpp"
#include "pmopt/random.hpp"
#include "pmopt/relax.hpp"
#include "pmopt/state.hpp"

// Auxiliary Problem Principle fixed point on the relaxed fleet model: one
// subproblem per component (solved by direct search over its T controls, states
// eliminated by simulation), one stock subproblem, adjoint multipliers for both.
//
// Sign convention: Θ_{t+1} = X_{t+1} - f(X_t, ...), so every Jacobian of Θ with
// respect to time-t quantities is minus the Jacobian of f.

namespace pmopt::app {

struct APPParams {
  double gamma_u0 = 17.32;
  double r_x = 7434.0;
  double r_s = 815.3;
  double d_gamma = 0.1360;
  double alpha0 = 46.51;
  double d_alpha = 135.5;
  std::size_t iterations = 50;
  std::size_t subproblem_budget = 1000;

  /// Parameters selected by the reference tuning run.
  static APPParams reference() { return {}; }

  void validate() const {
    if (!(gamma_u0 > 0.0) || !(r_x > 0.0) || !(r_s > 0.0) || !(alpha0 > 0.0))
      throw ConfigError("gamma_u0, r_x, r_s and alpha0 must be positive");
    if (d_gamma < 0.0 || d_alpha < 0.0) throw ConfigError("d_gamma and d_alpha must be nonnegative");
    if (subproblem_budget < 1) throw ConfigError("subproblem budget must be at least 1");
  }

  bool operator==(const APPParams&) const = default;
};

struct Schedule {
  double gamma_x = 0.0;
  double gamma_s = 0.0;
  double gamma_u = 0.0;
  double alpha = 1.0;
};

inline Schedule update_schedules(std::size_t k, const APPParams& p) {
  const double kk = static_cast<double>(k);
  const double gu = p.gamma_u0 + kk * p.d_gamma;
  return {gu / p.r_x, gu / p.r_s, gu, p.alpha0 + kk * p.d_alpha};
}

/// Λ_{i,t} (vectors of size D+2) and Λ_{S,t}, t = 0..T, per scenario.
class MultiplierSet {
public:
  MultiplierSet() = default;
  MultiplierSet(std::size_t scenarios, std::size_t n, std::size_t horizon, std::size_t dim)
      : q_(scenarios), n_(n), T_(horizon), dim_(dim), comp_(scenarios * n * (horizon + 1) * dim, 0.0),
        stock_(scenarios * (horizon + 1), 0.0) {}

  std::size_t scenarios() const { return q_; }
  std::size_t components() const { return n_; }
  std::size_t horizon() const { return T_; }
  std::size_t state_dim() const { return dim_; }

  std::span<double> component(std::size_t q, std::size_t i, std::size_t t) {
    return {comp_.data() + ((q * n_ + i) * (T_ + 1) + t) * dim_, dim_};
  }
  std::span<const double> component(std::size_t q, std::size_t i, std::size_t t) const {
    return {comp_.data() + ((q * n_ + i) * (T_ + 1) + t) * dim_, dim_};
  }
  double& stock(std::size_t q, std::size_t t) { return stock_[q * (T_ + 1) + t]; }
  double stock(std::size_t q, std::size_t t) const { return stock_[q * (T_ + 1) + t]; }

  bool finite() const {
    for (double v : comp_)
      if (!std::isfinite(v)) return false;
    for (double v : stock_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const MultiplierSet&) const = default;

private:
  std::size_t q_ = 0, n_ = 0, T_ = 0, dim_ = 0;
  std::vector<double> comp_;
  std::vector<double> stock_;
};

/// Bar point of the fixed-point iteration.
struct Iterate {
  std::vector<Trajectory> bars;  // X̄ and S̄, one relaxed trajectory per scenario
  Strategy controls;             // ū, shared by all scenarios
  MultiplierSet multipliers;     // Λ̄
  std::size_t k = 0;
  Schedule schedule;
};

/// u⁰ = 0, (X⁰, S⁰) from the coupled relaxed simulation at α⁰, Λ⁰ = 0.
inline Iterate initial_iterate(const SystemConfig& cfg, const APPParams& p, std::span<const Scenario> scenarios) {
  Iterate it;
  it.schedule = update_schedules(0, p);
  it.controls = Strategy(cfg.n, cfg.horizon, 0.0);
  for (const auto& w : scenarios) it.bars.push_back(relax::simulate_relaxed(cfg, it.controls, w, it.schedule.alpha));
  it.multipliers = MultiplierSet(scenarios.size(), cfg.n, cfg.horizon, cfg.state_dim());
  return it;
}

/// Per-iteration quantities shared by all component subproblems, evaluated at the
/// bar point with the iterate's α.
struct CouplingCache {
  std::size_t Q = 0, n = 0, T = 0, dim = 0;
  std::vector<double> lower;      // [q][t][i]  Σ_{j<i} 1^α_{0}(Ē_{j,t}),            t < T
  std::vector<double> fo_others;  // [q][t][i]  Σ_{j≠i} 1^α_{0}(Ē_j) 1^α_{>0}(Ā_j),  t <= T
  std::vector<double> coord;      // [q][t][i][k]  coefficient c_{i,t} of X_{i,t},      t < T

  std::size_t qt(std::size_t q, std::size_t t) const { return q * (T + 1) + t; }
};

inline CouplingCache build_coupling_cache(const SystemConfig& cfg, const Iterate& it,
                                          std::span<const Scenario> scenarios, std::size_t threads = 1) {
  const double alpha = it.schedule.alpha;
  CouplingCache c;
  c.Q = scenarios.size();
  c.n = cfg.n;
  c.T = cfg.horizon;
  c.dim = cfg.state_dim();
  const std::size_t n = c.n, T = c.T, dim = c.dim;
  c.lower.assign(c.Q * (T + 1) * n, 0.0);
  c.fo_others.assign(c.Q * (T + 1) * n, 0.0);
  c.coord.assign(c.Q * (T + 1) * n * dim, 0.0);

  parallel_for(c.Q, threads, [&](std::size_t q) {
    const Trajectory& bar = it.bars[q];
    std::vector<double> waiting(n), prefix(n + 1), suffix(n + 1), broken_flux(n), out(dim);
    relax::ComponentPartials J(dim);
    Eigen::MatrixXd stock_rows;
    for (std::size_t t = 0; t <= T; ++t) {
      const auto slice = bar.slice(t);
      for (std::size_t j = 0; j < n; ++j)
        waiting[j] = relax::detail::ind_zero(slice[j * dim], alpha) * relax::detail::ind_pos(slice[j * dim + 1], alpha);
      prefix[0] = 0.0;
      for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + waiting[j];
      suffix[n] = 0.0;
      for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] + waiting[j];
      for (std::size_t i = 0; i < n; ++i) c.fo_others[c.qt(q, t) * n + i] = prefix[i] + suffix[i + 1];
      if (t == T) break;

      const double S = bar.stock(t);
      double lower = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        c.lower[c.qt(q, t) * n + j] = lower;
        const auto x = bar.component(t, j);
        relax::detail::relaxed_component_step(cfg, j, alpha, x, lower, S, it.controls(j, t), scenarios[q](j, t),
                                              out, &J);
        const auto lam = it.multipliers.component(q, j, t + 1);
        double flux = 0.0;
        for (std::size_t k = 0; k < dim; ++k) flux += J.d_broken(k) * lam[k];
        broken_flux[j] = flux;
        lower += relax::detail::ind_zero(x[0], alpha);
      }
      relax::detail::stock_partials(cfg, alpha, slice, S, stock_rows);
      const double lam_s = it.multipliers.stock(q, t + 1);
      double above = 0.0;  // Σ_{j>i} ∂f_j/∂B · Λ̄_{j,t+1}
      for (std::size_t i = n; i-- > 0;) {
        double* ci = c.coord.data() + (c.qt(q, t) * n + i) * dim;
        for (std::size_t k = 0; k < dim; ++k) ci[k] = -stock_rows(i, k) * lam_s;
        ci[0] -= above * relax::detail::dind_zero(slice[i * dim], alpha);
        above += broken_flux[i];
      }
    }
  });
  return c;
}

/// Everything subproblem i needs, copied out of the iterate and the cache.
struct ComponentContext {
  const SystemConfig* cfg = nullptr;
  std::size_t i = 0;
  Schedule schedule;
  std::span<const Scenario> scenarios;
  std::vector<double> beta;
  std::vector<double> lower;      // [q][t], t < T
  std::vector<double> stock;      // [q][t], t < T
  std::vector<double> fo_others;  // [q][t], t <= T
  std::vector<double> coord;      // [q][t][k], t < T
  std::vector<double> bar_x;      // [q][t][k], t <= T
  std::vector<double> bar_u;      // [t]

  std::size_t Q() const { return scenarios.size(); }
  std::size_t T() const { return cfg->horizon; }
  std::size_t dim() const { return cfg->state_dim(); }
};

inline ComponentContext prepare_component(std::size_t i, const Iterate& it, const CouplingCache& cache,
                                          std::span<const Scenario> scenarios, const SystemConfig& cfg) {
  if (i >= cfg.n) throw DimensionError("component index out of range");
  if (it.bars.size() != scenarios.size()) throw DimensionError("iterate and scenario set sizes differ");
  ComponentContext ctx;
  ctx.cfg = &cfg;
  ctx.i = i;
  ctx.schedule = it.schedule;
  ctx.scenarios = scenarios;
  ctx.beta = cfg.discount_table();
  const std::size_t Q = scenarios.size(), T = cfg.horizon, n = cfg.n, dim = cfg.state_dim();
  ctx.lower.resize(Q * T);
  ctx.stock.resize(Q * T);
  ctx.fo_others.resize(Q * (T + 1));
  ctx.coord.resize(Q * T * dim);
  ctx.bar_x.resize(Q * (T + 1) * dim);
  for (std::size_t q = 0; q < Q; ++q) {
    for (std::size_t t = 0; t <= T; ++t) {
      ctx.fo_others[q * (T + 1) + t] = cache.fo_others[cache.qt(q, t) * n + i];
      const auto x = it.bars[q].component(t, i);
      std::copy(x.begin(), x.end(), ctx.bar_x.begin() + (q * (T + 1) + t) * dim);
      if (t == T) continue;
      ctx.lower[q * T + t] = cache.lower[cache.qt(q, t) * n + i];
      ctx.stock[q * T + t] = it.bars[q].stock(t);
      const double* ci = cache.coord.data() + (cache.qt(q, t) * n + i) * dim;
      std::copy(ci, ci + dim, ctx.coord.begin() + (q * T + t) * dim);
    }
  }
  const auto row = it.controls.controls.row(i);
  ctx.bar_u.assign(row.begin(), row.end());
  return ctx;
}

/// Subproblem objective for candidate controls u (length T). When `states` is
/// given it receives the simulated X_i, laid out [q][t][k] for t = 0..T.
inline double component_objective(const ComponentContext& ctx, std::span<const double> u,
                                  std::vector<double>* states = nullptr) {
  const SystemConfig& cfg = *ctx.cfg;
  const std::size_t Q = ctx.Q(), T = ctx.T(), dim = ctx.dim(), i = ctx.i;
  if (u.size() != T) throw DimensionError("subproblem controls must have length T");
  const double alpha = ctx.schedule.alpha, gx = ctx.schedule.gamma_x;
  const auto& spec = cfg.component(i);
  if (states) states->assign(Q * (T + 1) * dim, 0.0);

  std::vector<double> cur(dim), next(dim);
  double sum = 0.0;
  for (std::size_t q = 0; q < Q; ++q) {
    cur[0] = 1.0;
    cur[1] = 0.0;
    for (std::size_t d = 0; d < cfg.delay; ++d) cur[2 + d] = cfg.delta;
    double acc = 0.0;
    for (std::size_t t = 0; t <= T; ++t) {
      if (states) std::copy(cur.begin(), cur.end(), states->begin() + (q * (T + 1) + t) * dim);
      const double beta = ctx.beta[t];
      const double e0 = relax::detail::ind_zero(cur[0], alpha);
      double cost = beta * spec.cm_cost * e0 * relax::detail::ind_zero(cur[1], alpha);
      if (t < T) cost += beta * spec.pm_cost * u[t] * u[t];
      const double waiting = ctx.fo_others[q * (T + 1) + t] + e0 * relax::detail::ind_pos(cur[1], alpha);
      cost += beta * cfg.forced_outage_cost * std::min(1.0, waiting);
      const double* xb = ctx.bar_x.data() + (q * (T + 1) + t) * dim;
      double prox = 0.0;
      for (std::size_t k = 0; k < dim; ++k) prox += (cur[k] - xb[k]) * (cur[k] - xb[k]);
      cost += 0.5 * gx * prox;
      if (t < T) {
        const double* c = ctx.coord.data() + (q * T + t) * dim;
        for (std::size_t k = 0; k < dim; ++k) cost += c[k] * cur[k];
      }
      acc += cost;
      if (t == T) break;
      relax::detail::relaxed_component_step(cfg, i, alpha, cur, ctx.lower[q * T + t], ctx.stock[q * T + t], u[t],
                                            ctx.scenarios[q](i, t), next);
      cur.swap(next);
    }
    sum += acc;
  }
  double prox_u = 0.0;
  for (std::size_t t = 0; t < T; ++t) prox_u += (u[t] - ctx.bar_u[t]) * (u[t] - ctx.bar_u[t]);
  return sum / static_cast<double>(Q) + 0.5 * ctx.schedule.gamma_u * prox_u;
}

/// Objective of subproblem i at the iterate (builds the coupling terms on the fly).
inline double component_subproblem_objective(std::size_t i, std::span<const double> u, const Iterate& it,
                                             std::span<const Scenario> scenarios, const SystemConfig& cfg) {
  const auto cache = build_coupling_cache(cfg, it, scenarios);
  return component_objective(prepare_component(i, it, cache, scenarios, cfg), u);
}

/// Λ_i for one scenario by the backward recursion at the solution states
/// `x` ([t][k], t = 0..T) and controls u. Output laid out [t][k].
inline std::vector<double> component_multiplier_backward(const ComponentContext& ctx, std::size_t q,
                                                         std::span<const double> x, std::span<const double> u) {
  const SystemConfig& cfg = *ctx.cfg;
  const std::size_t T = ctx.T(), dim = ctx.dim(), i = ctx.i;
  const double alpha = ctx.schedule.alpha, gx = ctx.schedule.gamma_x;
  std::vector<double> lam((T + 1) * dim, 0.0);
  std::vector<double> out(dim);
  relax::ComponentPartials J(dim);

  auto local_terms = [&](std::size_t t, double* dst) {
    const auto xt = x.subspan(t * dim, dim);
    const auto gj = relax::maintenance_cost_gradient(cfg, i, t, ctx.beta[t], xt, alpha);
    const auto gf = relax::fo_cost_gradient(cfg, ctx.beta[t], xt, ctx.fo_others[q * (T + 1) + t], alpha);
    const double* xb = ctx.bar_x.data() + (q * (T + 1) + t) * dim;
    for (std::size_t k = 0; k < dim; ++k) dst[k] = -gj(k) - gf(k) - gx * (xt[k] - xb[k]);
  };

  local_terms(T, lam.data() + T * dim);
  for (std::size_t t = T; t-- > 0;) {
    double* lt = lam.data() + t * dim;
    local_terms(t, lt);
    const double* c = ctx.coord.data() + (q * T + t) * dim;
    for (std::size_t k = 0; k < dim; ++k) lt[k] -= c[k];
    relax::detail::relaxed_component_step(cfg, i, alpha, x.subspan(t * dim, dim), ctx.lower[q * T + t],
                                          ctx.stock[q * T + t], u[t], ctx.scenarios[q](i, t), out, &J);
    const double* next = lam.data() + (t + 1) * dim;
    for (std::size_t k = 0; k < dim; ++k)
      for (std::size_t m = 0; m < dim; ++m) lt[k] += J.d_self(m, k) * next[m];
  }
  return lam;
}

/// Reduced gradient of component_objective with respect to u, through the
/// multipliers: 2β C^P u + γ_u (u - ū) - ∂f/∂u' Λ_{t+1}, averaged over scenarios.
inline std::vector<double> component_reduced_gradient(const ComponentContext& ctx, std::span<const double> u) {
  const SystemConfig& cfg = *ctx.cfg;
  const std::size_t Q = ctx.Q(), T = ctx.T(), dim = ctx.dim(), i = ctx.i;
  std::vector<double> states;
  component_objective(ctx, u, &states);
  std::vector<double> grad(T, 0.0), out(dim);
  relax::ComponentPartials J(dim);
  for (std::size_t q = 0; q < Q; ++q) {
    const auto x = std::span<const double>(states).subspan(q * (T + 1) * dim, (T + 1) * dim);
    const auto lam = component_multiplier_backward(ctx, q, x, u);
    for (std::size_t t = 0; t < T; ++t) {
      relax::detail::relaxed_component_step(cfg, i, ctx.schedule.alpha, x.subspan(t * dim, dim), ctx.lower[q * T + t],
                                            ctx.stock[q * T + t], u[t], ctx.scenarios[q](i, t), out, &J);
      double g = 0.0;
      for (std::size_t k = 0; k < dim; ++k) g -= J.d_control(k) * lam[(t + 1) * dim + k];
      grad[t] += g;
    }
  }
  const auto& spec = cfg.component(i);
  for (std::size_t t = 0; t < T; ++t)
    grad[t] = grad[t] / static_cast<double>(Q) + 2.0 * ctx.beta[t] * spec.pm_cost * u[t] +
              ctx.schedule.gamma_u * (u[t] - ctx.bar_u[t]);
  return grad;
}

struct ComponentSolution {
  std::vector<double> controls;    // u_i, length T
  std::vector<double> states;      // X_i, [q][t][k]
  std::vector<double> multipliers; // Λ_i, [q][t][k]
  double start_value = 0.0;        // objective at the warm start ū_i
  double value = 0.0;
  std::size_t evals = 0;
};

inline ComponentSolution solve_component(const ComponentContext& ctx, const dsearch::SearchBudget& budget) {
  const std::size_t T = ctx.T(), dim = ctx.dim(), Q = ctx.Q();
  ComponentSolution sol;
  bool first = true;
  auto objective = [&](std::span<const double> u) {
    const double v = component_objective(ctx, u);
    if (first) {
      sol.start_value = v;
      first = false;
    }
    return v;
  };
  const auto res = dsearch::minimize(objective, ctx.bar_u, dsearch::Bounds::box(T, 0.0, 1.0), budget);
  if (res.value > sol.start_value) throw std::logic_error("subproblem objective increased");
  sol.controls = res.x;
  sol.value = res.value;
  sol.evals = res.evals;
  component_objective(ctx, sol.controls, &sol.states);
  sol.multipliers.resize(Q * (T + 1) * dim);
  for (std::size_t q = 0; q < Q; ++q) {
    const auto x = std::span<const double>(sol.states).subspan(q * (T + 1) * dim, (T + 1) * dim);
    const auto lam = component_multiplier_backward(ctx, q, x, sol.controls);
    std::copy(lam.begin(), lam.end(), sol.multipliers.begin() + q * (T + 1) * dim);
  }
  return sol;
}

/// Solves subproblem i at the iterate with direct search warm-started at ū_i.
inline ComponentSolution solve_component_subproblem(std::size_t i, const Iterate& it,
                                                    std::span<const Scenario> scenarios, const SystemConfig& cfg,
                                                    const dsearch::SearchBudget& budget) {
  const auto cache = build_coupling_cache(cfg, it, scenarios);
  return solve_component(prepare_component(i, it, cache, scenarios, cfg), budget);
}

/// The stock subproblem's only feasible point: the relaxed stock simulated from
/// the (fresh) component bars. Returns S per scenario, t = 0..T.
inline std::vector<std::vector<double>> solve_stock_subproblem(const Iterate& it, const SystemConfig& cfg) {
  const double alpha = it.schedule.alpha;
  std::vector<std::vector<double>> S;
  for (const auto& bar : it.bars) {
    std::vector<double> s(cfg.horizon + 1);
    s[0] = static_cast<double>(cfg.initial_stock);
    for (std::size_t t = 0; t < cfg.horizon; ++t)
      s[t + 1] = relax::detail::relaxed_stock_step(cfg, alpha, bar.slice(t), s[t]);
    S.push_back(std::move(s));
  }
  return S;
}

/// Λ_S for scenario q. `it` holds the fresh component bars, controls and
/// multipliers, and the previous stock bar S̄; `S` is the new stock trajectory.
inline std::vector<double> stock_multiplier_backward(std::span<const double> S, const Iterate& it, std::size_t q,
                                                     const Scenario& w, const SystemConfig& cfg) {
  const std::size_t T = cfg.horizon, n = cfg.n, dim = cfg.state_dim();
  const double alpha = it.schedule.alpha, gs = it.schedule.gamma_s;
  const Trajectory& bar = it.bars[q];
  std::vector<double> lam(T + 1, 0.0), out(dim);
  relax::ComponentPartials J(dim);
  Eigen::MatrixXd rows;
  lam[T] = -gs * (S[T] - bar.stock(T));
  for (std::size_t t = T; t-- > 0;) {
    double v = -gs * (S[t] - bar.stock(t));
    double lower = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = bar.component(t, i);
      relax::detail::relaxed_component_step(cfg, i, alpha, x, lower, bar.stock(t), it.controls(i, t), w(i, t), out,
                                            &J);
      const auto li = it.multipliers.component(q, i, t + 1);
      for (std::size_t k = 0; k < dim; ++k) v += J.d_stock(k) * li[k];
      lower += relax::detail::ind_zero(x[0], alpha);
    }
    v += relax::detail::stock_partials(cfg, alpha, bar.slice(t), S[t], rows) * lam[t + 1];
    lam[t] = v;
  }
  return lam;
}

struct HistoryRecord {
  std::size_t k = 0;
  Schedule schedule;
  double relaxed_saa = 0.0;  // coupled relaxed SAA of u^{k+1} at α^k
  double exact_saa = 0.0;    // exact SAA of the projection of u^{k+1}
  double control_change = 0.0;  // ||u^{k+1} - u^k||_2
  std::vector<double> subproblem_start;
  std::vector<double> subproblem_best;
  double wall_seconds = 0.0;
};

struct APPOptions {
  std::size_t threads = 1;
  std::function<void(const HistoryRecord&)> on_iteration;
};

struct APPResult {
  Strategy strategy;
  std::vector<HistoryRecord> history;
  Iterate final_iterate;
};

/// Seed of subproblem i at iteration k.
inline std::uint64_t subproblem_seed(std::uint64_t seed, std::size_t k, std::size_t i) {
  return hash_key({seed, 0xa99ull, k, i});
}

/// Fixed-point loop with parallel component subproblems followed by the
/// sequential stock update.
inline APPResult app_fixed_point(const SystemConfig& cfg, const APPParams& p, std::span<const Scenario> scenarios,
                                 std::uint64_t seed, const APPOptions& opt = {}) {
  cfg.validate();
  p.validate();
  if (scenarios.empty()) throw std::invalid_argument("app_fixed_point: no scenarios");
  for (const auto& w : scenarios) check_dimensions(cfg, w);
  const std::size_t n = cfg.n, T = cfg.horizon, dim = cfg.state_dim(), Q = scenarios.size();

  APPResult result;
  Iterate it = initial_iterate(cfg, p, scenarios);
  for (std::size_t k = 0; k < p.iterations; ++k) {
    const auto started = std::chrono::steady_clock::now();
    it.k = k;
    it.schedule = update_schedules(k, p);
    const auto cache = build_coupling_cache(cfg, it, scenarios, opt.threads);

    std::vector<ComponentSolution> sols(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
      dsearch::SearchBudget budget;
      budget.max_evals = p.subproblem_budget;
      budget.seed = subproblem_seed(seed, k, i);
      budget.initial_mesh = 1.0;
      sols[i] = solve_component(prepare_component(i, it, cache, scenarios, cfg), budget);
    });

    HistoryRecord rec;
    rec.k = k;
    rec.schedule = it.schedule;
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < T; ++t) {
        const double d = sols[i].controls[t] - it.controls(i, t);
        change += d * d;
        it.controls(i, t) = sols[i].controls[t];
      }
      for (std::size_t q = 0; q < Q; ++q)
        for (std::size_t t = 0; t <= T; ++t) {
          const double* x = sols[i].states.data() + (q * (T + 1) + t) * dim;
          const double* l = sols[i].multipliers.data() + (q * (T + 1) + t) * dim;
          std::copy(x, x + dim, it.bars[q].component(t, i).begin());
          std::copy(l, l + dim, it.multipliers.component(q, i, t).begin());
        }
      rec.subproblem_start.push_back(sols[i].start_value);
      rec.subproblem_best.push_back(sols[i].value);
    }
    rec.control_change = std::sqrt(change);

    // stock subproblem at the fresh component bars; the old S̄ is still installed
    const auto S = solve_stock_subproblem(it, cfg);
    std::vector<std::vector<double>> lam_s(Q);
    parallel_for(Q, opt.threads, [&](std::size_t q) { lam_s[q] = stock_multiplier_backward(S[q], it, q, scenarios[q], cfg); });
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t t = 0; t <= T; ++t) {
        it.bars[q].stock(t) = S[q][t];
        it.multipliers.stock(q, t) = lam_s[q][t];
      }

    rec.relaxed_saa = eval::saa_objective(it.controls, scenarios, cfg, eval::SaaMode::relaxed_at(it.schedule.alpha));
    rec.exact_saa = eval::saa_objective(eval::project_strategy(it.controls, cfg.pm_threshold), scenarios, cfg);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (opt.on_iteration) opt.on_iteration(rec);
    result.history.push_back(std::move(rec));
  }
  it.k = p.iterations;
  result.strategy = it.controls;
  result.final_iterate = std::move(it);
  return result;
}

/// Reference arm: direct search over all n*T controls on the exact SAA objective.
inline dsearch::SearchResult direct_search(const SystemConfig& cfg, std::span<const Scenario> scenarios,
                                           const Strategy& start, const dsearch::SearchBudget& budget) {
  check_dimensions(cfg, start);
  Strategy trial = start;
  auto objective = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), trial.controls.flat().begin());
    return eval::saa_objective(trial, scenarios, cfg);
  };
  const auto x0 = start.controls.flat();
  return dsearch::minimize(objective, x0, dsearch::Bounds::box(x0.size(), 0.0, 1.0), budget);
}

}  // namespace pmopt::app
