#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pmopt/app.hpp"
#include "pmopt/evaluation.hpp"
#include "pmopt/relax.hpp"

using namespace pmopt;

namespace {

struct Fixture {
  SystemConfig cfg;
  std::vector<Scenario> scenarios;
  app::APPParams params;
  app::Iterate it;
};

/// A mid-run looking iterate: random controls, bars from the coupled relaxed
/// simulation, random multipliers.
Fixture make_fixture(std::size_t n, std::size_t T, std::size_t Q, double alpha, std::uint64_t seed,
                     double lam_scale = 50.0) {
  Fixture f;
  f.cfg = SystemConfig::homogeneous(n, T, 2, 1, {50.0, 200.0, 3.0, 4.0});
  f.cfg.forced_outage_cost = 1000.0;
  f.scenarios = eval::generate_scenarios(n, T, Q, seed);
  f.params.alpha0 = alpha;
  f.params.d_alpha = 0.0;
  f.it = app::initial_iterate(f.cfg, f.params, f.scenarios);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0), L(-1.0, 1.0);
  for (auto& v : f.it.controls.controls.flat()) v = U(rng) < 0.2 ? 0.85 + 0.15 * U(rng) : 0.3 * U(rng);
  f.it.bars.clear();
  for (const auto& w : f.scenarios) f.it.bars.push_back(relax::simulate_relaxed(f.cfg, f.it.controls, w, alpha));
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t t = 0; t <= T; ++t) {
      for (std::size_t i = 0; i < n; ++i)
        for (auto& v : f.it.multipliers.component(q, i, t)) v = lam_scale * L(rng);
      f.it.multipliers.stock(q, t) = lam_scale * L(rng);
    }
  f.it.schedule = {0.3, 0.7, 2.0, alpha};
  return f;
}

struct LocalProbe {
  double value;
  std::uint64_t signature;
  double kink;
};

LocalProbe monitored(const std::function<double()>& f) {
  relax::BandMonitor m;
  relax::MonitorScope s(m);
  const double v = f();
  return {v, m.signature, m.min_kink_distance};
}

}  // namespace

TEST(Schedules, ReferenceValues) {
  const auto p = app::APPParams::reference();
  const auto s0 = app::update_schedules(0, p);
  EXPECT_DOUBLE_EQ(s0.gamma_u, 17.32);
  EXPECT_DOUBLE_EQ(s0.gamma_x, 17.32 / 7434.0);
  EXPECT_DOUBLE_EQ(s0.gamma_s, 17.32 / 815.3);
  EXPECT_DOUBLE_EQ(s0.alpha, 46.51);
  const auto s10 = app::update_schedules(10, p);
  EXPECT_NEAR(s10.gamma_u, 18.68, 1e-12);
  EXPECT_NEAR(s10.gamma_x, 18.68 / 7434.0, 1e-15);
  EXPECT_NEAR(s10.gamma_s, 18.68 / 815.3, 1e-15);
  EXPECT_NEAR(s10.alpha, 1401.51, 1e-9);
  auto bad = p;
  bad.r_x = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ComponentSubproblem, ObjectiveAtBarPointIsTheRelaxedCost) {
  auto f = make_fixture(3, 8, 4, 5.0, 1, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto row = f.it.controls.controls.row(i);
    const double obj = app::component_subproblem_objective(i, row, f.it, f.scenarios, f.cfg);
    double expected = 0.0;
    for (const auto& bar : f.it.bars)
      for (std::size_t t = 0; t <= 8; ++t) {
        const auto states = bar.system_state(t);
        std::vector<double> u(3, 0.0);
        if (t < 8)
          for (std::size_t j = 0; j < 3; ++j) u[j] = f.it.controls(j, t);
        const auto c = relax::relaxed_costs(f.cfg, t, states.components, u, 5.0);
        expected += c.maintenance[i] + c.forced_outage;
      }
    EXPECT_NEAR(obj, expected / 4.0, 1e-9 * expected) << i;
  }
}

TEST(ComponentSubproblem, DeterministicAndWarmStarted) {
  auto f = make_fixture(3, 8, 3, 5.0, 2);
  const auto row = f.it.controls.controls.row(1);
  EXPECT_EQ(app::component_subproblem_objective(1, row, f.it, f.scenarios, f.cfg),
            app::component_subproblem_objective(1, row, f.it, f.scenarios, f.cfg));
  dsearch::SearchBudget one;
  one.max_evals = 1;
  const auto sol = app::solve_component_subproblem(1, f.it, f.scenarios, f.cfg, one);
  EXPECT_TRUE(std::equal(sol.controls.begin(), sol.controls.end(), row.begin()));
  EXPECT_EQ(sol.value, sol.start_value);
  EXPECT_EQ(sol.evals, 1u);
}

TEST(ComponentSubproblem, SolverNeverWorsensTheWarmStart) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto f = make_fixture(3, 6, 3, 3.0, 10 + seed);
    dsearch::SearchBudget b;
    b.max_evals = 200;
    b.seed = seed;
    const auto i = seed % 3;
    const auto sol = app::solve_component_subproblem(i, f.it, f.scenarios, f.cfg, b);
    EXPECT_LE(sol.value, app::component_subproblem_objective(i, f.it.controls.controls.row(i), f.it, f.scenarios, f.cfg));
    EXPECT_EQ(sol.value, app::component_subproblem_objective(i, sol.controls, f.it, f.scenarios, f.cfg));
  }
}

TEST(ComponentSubproblem, SingleComponentMatchesGridSearch) {
  auto f = make_fixture(1, 3, 5, 4.0, 3);
  const auto cache = app::build_coupling_cache(f.cfg, f.it, f.scenarios);
  const auto ctx = app::prepare_component(0, f.it, cache, f.scenarios, f.cfg);
  double grid_best = 1e300;
  for (int a = 0; a <= 20; ++a)
    for (int b = 0; b <= 20; ++b)
      for (int c = 0; c <= 20; ++c) {
        const std::vector<double> u{a / 20.0, b / 20.0, c / 20.0};
        grid_best = std::min(grid_best, app::component_objective(ctx, u));
      }
  dsearch::SearchBudget budget;
  budget.max_evals = 3000;
  const auto sol = app::solve_component(ctx, budget);
  EXPECT_LE(sol.value, grid_best + 1e-9 * std::fabs(grid_best));
}

TEST(ComponentMultipliers, VanishOnAHealthyFleetWithZeroCoupling) {
  const auto cfg = SystemConfig::homogeneous(2, 5, 2, 1, {50.0, 200.0, 3.0, 10.0});
  const std::vector<Scenario> quiet(2, Scenario(2, 5, 1.0));
  app::APPParams p;
  auto it = app::initial_iterate(cfg, p, quiet);
  it.schedule.gamma_x = 0.0;
  const auto cache = app::build_coupling_cache(cfg, it, quiet);
  const auto ctx = app::prepare_component(1, it, cache, quiet, cfg);
  std::vector<double> states;
  const std::vector<double> u(5, 0.0);
  app::component_objective(ctx, u, &states);
  const auto lam = app::component_multiplier_backward(ctx, 0, std::span<const double>(states).subspan(0, 6 * 4), u);
  for (double v : lam) EXPECT_EQ(v, 0.0);
}

// Stationarity of the subproblem Lagrangian in X_{i,t}: the local Lagrangian
// cost_t(X) + Λ_t·X - Λ_{t+1}·f(X) is assembled here from the cost primitives
// and differentiated numerically.
TEST(ComponentMultipliers, SatisfyStationarityOfTheLagrangian) {
  std::size_t checked = 0;
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto f = make_fixture(3, 10, 2, seed % 2 ? 2.0 : 8.0, 100 + seed);
    const auto& cfg = f.cfg;
    const std::size_t T = 10, dim = cfg.state_dim(), i = seed % 3;
    const auto cache = app::build_coupling_cache(cfg, f.it, f.scenarios);
    const auto ctx = app::prepare_component(i, f.it, cache, f.scenarios, cfg);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> u(T);
    for (auto& v : u) v = U(rng);
    std::vector<double> states;
    app::component_objective(ctx, u, &states);
    const double alpha = ctx.schedule.alpha;
    for (std::size_t q = 0; q < 2; ++q) {
      const auto x = std::span<const double>(states).subspan(q * (T + 1) * dim, (T + 1) * dim);
      const auto lam = app::component_multiplier_backward(ctx, q, x, u);
      for (std::size_t t = 1; t <= T; ++t) {
        const double beta = std::pow(1.08, -static_cast<double>(t));
        const double others = cache.fo_others[cache.qt(q, t) * 3 + i];
        auto local = [&](std::vector<double> X) {
          return monitored([&] {
            const double e = relax::detail::ind_zero(X[0], alpha);
            double v = beta * 200.0 * e * relax::detail::ind_zero(X[1], alpha);
            bool left;
            v += beta * cfg.forced_outage_cost *
                 relax::detail::tracked_min(1.0, others + e * relax::detail::ind_pos(X[1], alpha), left);
            for (std::size_t k = 0; k < dim; ++k) {
              const double bar = f.it.bars[q].component(t, i)[k];
              v += 0.5 * ctx.schedule.gamma_x * (X[k] - bar) * (X[k] - bar) + lam[t * dim + k] * X[k];
            }
            if (t < T) {
              for (std::size_t k = 0; k < dim; ++k) v += cache.coord[(cache.qt(q, t) * 3 + i) * dim + k] * X[k];
              std::vector<double> out(dim);
              relax::detail::relaxed_component_step(cfg, i, alpha, X, cache.lower[cache.qt(q, t) * 3 + i],
                                                    f.it.bars[q].stock(t), u[t], f.scenarios[q](i, t), out);
              for (std::size_t k = 0; k < dim; ++k) v -= lam[(t + 1) * dim + k] * out[k];
            }
            return v;
          });
        };
        const std::vector<double> X(x.begin() + t * dim, x.begin() + (t + 1) * dim);
        const auto c = local(X);
        for (std::size_t k = 0; k < dim; ++k) {
          auto Xp = X, Xm = X;
          Xp[k] += h;
          Xm[k] -= h;
          if (Xm[1] < 0.0) continue;
          const auto p = local(Xp), m = local(Xm);
          if (p.signature != c.signature || m.signature != c.signature) continue;
          const double scale = 1.0 + std::fabs(lam[t * dim + k]);
          ASSERT_NEAR((p.value - m.value) / (2 * h), 0.0, 1e-5 * scale) << "t " << t << " k " << k;
          ++checked;
        }
      }
    }
  }
  EXPECT_GT(checked, 300u);
}

TEST(ComponentMultipliers, ReducedGradientMatchesFiniteDifferences) {
  std::size_t checked = 0;
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    auto f = make_fixture(3, 8, 3, seed % 3 ? 3.0 : 10.0, 200 + seed);
    const std::size_t i = seed % 3, T = 8;
    const auto cache = app::build_coupling_cache(f.cfg, f.it, f.scenarios);
    const auto ctx = app::prepare_component(i, f.it, cache, f.scenarios, f.cfg);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.02, 0.98);
    std::vector<double> u(T);
    for (auto& v : u) v = U(rng);
    const auto g = app::component_reduced_gradient(ctx, u);
    const auto c = monitored([&] { return app::component_objective(ctx, u); });
    for (std::size_t t = 0; t < T; ++t) {
      auto up = u, um = u;
      up[t] += h;
      um[t] -= h;
      const auto p = monitored([&] { return app::component_objective(ctx, up); });
      const auto m = monitored([&] { return app::component_objective(ctx, um); });
      if (p.signature != c.signature || m.signature != c.signature) continue;
      const double fd = (p.value - m.value) / (2 * h);
      EXPECT_NEAR(g[t], fd, 1e-4 * std::max(1.0, std::fabs(fd))) << "seed " << seed << " t " << t;
      ++checked;
    }
  }
  EXPECT_GT(checked, 60u);
}

TEST(StockSubproblem, HealthyFleetKeepsItsStock) {
  const auto cfg = SystemConfig::homogeneous(3, 6, 2, 2);
  const std::vector<Scenario> quiet(2, Scenario(3, 6, 1.0));
  auto it = app::initial_iterate(cfg, app::APPParams{}, quiet);
  for (const auto& s : app::solve_stock_subproblem(it, cfg))
    for (double v : s) EXPECT_EQ(v, 2.0);
}

TEST(StockSubproblem, IndependentOfMultipliersAndProximalWeight) {
  auto f = make_fixture(3, 8, 3, 4.0, 5);
  const auto a = app::solve_stock_subproblem(f.it, f.cfg);
  auto g = f;
  g.it.schedule.gamma_s *= 100.0;
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t t = 0; t <= 8; ++t) g.it.multipliers.stock(q, t) = 1e3;
  EXPECT_EQ(a, app::solve_stock_subproblem(g.it, g.cfg));
}

TEST(StockSubproblem, ExactLimitMatchesSimulatedStock) {
  const auto cfg = SystemConfig::small_system();
  const auto sc = eval::generate_scenarios(cfg.n, cfg.horizon, 5, 9);
  app::Iterate it;
  it.schedule.alpha = 1e7;
  it.controls = Strategy(cfg.n, cfg.horizon);
  for (const auto& w : sc) it.bars.push_back(simulate(cfg, it.controls, w));
  const auto S = app::solve_stock_subproblem(it, cfg);
  for (std::size_t q = 0; q < sc.size(); ++q)
    for (std::size_t t = 0; t <= cfg.horizon; ++t) EXPECT_EQ(S[q][t], it.bars[q].stock(t));
}

TEST(StockMultipliers, VanishAtTheBarWithZeroComponentMultipliers) {
  auto f = make_fixture(3, 8, 2, 4.0, 6, 0.0);
  const auto S = app::solve_stock_subproblem(f.it, f.cfg);
  for (std::size_t q = 0; q < 2; ++q) {
    for (std::size_t t = 0; t <= 8; ++t) f.it.bars[q].stock(t) = S[q][t];
    for (double v : app::stock_multiplier_backward(S[q], f.it, q, f.scenarios[q], f.cfg)) EXPECT_EQ(v, 0.0);
  }
}

TEST(StockMultipliers, TerminalValueIsLinearInProximalWeight) {
  auto f = make_fixture(3, 8, 2, 4.0, 7);
  std::vector<double> S(9);
  for (std::size_t t = 0; t <= 8; ++t) S[t] = f.it.bars[0].stock(t) + 0.25;
  const double l1 = app::stock_multiplier_backward(S, f.it, 0, f.scenarios[0], f.cfg)[8];
  f.it.schedule.gamma_s *= 3.0;
  const double l3 = app::stock_multiplier_backward(S, f.it, 0, f.scenarios[0], f.cfg)[8];
  EXPECT_DOUBLE_EQ(l1, -0.7 * 0.25);
  EXPECT_NEAR(l3, 3.0 * l1, 1e-15);
}

// Stationarity in S_t of γ_s/2 (S-S̄)² + Λ_S,t S - Λ_S,t+1 f_S(X̄, S) - Σ_i Λ̄_i,t+1 · f_i(X̄_i, S).
TEST(StockMultipliers, SatisfyStationarityOfTheLagrangian) {
  std::size_t checked = 0;
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto f = make_fixture(4, 10, 2, seed % 2 ? 2.0 : 6.0, 300 + seed);
    const auto& cfg = f.cfg;
    const double alpha = f.it.schedule.alpha, gs = f.it.schedule.gamma_s;
    const std::size_t dim = cfg.state_dim();
    const auto Snew = app::solve_stock_subproblem(f.it, cfg);
    for (std::size_t q = 0; q < 2; ++q) {
      std::vector<double> S = Snew[q];
      for (auto& v : S) v += 0.1;  // keep S away from the bar so the proximal term matters
      const auto lam = app::stock_multiplier_backward(S, f.it, q, f.scenarios[q], cfg);
      const auto& bar = f.it.bars[q];
      for (std::size_t t = 0; t < 10; ++t) {
        auto local = [&](double s) {
          return monitored([&] {
            double v = 0.5 * gs * (s - bar.stock(t)) * (s - bar.stock(t)) + lam[t] * s;
            v -= lam[t + 1] * relax::detail::relaxed_stock_step(cfg, alpha, bar.slice(t), s);
            double lower = 0.0;
            std::vector<double> out(dim);
            for (std::size_t i = 0; i < cfg.n; ++i) {
              const auto x = bar.component(t, i);
              relax::detail::relaxed_component_step(cfg, i, alpha, x, lower, s, f.it.controls(i, t), f.scenarios[q](i, t),
                                                    out);
              const auto li = f.it.multipliers.component(q, i, t + 1);
              for (std::size_t k = 0; k < dim; ++k) v -= li[k] * out[k];
              lower += relax::detail::ind_zero(x[0], alpha);
            }
            return v;
          });
        };
        // component partials are taken at the bar stock, the stock recursion at S
        const double s0 = bar.stock(t);
        const auto c = local(s0), p = local(s0 + h), m = local(s0 - h);
        if (p.signature != c.signature || m.signature != c.signature) continue;
        const bool same_branch = [&] {
          bool a, b;
          relax::detail::relaxed_stock_step(cfg, alpha, bar.slice(t), s0, &a);
          relax::detail::relaxed_stock_step(cfg, alpha, bar.slice(t), S[t], &b);
          return a == b;
        }();
        if (!same_branch) continue;
        const double fd = (p.value - m.value) / (2 * h) + gs * (S[t] - s0);
        ASSERT_NEAR(fd, 0.0, 1e-5 * (1.0 + std::fabs(lam[t]))) << "t " << t;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 50u);
}

TEST(FixedPoint, ZeroIterationsReturnTheInitialControls) {
  const auto cfg = SystemConfig::homogeneous(2, 5, 2, 1);
  const auto sc = eval::generate_scenarios(2, 5, 3, 1);
  app::APPParams p;
  p.iterations = 0;
  const auto r = app::app_fixed_point(cfg, p, sc, 1);
  EXPECT_EQ(r.strategy, Strategy(2, 5));
  EXPECT_TRUE(r.history.empty());
}

TEST(FixedPoint, HistoryIsRecordedAndThreadCountDoesNotMatter) {
  const auto cfg = SystemConfig::homogeneous(4, 10, 2, 1);
  const auto sc = eval::generate_scenarios(4, 10, 4, 2);
  app::APPParams p;
  p.iterations = 3;
  p.subproblem_budget = 60;
  std::size_t callbacks = 0;
  app::APPOptions one;
  one.on_iteration = [&](const app::HistoryRecord&) { ++callbacks; };
  app::APPOptions three;
  three.threads = 3;
  const auto a = app::app_fixed_point(cfg, p, sc, 5, one);
  const auto b = app::app_fixed_point(cfg, p, sc, 5, three);
  EXPECT_EQ(callbacks, 3u);
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_EQ(a.strategy, b.strategy);
  EXPECT_EQ(a.final_iterate.multipliers, b.final_iterate.multipliers);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a.history[k].k, k);
    EXPECT_EQ(a.history[k].relaxed_saa, b.history[k].relaxed_saa);
    EXPECT_EQ(a.history[k].exact_saa, b.history[k].exact_saa);
    EXPECT_EQ(a.history[k].subproblem_best.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(a.history[k].subproblem_best[i], a.history[k].subproblem_start[i]);
  }
  EXPECT_TRUE(a.final_iterate.multipliers.finite());
  for (double v : a.strategy.controls.flat()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

// With one component the decomposition only decouples the stock; the APP strategy
// should do about as well on the relaxed SAA as a direct solve of the same problem.
TEST(FixedPoint, SingleComponentAgreesWithDirectRelaxedSolve) {
  auto cfg = SystemConfig::homogeneous(1, 12, 2, 1, {50.0, 200.0, 3.0, 6.0});
  cfg.forced_outage_cost = 1000.0;
  const auto sc = eval::generate_scenarios(1, 12, 20, 4);
  app::APPParams p;
  p.iterations = 15;
  p.subproblem_budget = 400;
  p.alpha0 = 20.0;
  p.d_alpha = 5.0;
  const auto r = app::app_fixed_point(cfg, p, sc, 3);
  const double alpha = p.alpha0 + 14 * p.d_alpha;
  Strategy trial(1, 12);
  auto f = [&](std::span<const double> x) {
    std::copy(x.begin(), x.end(), trial.controls.flat().begin());
    return eval::saa_objective(trial, sc, cfg, eval::SaaMode::relaxed_at(alpha));
  };
  dsearch::SearchBudget b;
  b.max_evals = 6000;
  const std::vector<double> x0(12, 0.0);
  const auto direct = dsearch::minimize(f, x0, dsearch::Bounds::box(12, 0, 1), b);
  const double app_value = eval::saa_objective(r.strategy, sc, cfg, eval::SaaMode::relaxed_at(alpha));
  EXPECT_LE(app_value, 1.10 * direct.value) << "app " << app_value << " direct " << direct.value;
}

TEST(DirectArm, BudgetOfOneReturnsTheStart) {
  const auto cfg = SystemConfig::homogeneous(2, 4, 2, 1);
  const auto sc = eval::generate_scenarios(2, 4, 3, 1);
  Strategy start(2, 4);
  start(1, 2) = 1.0;
  dsearch::SearchBudget b;
  b.max_evals = 1;
  const auto r = app::direct_search(cfg, sc, start, b);
  EXPECT_TRUE(std::equal(r.x.begin(), r.x.end(), start.controls.flat().begin()));
  EXPECT_EQ(r.value, eval::saa_objective(start, sc, cfg));
}
