// Short end-to-end run on the 10-component system: a few decomposition
// iterations, then exact-dynamics evaluation against the do-nothing strategy.
#include <cstdio>

#include "pmopt/pmopt.hpp"

int main() {
  using namespace pmopt;
  const SystemConfig cfg = SystemConfig::small_system();
  const auto scenarios = eval::generate_scenarios(cfg.n, cfg.horizon, 5, 42);

  app::APPParams p = app::APPParams::reference();
  p.iterations = 3;
  p.subproblem_budget = 60;
  const auto res = app::app_fixed_point(cfg, p, scenarios, 42);
  for (const auto& h : res.history)
    std::printf("k=%zu alpha=%.1f relaxed SAA %.1f  exact SAA (projected) %.1f\n", h.k, h.schedule.alpha,
                h.relaxed_saa, h.exact_saa);

  const auto vseed = eval::validation_seed(42);
  const auto none = eval::evaluate_strategy(Strategy(cfg.n, cfg.horizon), vseed, 2000, cfg);
  const auto app = eval::evaluate_strategy(res.strategy, vseed, 2000, cfg);
  std::printf("no PM:         mean %.1f k€, median %.1f, 95%% %.1f\n", none.mean_cost, none.quantiles[3].value,
              none.quantiles[5].value);
  std::printf("decomposition: mean %.1f k€, median %.1f, 95%% %.1f, %zu scheduled PMs\n", app.mean_cost,
              app.quantiles[3].value, app.quantiles[5].value, app.scheduled_pms);
  return 0;
}
