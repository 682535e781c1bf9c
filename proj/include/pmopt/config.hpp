#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmopt {

/// Raised when a configuration violates its invariants or cannot be parsed.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when strategy / scenario / state dimensions disagree with the system.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct ComponentSpec {
  double pm_cost = 50.0;        // k€ per PM at u = 1
  double cm_cost = 200.0;       // k€ per corrective replacement
  double weibull_shape = 3.0;   // k
  double weibull_scale = 10.0;  // λ, years
};

/// Parameters of a fleet sharing one spare-parts stock.
struct SystemConfig {
  std::size_t n = 1;                 // component count
  std::size_t horizon = 40;          // T, time steps
  double dt = 1.0;                   // step length (years)
  std::size_t delay = 2;             // D, supply delay in steps
  std::size_t initial_stock = 0;     // s
  double delta = -1.0;               // "no failure recorded" sentinel
  double discount_rate = 0.08;       // τ
  double pm_threshold = 0.9;         // ν
  double forced_outage_cost = 10000; // C^F, k€ per step
  std::size_t scenario_count = 100;  // Q
  std::vector<ComponentSpec> components;

  /// Length of a component state vector: regime, age and D last-failure slots.
  std::size_t state_dim() const { return delay + 2; }

  const ComponentSpec& component(std::size_t i) const { return components.at(i); }

  /// β_t = (1+τ)^{-t}
  double discount(std::size_t t) const {
    return 1.0 / std::pow(1.0 + discount_rate, static_cast<double>(t));
  }

  std::vector<double> discount_table() const {
    std::vector<double> beta(horizon + 1);
    for (std::size_t t = 0; t <= horizon; ++t) beta[t] = discount(t);
    return beta;
  }

  void validate() const {
    if (n < 1) throw ConfigError("n must be at least 1");
    if (horizon < 1) throw ConfigError("T must be at least 1");
    if (delay < 1) throw ConfigError("D must be at least 1");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(pm_threshold > 0.0 && pm_threshold < 1.0)) throw ConfigError("nu must lie in (0,1)");
    if (!(delta < 0.0)) throw ConfigError("delta sentinel must be negative");
    if (!(discount_rate > -1.0)) throw ConfigError("tau must exceed -1");
    if (forced_outage_cost < 0.0) throw ConfigError("C_F must be nonnegative");
    if (scenario_count < 1) throw ConfigError("Q must be at least 1");
    if (components.size() != n)
      throw ConfigError("expected " + std::to_string(n) + " component records, got " +
                        std::to_string(components.size()));
    for (const auto& c : components) {
      if (c.pm_cost < 0.0 || c.cm_cost < 0.0) throw ConfigError("component costs must be nonnegative");
      if (!(c.weibull_shape > 0.0) || !(c.weibull_scale > 0.0))
        throw ConfigError("Weibull shape and scale must be positive");
    }
  }

  /// Homogeneous fleet helper.
  static SystemConfig homogeneous(std::size_t n, std::size_t horizon, std::size_t delay,
                                  std::size_t stock, ComponentSpec spec = {}) {
    SystemConfig cfg;
    cfg.n = n;
    cfg.horizon = horizon;
    cfg.delay = delay;
    cfg.initial_stock = stock;
    cfg.components.assign(n, spec);
    return cfg;
  }

  /// Test case 1 of the reference study (80 components, 16 spares, Weib(3,10)).
  static SystemConfig case1() {
    auto cfg = homogeneous(80, 40, 2, 16, {50.0, 200.0, 3.0, 10.0});
    cfg.scenario_count = 100;
    return cfg;
  }

  /// Test case 2 (80 components, 5 spares, Weib(3,20), 300 scenarios).
  static SystemConfig case2() {
    auto cfg = homogeneous(80, 40, 2, 5, {50.0, 200.0, 3.0, 20.0});
    cfg.scenario_count = 300;
    return cfg;
  }

  /// The 10-component, 2-spare downscale of case 1 used for tuning.
  static SystemConfig small_system() {
    auto cfg = case1();
    cfg.n = 10;
    cfg.initial_stock = 2;
    cfg.components.resize(10);
    return cfg;
  }
};

}  // namespace pmopt
