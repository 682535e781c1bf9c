#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pmopt/config.hpp"

namespace pmopt {

/// Dense row-major n x T matrix; rows are components, columns time steps.
class Grid {
public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool operator==(const Grid&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// PM controls u_{i,t} in [0,1], i < n, t < T.
struct Strategy {
  Grid controls;

  Strategy() = default;
  Strategy(std::size_t n, std::size_t horizon, double fill = 0.0) : controls(n, horizon, fill) {}

  std::size_t components() const { return controls.rows(); }
  std::size_t horizon() const { return controls.cols(); }
  double operator()(std::size_t i, std::size_t t) const { return controls(i, t); }
  double& operator()(std::size_t i, std::size_t t) { return controls(i, t); }

  bool operator==(const Strategy&) const = default;
};

/// Uniform failure noises; entry (i,t) drives the transition t -> t+1.
struct Scenario {
  Grid noises;

  Scenario() = default;
  Scenario(std::size_t n, std::size_t horizon, double fill = 1.0) : noises(n, horizon, fill) {}

  std::size_t components() const { return noises.rows(); }
  std::size_t horizon() const { return noises.cols(); }
  double operator()(std::size_t i, std::size_t t) const { return noises(i, t); }
  double& operator()(std::size_t i, std::size_t t) { return noises(i, t); }
};

/// Regime, age (or downtime when broken) and elapsed times since the last D failures.
struct ComponentState {
  double regime = 1.0;
  double age = 0.0;
  std::vector<double> last_failures;

  static ComponentState fresh(const SystemConfig& cfg) {
    return {1.0, 0.0, std::vector<double>(cfg.delay, cfg.delta)};
  }

  /// Packed layout used by the kernels: [regime, age, P^1, ..., P^D].
  std::vector<double> packed() const {
    std::vector<double> x{regime, age};
    x.insert(x.end(), last_failures.begin(), last_failures.end());
    return x;
  }

  static ComponentState unpack(std::span<const double> x) {
    return {x[0], x[1], std::vector<double>(x.begin() + 2, x.end())};
  }

  bool operator==(const ComponentState&) const = default;
};

struct SystemState {
  std::vector<ComponentState> components;
  double stock = 0.0;

  static SystemState initial(const SystemConfig& cfg) {
    return {std::vector<ComponentState>(cfg.n, ComponentState::fresh(cfg)),
            static_cast<double>(cfg.initial_stock)};
  }

  bool operator==(const SystemState&) const = default;
};

/// Per-(i,t) event bits recorded by the exact simulator.
enum EventFlag : std::uint8_t {
  kPreventive = 1u << 0,  // PM performed at t
  kFailure = 1u << 1,     // component entered (E,A) = (0,0) at t
  kCorrective = 1u << 2,  // CM performed at t
};

/// States for t = 0..T stored flat as [t][i][k] with k over the packed component layout.
class Trajectory {
public:
  Trajectory() = default;
  Trajectory(std::size_t n, std::size_t horizon, std::size_t state_dim)
      : n_(n), horizon_(horizon), dim_(state_dim),
        x_((horizon + 1) * n * state_dim, 0.0), stock_(horizon + 1, 0.0),
        events_((horizon + 1) * n, 0), outage_(horizon + 1, 0) {}

  std::size_t components() const { return n_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t state_dim() const { return dim_; }

  std::span<double> component(std::size_t t, std::size_t i) {
    return {x_.data() + (t * n_ + i) * dim_, dim_};
  }
  std::span<const double> component(std::size_t t, std::size_t i) const {
    return {x_.data() + (t * n_ + i) * dim_, dim_};
  }
  /// All components at t, packed consecutively.
  std::span<double> slice(std::size_t t) { return {x_.data() + t * n_ * dim_, n_ * dim_}; }
  std::span<const double> slice(std::size_t t) const {
    return {x_.data() + t * n_ * dim_, n_ * dim_};
  }

  double regime(std::size_t t, std::size_t i) const { return component(t, i)[0]; }
  double age(std::size_t t, std::size_t i) const { return component(t, i)[1]; }
  double last_failure(std::size_t t, std::size_t i, std::size_t d) const {
    return component(t, i)[2 + d];
  }

  double& stock(std::size_t t) { return stock_[t]; }
  double stock(std::size_t t) const { return stock_[t]; }
  std::span<const double> stock_path() const { return stock_; }

  std::uint8_t& events(std::size_t t, std::size_t i) { return events_[t * n_ + i]; }
  std::uint8_t events(std::size_t t, std::size_t i) const { return events_[t * n_ + i]; }
  bool pm_performed(std::size_t t, std::size_t i) const { return events(t, i) & kPreventive; }
  bool failure(std::size_t t, std::size_t i) const { return events(t, i) & kFailure; }
  bool cm_performed(std::size_t t, std::size_t i) const { return events(t, i) & kCorrective; }

  std::uint8_t& outage_flag(std::size_t t) { return outage_[t]; }
  bool forced_outage(std::size_t t) const { return outage_[t] != 0; }

  ComponentState component_state(std::size_t t, std::size_t i) const {
    return ComponentState::unpack(component(t, i));
  }

  SystemState system_state(std::size_t t) const {
    SystemState s;
    s.stock = stock_[t];
    s.components.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) s.components.push_back(component_state(t, i));
    return s;
  }

  std::span<const double> raw_states() const { return x_; }

  bool operator==(const Trajectory&) const = default;

private:
  std::size_t n_ = 0;
  std::size_t horizon_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> x_;
  std::vector<double> stock_;
  std::vector<std::uint8_t> events_;
  std::vector<std::uint8_t> outage_;
};

inline void check_dimensions(const SystemConfig& cfg, const Strategy& u) {
  if (u.components() != cfg.n || u.horizon() != cfg.horizon)
    throw DimensionError("strategy is " + std::to_string(u.components()) + "x" +
                         std::to_string(u.horizon()) + ", system expects " + std::to_string(cfg.n) +
                         "x" + std::to_string(cfg.horizon));
}

inline void check_dimensions(const SystemConfig& cfg, const Scenario& w) {
  if (w.components() != cfg.n || w.horizon() != cfg.horizon)
    throw DimensionError("scenario is " + std::to_string(w.components()) + "x" +
                         std::to_string(w.horizon()) + ", system expects " + std::to_string(cfg.n) +
                         "x" + std::to_string(cfg.horizon));
}

}  // namespace pmopt
