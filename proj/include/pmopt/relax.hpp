#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pmopt/config.hpp"
#include "pmopt/dynamics.hpp"
#include "pmopt/state.hpp"
#include "pmopt/weibull.hpp"

// Continuous relaxation of the fleet dynamics. Every indicator 1_A is replaced by a
// piecewise-linear ramp of slope 2α; complementary conditions are written as
// 1 - (relaxed indicator) so that each pair still sums to one.

namespace pmopt::relax {

enum class SetKind { singleton, nonneg, strict_pos };

struct SetDescriptor {
  SetKind kind = SetKind::singleton;
  double point = 0.0;  // only meaningful for singletons

  static SetDescriptor singleton(double a) { return {SetKind::singleton, a}; }
  static SetDescriptor nonneg() { return {SetKind::nonneg, 0.0}; }
  static SetDescriptor strict_pos() { return {SetKind::strict_pos, 0.0}; }
};

struct RelaxationContext {
  double alpha = 1.0;

  explicit RelaxationContext(double a) : alpha(a) {
    if (!(a > 0.0)) throw std::invalid_argument("relaxation parameter must be positive");
  }
  double band() const { return 0.5 / alpha; }
};

/// Records, while installed on the current thread, which linear piece every
/// relaxed indicator (and min operator) evaluated on. Used to flag evaluations that
/// fall strictly inside a relaxation band and to certify that finite-difference
/// probes do not straddle a kink.
struct BandMonitor {
  bool band_hit = false;
  std::size_t band_hits = 0;
  std::size_t evaluations = 0;
  double min_kink_distance = std::numeric_limits<double>::infinity();
  std::uint64_t signature = 1469598103934665603ull;

  void record(unsigned piece, double kink_distance, bool in_band) {
    ++evaluations;
    if (in_band) {
      band_hit = true;
      ++band_hits;
    }
    min_kink_distance = std::min(min_kink_distance, kink_distance);
    signature = (signature ^ (piece + 1u)) * 1099511628211ull;
  }
};

namespace detail {
inline thread_local BandMonitor* active_monitor = nullptr;
}

/// Installs a monitor for the lifetime of the scope.
class MonitorScope {
public:
  explicit MonitorScope(BandMonitor& m) : previous_(detail::active_monitor) {
    detail::active_monitor = &m;
  }
  ~MonitorScope() { detail::active_monitor = previous_; }
  MonitorScope(const MonitorScope&) = delete;
  MonitorScope& operator=(const MonitorScope&) = delete;

private:
  BandMonitor* previous_;
};

inline double relaxed_indicator(SetDescriptor set, double x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("relaxation parameter must be positive");
  const double b = 0.5 / alpha;
  double value = 0.0;
  unsigned piece = 0;
  double kink = 0.0;
  bool in_band = false;
  switch (set.kind) {
    case SetKind::singleton: {
      const double dist = std::abs(x - set.point);
      value = dist <= b ? 1.0 - 2.0 * alpha * dist : 0.0;
      piece = dist >= b ? 0u : (x < set.point ? 1u : (x > set.point ? 2u : 3u));
      kink = std::min(dist, std::abs(dist - b));
      in_band = dist > 0.0 && dist < b;
      break;
    }
    case SetKind::nonneg:
      value = x >= 0.0 ? 1.0 : (x > -b ? 2.0 * alpha * x + 1.0 : 0.0);
      piece = x >= 0.0 ? 2u : (x > -b ? 1u : 0u);
      kink = std::min(std::abs(x), std::abs(x + b));
      in_band = x > -b && x < 0.0;
      break;
    case SetKind::strict_pos:
      value = x <= 0.0 ? 0.0 : (x < b ? 2.0 * alpha * x : 1.0);
      piece = x <= 0.0 ? 0u : (x < b ? 1u : 2u);
      kink = std::min(std::abs(x), std::abs(x - b));
      in_band = x > 0.0 && x < b;
      break;
  }
  if (auto* m = detail::active_monitor) m->record(piece, kink, in_band);
  return value;
}

/// Slope of relaxed_indicator; 0 at every point where it is not differentiable.
inline double relaxed_indicator_derivative(SetDescriptor set, double x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("relaxation parameter must be positive");
  const double b = 0.5 / alpha;
  switch (set.kind) {
    case SetKind::singleton: {
      const double a = set.point;
      if (x > a - b && x < a) return 2.0 * alpha;
      if (x > a && x < a + b) return -2.0 * alpha;
      return 0.0;
    }
    case SetKind::nonneg:
      return (x > -b && x < 0.0) ? 2.0 * alpha : 0.0;
    case SetKind::strict_pos:
      return (x > 0.0 && x < b) ? 2.0 * alpha : 0.0;
  }
  return 0.0;
}

namespace detail {

inline double ind_zero(double x, double a) { return relaxed_indicator(SetDescriptor::singleton(0.0), x, a); }
inline double dind_zero(double x, double a) {
  return relaxed_indicator_derivative(SetDescriptor::singleton(0.0), x, a);
}
inline double ind_at(double p, double x, double a) { return relaxed_indicator(SetDescriptor::singleton(p), x, a); }
inline double dind_at(double p, double x, double a) {
  return relaxed_indicator_derivative(SetDescriptor::singleton(p), x, a);
}
inline double ind_nonneg(double x, double a) { return relaxed_indicator(SetDescriptor::nonneg(), x, a); }
inline double dind_nonneg(double x, double a) {
  return relaxed_indicator_derivative(SetDescriptor::nonneg(), x, a);
}
inline double ind_pos(double x, double a) { return relaxed_indicator(SetDescriptor::strict_pos(), x, a); }
inline double dind_pos(double x, double a) {
  return relaxed_indicator_derivative(SetDescriptor::strict_pos(), x, a);
}

/// min(a, b) with the left-branch convention at ties (derivative taken from `a`).
/// Returns the value; `left` tells which argument is active.
inline double tracked_min(double a, double b, bool& left) {
  left = a <= b;
  if (auto* m = active_monitor) m->record(left ? 0u : 1u, std::abs(a - b), false);
  return left ? a : b;
}

}  // namespace detail

/// Jacobian of the relaxed transition of one component with respect to its own
/// state, the broken count B = sum_{j<=i} 1^α_{0}(E_j), the stock and the control.
struct ComponentPartials {
  Eigen::MatrixXd d_self;     // ∂f_i/∂x_i (contains the B path through E_i)
  Eigen::VectorXd d_broken;   // ∂f_i/∂B
  Eigen::VectorXd d_stock;    // ∂f_i/∂S_t
  Eigen::VectorXd d_control;  // ∂f_i/∂u_{i,t}

  explicit ComponentPartials(std::size_t dim = 0)
      : d_self(Eigen::MatrixXd::Zero(dim, dim)), d_broken(Eigen::VectorXd::Zero(dim)),
        d_stock(Eigen::VectorXd::Zero(dim)), d_control(Eigen::VectorXd::Zero(dim)) {}
};

namespace detail {

/// Relaxed transition of component i on packed states. `lower_broken` is
/// sum_{j<i} 1^α_{0}(E_j). When `jac` is given it receives the analytic partials.
inline void relaxed_component_step(const SystemConfig& cfg, std::size_t i, double alpha,
                                   std::span<const double> x, double lower_broken, double stock,
                                   double u, double w, std::span<double> out,
                                   ComponentPartials* jac = nullptr) {
  const std::size_t D = cfg.delay;
  const double delta = cfg.delta;
  const auto& spec = cfg.component(i);
  const double E = x[0], A = x[1];

  const double e0 = ind_zero(E, alpha);
  const double B = lower_broken + e0;
  const double av = ind_nonneg(stock - B, alpha);
  const double pm = ind_nonneg(u - cfg.pm_threshold, alpha);
  const double pf = failure_probability(spec.weibull_shape, spec.weibull_scale, A, cfg.dt);
  const double nf = ind_nonneg(w - pf, alpha);
  const double sh = ind_pos(B - stock, alpha);
  const double h = 1.0 - e0;
  const double keep = pm + nf * (1.0 - pm);
  const double renewed = (1.0 - u) * A + 1.0;

  const double En = av * e0 + keep * h;
  const double ageing = sh * e0 + nf * (1.0 - pm) * h;
  const double An = (A + 1.0) * ageing + (1.0 - sh) * e0 + renewed * pm * h;
  out[0] = En;
  out[1] = An;

  const double e1 = ind_at(1.0, E, alpha);
  const double en = ind_zero(En, alpha);
  const double fail = e1 * en;

  const double PD = x[2 + D - 1];
  const double nD = ind_at(delta, PD, alpha);
  // no-failure update of slot d, and the update when a failure is recorded
  auto shifted = [&](std::size_t d) {
    const double nd = ind_at(delta, x[2 + d], alpha);
    return (x[2 + d] + 1.0) * (1.0 - nd) + delta * nd;
  };
  auto recorded = [&](std::size_t d) {
    double v = (x[2 + d] + 1.0) * (1.0 - ind_at(delta, x[2 + d], alpha)) * nD;
    if (d >= 1) v += delta * ind_at(delta, x[2 + d - 1], alpha);
    if (d + 1 < D) v += (x[2 + d + 1] + 1.0) * (1.0 - nD);
    return v;
  };
  for (std::size_t d = 0; d < D; ++d) out[2 + d] = shifted(d) * (1.0 - fail) + recorded(d) * fail;

  if (jac == nullptr) return;

  const double e0p = dind_zero(E, alpha);
  const double avp = dind_nonneg(stock - B, alpha);
  const double pmp = dind_nonneg(u - cfg.pm_threshold, alpha);
  const double pfp = failure_probability_derivative(spec.weibull_shape, spec.weibull_scale, A, cfg.dt);
  const double nfp = dind_nonneg(w - pf, alpha);
  const double shp = dind_pos(B - stock, alpha);

  // regime: partials with respect to the intermediate quantities
  const double dE_av = e0, dE_e0 = av - keep, dE_pm = h * (1.0 - nf), dE_nf = h * (1.0 - pm);
  // age
  const double dA_direct = ageing + (1.0 - u) * pm * h;
  const double dA_sh = (A + 1.0) * e0 - e0;
  const double dA_e0 = (A + 1.0) * (sh - nf * (1.0 - pm)) + (1.0 - sh) - renewed * pm;
  const double dA_nf = (A + 1.0) * (1.0 - pm) * h;
  const double dA_pm = -(A + 1.0) * nf * h + renewed * h;
  const double dA_u = -A * pm * h;

  const double dnf_dA = -nfp * pfp;

  const double dE_dB = -dE_av * avp;
  const double dE_dS = dE_av * avp;
  const double dE_dE = dE_e0 * e0p + dE_dB * e0p;
  const double dE_du = dE_pm * pmp;
  const double dE_dA = dE_nf * dnf_dA;

  const double dA_dB = dA_sh * shp;
  const double dA_dS = -dA_sh * shp;
  const double dA_dE = dA_e0 * e0p + dA_dB * e0p;
  const double dA_du = dA_pm * pmp + dA_u;
  const double dA_dA = dA_direct + dA_nf * dnf_dA;

  auto& J = *jac;
  J.d_self.setZero(D + 2, D + 2);
  J.d_broken.setZero(D + 2);
  J.d_stock.setZero(D + 2);
  J.d_control.setZero(D + 2);

  J.d_self(0, 0) = dE_dE;
  J.d_self(0, 1) = dE_dA;
  J.d_broken(0) = dE_dB;
  J.d_stock(0) = dE_dS;
  J.d_control(0) = dE_du;

  J.d_self(1, 0) = dA_dE;
  J.d_self(1, 1) = dA_dA;
  J.d_broken(1) = dA_dB;
  J.d_stock(1) = dA_dS;
  J.d_control(1) = dA_du;

  // failure weight fail = 1^α_{1}(E) 1^α_{0}(E') through E' and directly through E
  const double e1p = dind_at(1.0, E, alpha);
  const double enp = dind_zero(En, alpha);
  const double dfail_dEn = e1 * enp;
  const double dfail_dE = dfail_dEn * dE_dE + e1p * en;
  const double dfail_dA = dfail_dEn * dE_dA;
  const double dfail_dB = dfail_dEn * dE_dB;
  const double dfail_dS = dfail_dEn * dE_dS;
  const double dfail_du = dfail_dEn * dE_du;

  const double nDp = dind_at(delta, PD, alpha);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t row = 2 + d;
    const double P = x[2 + d];
    const double nd = ind_at(delta, P, alpha);
    const double ndp = dind_at(delta, P, alpha);
    const double jump = recorded(d) - shifted(d);

    J.d_self(row, 0) = jump * dfail_dE;
    J.d_self(row, 1) = jump * dfail_dA;
    J.d_broken(row) = jump * dfail_dB;
    J.d_stock(row) = jump * dfail_dS;
    J.d_control(row) = jump * dfail_du;

    // no-failure branch depends on P^d only
    J.d_self(row, 2 + d) += (1.0 - fail) * ((1.0 - nd) + (delta - (P + 1.0)) * ndp);
    // failure branch
    J.d_self(row, 2 + d) += fail * ((1.0 - nd) - (P + 1.0) * ndp) * nD;
    J.d_self(row, 2 + D - 1) += fail * (P + 1.0) * (1.0 - nd) * nDp;
    if (d >= 1) J.d_self(row, 2 + d - 1) += fail * delta * dind_at(delta, x[2 + d - 1], alpha);
    if (d + 1 < D) {
      J.d_self(row, 2 + d + 1) += fail * (1.0 - nD);
      J.d_self(row, 2 + D - 1) += -fail * (x[2 + d + 1] + 1.0) * nDp;
    }
  }
}

/// Relaxed stock transition on the packed system state.
inline double relaxed_stock_step(const SystemConfig& cfg, double alpha, std::span<const double> packed,
                                 double stock, bool* stock_branch = nullptr) {
  const std::size_t dim = cfg.state_dim();
  const double due = static_cast<double>(cfg.delay) - 1.0;
  double arrivals = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i)
    for (std::size_t d = 0; d < cfg.delay; ++d)
      arrivals += ind_at(due, packed[i * dim + 2 + d], alpha);
  double broken = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) broken += ind_zero(packed[i * dim], alpha);
  bool left = true;
  const double used = tracked_min(stock, broken, left);
  if (stock_branch) *stock_branch = left;
  return stock + arrivals - used;
}

}  // namespace detail

inline double lower_broken_sum(std::span<const ComponentState> states, std::size_t i, double alpha) {
  double s = 0.0;
  for (std::size_t j = 0; j < i; ++j) s += detail::ind_zero(states[j].regime, alpha);
  return s;
}

/// State of component i at t+1 under the relaxed dynamics.
inline ComponentState step_component_relaxed(const SystemConfig& cfg,
                                             std::span<const ComponentState> states, std::size_t i,
                                             double stock, double u, double w, double alpha) {
  RelaxationContext ctx(alpha);
  if (i >= states.size()) throw DimensionError("step_component_relaxed: index out of range");
  const auto x = states[i].packed();
  std::vector<double> out(cfg.state_dim());
  detail::relaxed_component_step(cfg, i, ctx.alpha, x, lower_broken_sum(states, i, alpha), stock, u,
                                 w, out);
  return ComponentState::unpack(out);
}

inline double step_stock_relaxed(const SystemConfig& cfg, std::span<const ComponentState> states,
                                 double stock, double alpha) {
  RelaxationContext ctx(alpha);
  if (states.size() != cfg.n) throw DimensionError("step_stock_relaxed: wrong component count");
  return detail::relaxed_stock_step(cfg, ctx.alpha, pmopt::detail::pack(states), stock);
}

/// Relaxed maintenance cost j^α_{i,t}; the PM term only exists for t < T.
inline double relaxed_maintenance_cost(const SystemConfig& cfg, std::size_t i, std::size_t t,
                                       const ComponentState& s, double u, double alpha) {
  const auto& c = cfg.component(i);
  const double beta = cfg.discount(t);
  double cost = beta * c.cm_cost * detail::ind_zero(s.regime, alpha) * detail::ind_zero(s.age, alpha);
  if (t < cfg.horizon) cost += beta * c.pm_cost * u * u;
  return cost;
}

/// Relaxed forced-outage cost j^{F,α}_t.
inline double relaxed_fo_cost(const SystemConfig& cfg, std::size_t t,
                              std::span<const ComponentState> states, double alpha) {
  double waiting = 0.0;
  for (const auto& s : states) waiting += detail::ind_zero(s.regime, alpha) * detail::ind_pos(s.age, alpha);
  return cfg.discount(t) * cfg.forced_outage_cost * std::min(1.0, waiting);
}

struct RelaxedCosts {
  std::vector<double> maintenance;  // per component
  double forced_outage = 0.0;
};

/// Relaxed maintenance cost of every component and the forced-outage cost at t.
inline RelaxedCosts relaxed_costs(const SystemConfig& cfg, std::size_t t,
                                  std::span<const ComponentState> states, std::span<const double> u_t,
                                  double alpha) {
  RelaxationContext ctx(alpha);
  RelaxedCosts r;
  for (std::size_t i = 0; i < states.size(); ++i)
    r.maintenance.push_back(
        relaxed_maintenance_cost(cfg, i, t, states[i], t < cfg.horizon ? u_t[i] : 0.0, ctx.alpha));
  r.forced_outage = relaxed_fo_cost(cfg, t, states, ctx.alpha);
  return r;
}

/// Gradient of j^α_{i,t} with respect to the packed state of component i.
inline Eigen::VectorXd maintenance_cost_gradient(const SystemConfig& cfg, std::size_t i, std::size_t t,
                                                 double beta, std::span<const double> x, double alpha) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(cfg.state_dim());
  const double scale = beta * cfg.component(i).cm_cost;
  g(0) = scale * detail::dind_zero(x[0], alpha) * detail::ind_zero(x[1], alpha);
  g(1) = scale * detail::ind_zero(x[0], alpha) * detail::dind_zero(x[1], alpha);
  (void)t;
  return g;
}

/// Gradient of j^{F,α}_t with respect to the packed state of one component, given
/// the waiting mass `others` contributed by the remaining components.
inline Eigen::VectorXd fo_cost_gradient(const SystemConfig& cfg, double beta, std::span<const double> x,
                                        double others, double alpha) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(cfg.state_dim());
  const double own = detail::ind_zero(x[0], alpha) * detail::ind_pos(x[1], alpha);
  bool capped = true;
  detail::tracked_min(1.0, others + own, capped);
  if (capped) return g;
  const double scale = beta * cfg.forced_outage_cost;
  g(0) = scale * detail::dind_zero(x[0], alpha) * detail::ind_pos(x[1], alpha);
  g(1) = scale * detail::ind_zero(x[0], alpha) * detail::dind_pos(x[1], alpha);
  return g;
}

/// Full set of Jacobian blocks of the relaxed transition of component i.
struct RelaxedPartials {
  Eigen::MatrixXd self;                // ∂f_i/∂x_i
  std::vector<Eigen::MatrixXd> lower;  // ∂f_i/∂x_j for j < i (only the regime column is nonzero)
  Eigen::VectorXd stock;               // ∂f_i/∂S_t
  Eigen::VectorXd control;             // ∂f_i/∂u_{i,t}
};

struct StockPartials {
  std::vector<Eigen::RowVectorXd> components;  // ∂f_S/∂x_i
  double stock = 0.0;                          // ∂f_S/∂S_t
};

inline RelaxedPartials relaxed_partials(const SystemConfig& cfg, std::span<const ComponentState> states,
                                        std::size_t i, double stock, double u, double w, double alpha) {
  RelaxationContext ctx(alpha);
  const std::size_t dim = cfg.state_dim();
  ComponentPartials J(dim);
  std::vector<double> out(dim);
  detail::relaxed_component_step(cfg, i, ctx.alpha, states[i].packed(), lower_broken_sum(states, i, alpha),
                                 stock, u, w, out, &J);
  RelaxedPartials r{J.d_self, {}, J.d_stock, J.d_control};
  for (std::size_t j = 0; j < i; ++j) {
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(dim, dim);
    block.col(0) = J.d_broken * detail::dind_zero(states[j].regime, alpha);
    r.lower.push_back(std::move(block));
  }
  return r;
}

namespace detail {

/// ∂f_S at a packed system state; `rows` receives n row vectors of length dim.
inline double stock_partials(const SystemConfig& cfg, double alpha, std::span<const double> packed,
                             double stock, Eigen::MatrixXd& rows) {
  const std::size_t dim = cfg.state_dim();
  const double due = static_cast<double>(cfg.delay) - 1.0;
  double broken = 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) broken += ind_zero(packed[i * dim], alpha);
  bool stock_branch = true;
  tracked_min(stock, broken, stock_branch);
  rows.setZero(cfg.n, dim);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    if (!stock_branch) rows(i, 0) = -dind_zero(packed[i * dim], alpha);
    for (std::size_t d = 0; d < cfg.delay; ++d) rows(i, 2 + d) = dind_at(due, packed[i * dim + 2 + d], alpha);
  }
  return stock_branch ? 0.0 : 1.0;
}

}  // namespace detail

inline StockPartials relaxed_stock_partials(const SystemConfig& cfg, std::span<const ComponentState> states,
                                            double stock, double alpha) {
  RelaxationContext ctx(alpha);
  Eigen::MatrixXd rows;
  StockPartials r;
  r.stock = detail::stock_partials(cfg, ctx.alpha, pmopt::detail::pack(states), stock, rows);
  for (std::size_t i = 0; i < cfg.n; ++i) r.components.push_back(rows.row(i));
  return r;
}

/// Full-system relaxed simulation from the all-new initial state. Event logs stay empty.
inline Trajectory simulate_relaxed(const SystemConfig& cfg, const Strategy& strategy,
                                   const Scenario& scenario, double alpha) {
  RelaxationContext ctx(alpha);
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
  for (std::size_t t = 0; t < T; ++t) {
    const double stock = traj.stock(t);
    double lower = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = traj.component(t, i);
      detail::relaxed_component_step(cfg, i, ctx.alpha, x, lower, stock, strategy(i, t), scenario(i, t),
                                     traj.component(t + 1, i));
      lower += detail::ind_zero(x[0], ctx.alpha);
    }
    traj.stock(t + 1) = detail::relaxed_stock_step(cfg, ctx.alpha, traj.slice(t), stock);
  }
  return traj;
}

inline CostBreakdown relaxed_total_cost(const SystemConfig& cfg, const Trajectory& traj,
                                        const Strategy& strategy, double alpha) {
  RelaxationContext ctx(alpha);
  check_dimensions(cfg, strategy);
  CostAccumulator acc(cfg);
  for (std::size_t t = 0; t <= cfg.horizon; ++t) {
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const double E = traj.regime(t, i), A = traj.age(t, i);
      acc.add_component(t, i, t < cfg.horizon ? strategy(i, t) : 0.0, detail::ind_zero(E, ctx.alpha),
                        detail::ind_zero(A, ctx.alpha), detail::ind_pos(A, ctx.alpha));
    }
    acc.close_step(t);
  }
  return acc.result();
}

}  // namespace pmopt::relax
