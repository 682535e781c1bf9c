#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

namespace pmopt {

/// Two-parameter Weibull life law, F(x) = 1 - exp(-(x/λ)^k).
struct Weibull {
  double shape;
  double scale;

  double cumulative_hazard(double x) const { return std::pow(x / scale, shape); }
  double cdf(double x) const { return x <= 0.0 ? 0.0 : -std::expm1(-cumulative_hazard(x)); }
  double survival(double x) const { return x <= 0.0 ? 1.0 : std::exp(-cumulative_hazard(x)); }
  double mean() const { return scale * std::tgamma(1.0 + 1.0 / shape); }

  /// Inverse-CDF draw.
  template <class Rng>
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double v = unif(rng);
    return scale * std::pow(-std::log1p(-v), 1.0 / shape);
  }
};

/// Conditional probability that a component of age `age` fails within the next `dt`:
/// (F(age+dt) - F(age)) / (1 - F(age)).
///
/// Evaluated as 1 - exp(H(age) - H(age+dt)) with H the cumulative hazard, which
/// is algebraically identical and avoids cancellation at large ages. Returns 1
/// when the survival at `age` underflows.
inline double failure_probability(double shape, double scale, double age, double dt) {
  if (age < 0.0 || std::isnan(age)) throw std::domain_error("failure_probability: negative age");
  if (dt <= 0.0) return 0.0;
  const Weibull law{shape, scale};
  const double h0 = law.cumulative_hazard(age);
  if (std::exp(-h0) == 0.0) return 1.0;
  const double h1 = law.cumulative_hazard(age + dt);
  return -std::expm1(h0 - h1);
}

/// d/d(age) of failure_probability.
inline double failure_probability_derivative(double shape, double scale, double age, double dt) {
  if (age < 0.0 || std::isnan(age)) throw std::domain_error("failure_probability: negative age");
  if (dt <= 0.0) return 0.0;
  const Weibull law{shape, scale};
  const double h0 = law.cumulative_hazard(age);
  if (std::exp(-h0) == 0.0) return 0.0;
  const double h1 = law.cumulative_hazard(age + dt);
  // hazard rate (k/λ)(x/λ)^{k-1}; unbounded at 0 when k < 1, taken as 0 there (kink)
  auto rate = [&](double x) {
    if (x == 0.0) return shape == 1.0 ? 1.0 / scale : 0.0;
    return (shape / scale) * std::pow(x / scale, shape - 1.0);
  };
  return std::exp(h0 - h1) * (rate(age + dt) - rate(age));
}

/// Time to first failure of a never-maintained component, sampled by stepping the
/// conditional failure law on a grid of width `dt` and reporting the midpoint of
/// the step in which the failure happens.
template <class Rng>
double sample_time_to_failure(double shape, double scale, double dt, Rng& rng,
                              std::size_t max_steps = 1u << 24) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t k = 0; k < max_steps; ++k) {
    const double age = static_cast<double>(k) * dt;
    if (unif(rng) < failure_probability(shape, scale, age, dt)) return age + 0.5 * dt;
  }
  return static_cast<double>(max_steps) * dt;
}

}  // namespace pmopt
