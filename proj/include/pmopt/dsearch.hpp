#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

// Simplified mesh-adaptive direct search: poll-only by default, directions are the
// 2d columns ±H of a random Householder reflection H = I - 2vv', scaled by the
// mesh size and clipped to the box.

namespace pmopt::dsearch {

struct SearchBudget {
  std::size_t max_evals = 1000;
  std::uint64_t seed = 0;
  double initial_mesh = 1.0;
  double min_mesh = 1e-9;
  bool speculative_search = false;  // retry the last successful step before polling
  std::size_t expand_after = 3;     // consecutive successful iterations before the mesh doubles

  void validate() const {
    if (max_evals < 1) throw std::invalid_argument("max_evals must be at least 1");
    if (expand_after < 1) throw std::invalid_argument("expand_after must be at least 1");
    if (!(min_mesh > 0.0) || !(initial_mesh >= min_mesh))
      throw std::invalid_argument("mesh sizes must satisfy 0 < min_mesh <= initial_mesh");
  }
};

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static Bounds box(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }
  std::size_t dim() const { return lower.size(); }
};

struct SearchResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
  std::size_t iterations = 0;
  double final_mesh = 0.0;
};

namespace detail {

inline void check_inputs(std::span<const double> x0, const Bounds& b) {
  if (b.lower.size() != b.upper.size() || b.lower.empty())
    throw std::invalid_argument("bounds box is empty or malformed");
  if (x0.size() != b.lower.size()) throw std::invalid_argument("x0 has the wrong dimension");
  for (std::size_t k = 0; k < x0.size(); ++k) {
    if (!(b.lower[k] <= b.upper[k])) throw std::invalid_argument("bounds box is empty");
    if (!(x0[k] >= b.lower[k] && x0[k] <= b.upper[k]))
      throw std::invalid_argument("x0 lies outside the bounds");
  }
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (auto& e : v) {
      e = g(rng);
      norm += e * e;
    }
  }
  norm = std::sqrt(norm);
  for (auto& e : v) e /= norm;
  return v;
}

}  // namespace detail

/// Minimizes `objective` over the box. The first evaluation is always x0, so the
/// returned value never exceeds f(x0).
template <class Objective>
SearchResult minimize(Objective&& objective, std::span<const double> x0, const Bounds& bounds,
                      const SearchBudget& budget) {
  budget.validate();
  detail::check_inputs(x0, bounds);
  const std::size_t d = x0.size();
  std::mt19937_64 rng(budget.seed);

  SearchResult best;
  best.x.assign(x0.begin(), x0.end());
  best.value = objective(std::span<const double>(best.x));
  best.evals = 1;

  double max_mesh = 0.0;
  for (std::size_t k = 0; k < d; ++k) max_mesh = std::max(max_mesh, bounds.upper[k] - bounds.lower[k]);
  if (max_mesh == 0.0) {
    best.final_mesh = budget.initial_mesh;
    return best;
  }
  double mesh = std::min(budget.initial_mesh, max_mesh);

  std::vector<double> trial(d), last_step;
  std::size_t first_dir = 0, streak = 0;

  auto clip_into = [&](auto&& dir_at, double scale) {
    bool moved = false;
    for (std::size_t k = 0; k < d; ++k) {
      trial[k] = std::clamp(best.x[k] + scale * dir_at(k), bounds.lower[k], bounds.upper[k]);
      moved = moved || trial[k] != best.x[k];
    }
    return moved;
  };
  auto accept = [&](double f) {
    last_step.resize(d);
    for (std::size_t k = 0; k < d; ++k) last_step[k] = trial[k] - best.x[k];
    best.x = trial;
    best.value = f;
  };

  while (best.evals < budget.max_evals && mesh >= budget.min_mesh) {
    ++best.iterations;
    bool success = false;

    if (budget.speculative_search && !last_step.empty()) {
      if (clip_into([&](std::size_t k) { return last_step[k]; }, 1.0)) {
        const double f = objective(std::span<const double>(trial));
        ++best.evals;
        if (f < best.value) {
          accept(f);
          success = true;
        } else {
          last_step.clear();
        }
      }
    }

    if (!success) {
      const auto v = detail::random_unit(rng, d);
      // columns of H are e_j - 2 v_j v; poll them in ± pairs, starting from the last winner
      for (std::size_t m = 0; m < 2 * d && best.evals < budget.max_evals; ++m) {
        const std::size_t idx = (first_dir + m) % (2 * d);
        const std::size_t j = idx / 2;
        const double sign = idx % 2 == 0 ? 1.0 : -1.0;
        auto column = [&](std::size_t k) { return sign * ((k == j ? 1.0 : 0.0) - 2.0 * v[j] * v[k]); };
        if (!clip_into(column, mesh)) continue;
        const double f = objective(std::span<const double>(trial));
        ++best.evals;
        if (f < best.value) {
          accept(f);
          success = true;
          first_dir = idx;
          break;
        }
      }
    }

    if (success) {
      if (++streak >= budget.expand_after) {
        mesh = std::min(2.0 * mesh, max_mesh);
        streak = 0;
      }
    } else {
      streak = 0;
      mesh *= 0.5;
      last_step.clear();
    }
  }
  best.final_mesh = mesh;
  return best;
}

}  // namespace pmopt::dsearch
