#pragma once

#include "hac/env.hpp"
#include "hac/umdp.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

// Step-distance oracle for PointMass2D.
//
// Per axis the dynamics are v' = v + u dt / m, p' = p + v' dt with |u| <= F.
// After n steps from (p0, v0):
//   v_n = v0 + (dt/m) sum_t u_t
//   p_n = p0 + n dt v0 + (dt^2/m) sum_t (n - t) u_t,   t = 0..n-1
// so the reachable (p, v) set is a zonotope with generators
// F * ((n - t) dt^2/m, dt/m). A clipped velocity step equals an unclipped
// step under a weaker admissible force, so velocity clipping never leaves
// the set. Position clipping at the arena walls is not modelled.

namespace hac {

namespace detail {

struct Interval {
  double lo, hi;
};

// Zonotope {c + sum a_t g_t : |a_t| <= 1} against the box [p_lo,p_hi] x [v_lo,v_hi].
inline bool zonotope_meets_box(double cp, double cv, const std::vector<std::array<double, 2>>& gens, Interval bp,
                               Interval bv) {
  auto separated = [&](double ax, double ay) {
    double center = ax * cp + ay * cv;
    double radius = 0;
    for (const auto& g : gens) radius += std::abs(ax * g[0] + ay * g[1]);
    double b1 = ax * bp.lo, b2 = ax * bp.hi, c1 = ay * bv.lo, c2 = ay * bv.hi;
    double box_lo = std::min(b1, b2) + std::min(c1, c2);
    double box_hi = std::max(b1, b2) + std::max(c1, c2);
    // Small slack keeps boundary contact classified as touching.
    double tol = 1e-12 * (1 + std::abs(center) + radius + std::abs(box_lo) + std::abs(box_hi));
    return center + radius < box_lo - tol || center - radius > box_hi + tol;
  };
  if (separated(1, 0) || separated(0, 1)) return false;
  for (const auto& g : gens)
    if (separated(-g[1], g[0])) return false;
  return true;
}

}  // namespace detail

/// True when some admissible control sequence of exactly n steps could bring
/// one axis from (p0, v0) into the given position/velocity intervals.
inline bool axis_reachable_in(const PointMassParams& prm, std::size_t n, double p0, double v0, double p_lo,
                              double p_hi, double v_lo, double v_hi) {
  double dt = prm.dt, k = prm.force_limit / prm.mass;
  std::vector<std::array<double, 2>> gens;
  gens.reserve(n);
  for (std::size_t t = 0; t < n; ++t) gens.push_back({k * static_cast<double>(n - t) * dt * dt, k * dt});
  double cp = p0 + static_cast<double>(n) * dt * v0;
  return detail::zonotope_meets_box(cp, v0, gens, {p_lo, p_hi}, {v_lo, v_hi});
}

/// Smallest n in [0, max_steps] for which the full-state subgoal could be
/// achieved within its thresholds at step n; nullopt if none.
inline std::optional<std::size_t> point_mass_min_steps(const PointMassParams& prm, const Vec& state, const Vec& subgoal,
                                                       const Vec& thresholds, std::size_t max_steps) {
  if (state.size() != 4 || subgoal.size() != 4 || thresholds.size() != 4)
    throw ConfigError("point-mass distance oracle expects 4-dimensional state, subgoal and thresholds");
  for (std::size_t n = 0; n <= max_steps; ++n) {
    bool ok = true;
    for (int axis = 0; axis < 2 && ok; ++axis) {
      int p = axis, v = axis + 2;
      ok = axis_reachable_in(prm, n, state[p], state[v], subgoal[p] - thresholds[p], subgoal[p] + thresholds[p],
                             subgoal[v] - thresholds[v], subgoal[v] + thresholds[v]);
    }
    if (ok) return n;
  }
  return std::nullopt;
}

/// True when the subgoal cannot be achieved within max_steps primitive steps.
inline bool point_mass_farther_than(const PointMassParams& prm, const Vec& state, const Vec& subgoal,
                                    const Vec& thresholds, std::size_t max_steps) {
  return !point_mass_min_steps(prm, state, subgoal, thresholds, max_steps).has_value();
}

}  // namespace hac
