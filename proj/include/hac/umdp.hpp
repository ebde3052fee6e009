#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed per-dimension box [low, high].
struct Bounds {
  Vec low;
  Vec high;

  Bounds() = default;
  Bounds(Vec lo, Vec hi) : low(std::move(lo)), high(std::move(hi)) {
    if (low.size() != high.size()) throw ConfigError("bounds: low/high size mismatch");
    for (Eigen::Index i = 0; i < low.size(); ++i)
      if (!(low[i] <= high[i])) throw ConfigError("bounds: low > high in dimension " + std::to_string(i));
  }

  Eigen::Index dim() const { return low.size(); }
  Vec center() const { return 0.5 * (low + high); }
  Vec halfwidth() const { return 0.5 * (high - low); }
  Vec clip(const Vec& v) const { return v.cwiseMax(low).cwiseMin(high); }
  bool contains(const Vec& v) const {
    return v.size() == low.size() && (v.array() >= low.array()).all() && (v.array() <= high.array()).all();
  }
  Vec sample(Rng& rng) const {
    Vec out(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) out[i] = std::uniform_real_distribution<double>(low[i], high[i])(rng);
    return out;
  }
};

// A goal space: which state dimensions a goal constrains and how closely.
// An empty projection means the goal lives in the full state space.
struct GoalSpace {
  std::vector<std::size_t> projection;
  Vec thresholds;

  Vec project(const Vec& state) const {
    if (projection.empty()) return state;
    Vec out(static_cast<Eigen::Index>(projection.size()));
    for (std::size_t i = 0; i < projection.size(); ++i) {
      if (projection[i] >= static_cast<std::size_t>(state.size()))
        throw ConfigError("goal projection index out of range");
      out[static_cast<Eigen::Index>(i)] = state[static_cast<Eigen::Index>(projection[i])];
    }
    return out;
  }
  Eigen::Index dim(Eigen::Index state_dim) const {
    return projection.empty() ? state_dim : static_cast<Eigen::Index>(projection.size());
  }
};

/// True iff every component of |achieved - goal| is within its threshold.
/// The comparison is inclusive, so a zero threshold demands exact equality;
/// discrete environments rely on this to express cell-index matching.
inline bool goal_achieved(const Vec& achieved, const Vec& goal, const Vec& thresholds) {
  if (achieved.size() != goal.size() || goal.size() != thresholds.size())
    throw ConfigError("goal_achieved: dimension mismatch (state " + std::to_string(achieved.size()) + ", goal " +
                      std::to_string(goal.size()) + ", thresholds " + std::to_string(thresholds.size()) + ")");
  for (Eigen::Index i = 0; i < goal.size(); ++i)
    if (!(std::abs(achieved[i] - goal[i]) <= thresholds[i])) return false;
  return true;
}

inline bool goal_achieved(const GoalSpace& space, const Vec& state, const Vec& goal) {
  return goal_achieved(space.project(state), goal, space.thresholds);
}

// Sparse reward: 0 in the goal region, -1 elsewhere.
inline double shortest_path_reward(const Vec& achieved, const Vec& goal, const Vec& thresholds) {
  return goal_achieved(achieved, goal, thresholds) ? 0.0 : -1.0;
}

inline double discount_for(const Vec& achieved, const Vec& goal, const Vec& thresholds, double gamma,
                           bool tested_and_missed) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("discount_for: gamma must lie in [0,1)");
  if (goal_achieved(achieved, goal, thresholds) || tested_and_missed) return 0.0;
  return gamma;
}

// The task-level UMDP: state space, primitive actions, end goals, discount.
// Subgoal levels reuse the state space as both goal and action space.
struct UmdpSpec {
  std::size_t state_dim = 0;
  Bounds state_bounds;
  bool discrete = false;
  Bounds action_bounds;          // continuous primitive actions
  std::size_t action_count = 0;  // discrete primitive actions
  std::size_t state_count = 0;   // discrete state cardinality
  GoalSpace end_goal;
  Vec subgoal_thresholds;  // per state dimension
  Bounds end_goal_bounds;
  double gamma = 0.98;

  std::size_t end_goal_dim() const {
    return end_goal.projection.empty() ? state_dim : end_goal.projection.size();
  }
  GoalSpace subgoal_space() const { return GoalSpace{{}, subgoal_thresholds}; }

  void validate() const {
    if (state_dim == 0) throw ConfigError("umdp: state_dim must be positive");
    if (static_cast<std::size_t>(state_bounds.dim()) != state_dim) throw ConfigError("umdp: state bounds dimension");
    std::vector<bool> seen(state_dim, false);
    for (auto idx : end_goal.projection) {
      if (idx >= state_dim) throw ConfigError("umdp: end-goal projection index out of range");
      if (seen[idx]) throw ConfigError("umdp: duplicate end-goal projection index");
      seen[idx] = true;
    }
    if (static_cast<std::size_t>(end_goal.thresholds.size()) != end_goal_dim())
      throw ConfigError("umdp: end-goal thresholds length must equal end-goal dimension");
    if (static_cast<std::size_t>(subgoal_thresholds.size()) != state_dim)
      throw ConfigError("umdp: subgoal thresholds length must equal state dimension");
    if ((end_goal.thresholds.array() < 0).any() || (subgoal_thresholds.array() < 0).any())
      throw ConfigError("umdp: thresholds must be nonnegative");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("umdp: gamma must lie in [0,1)");
    if (discrete) {
      if (action_count == 0) throw ConfigError("umdp: discrete action count must be positive");
      if (state_count == 0) throw ConfigError("umdp: discrete state count must be positive");
    } else if (action_bounds.dim() == 0) {
      throw ConfigError("umdp: continuous action bounds missing");
    }
  }
};

}  // namespace hac
