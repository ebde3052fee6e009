#pragma once

#include "hac/umdp.hpp"

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hac {

struct EnvState {
  Vec values;  // continuous state, or a single cell index for grid worlds
  std::size_t step_count = 0;
};

struct Task {
  EnvState start;
  Vec goal;
};

// Anything the agents can train against.
template <class E>
concept EnvironmentLike = requires(const E& env, const EnvState& s, const Vec& a, Rng& rng) {
  { env.spec() } -> std::convertible_to<const UmdpSpec&>;
  { env.step(s, a) } -> std::same_as<EnvState>;
  { env.sample_task(rng) } -> std::same_as<Task>;
};

inline constexpr int kMaxTaskSamples = 1000;

// ---------------------------------------------------------------------------
// Grid worlds

enum class GridMove : int { Up = 0, Down = 1, Left = 2, Right = 3 };

class GridWorld {
 public:
  // '#' is wall, '.' is floor. Rows must share one width.
  static GridWorld parse(const std::vector<std::string>& rows, bool require_four_rooms, double gamma = 0.98) {
    GridWorld g;
    if (rows.empty()) throw ConfigError("grid map has no rows");
    g.height_ = rows.size();
    g.width_ = rows.front().size();
    if (g.width_ == 0) throw ConfigError("grid map row 1 is empty");
    g.cell_to_state_.assign(g.width_ * g.height_, -1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != g.width_)
        throw ConfigError("grid map row " + std::to_string(r + 1) + " has width " + std::to_string(rows[r].size()) +
                          ", expected " + std::to_string(g.width_));
      for (std::size_t c = 0; c < g.width_; ++c) {
        char ch = rows[r][c];
        if (ch == '.') {
          g.cell_to_state_[r * g.width_ + c] = static_cast<int>(g.state_to_cell_.size());
          g.state_to_cell_.push_back(r * g.width_ + c);
        } else if (ch != '#') {
          throw ConfigError("grid map row " + std::to_string(r + 1) + " column " + std::to_string(c + 1) +
                            ": unexpected character '" + std::string(1, ch) + "'");
        }
      }
    }
    if (g.state_to_cell_.size() < 2) throw ConfigError("grid map needs at least two floor cells");
    g.rows_ = rows;
    g.build_spec(gamma);
    g.check_connected();
    if (require_four_rooms) g.check_four_rooms();
    return g;
  }

  // 11x11 with a cross-shaped wall and one doorway in each wall arm.
  static GridWorld four_rooms(double gamma = 0.98) { return parse(default_four_rooms_map(), true, gamma); }

  static std::vector<std::string> default_four_rooms_map() {
    return {
        ".....#.....",  //
        ".....#.....",  //
        "...........",  //
        ".....#.....",  //
        ".....#.....",  //
        "##.#####.##",  //
        ".....#.....",  //
        ".....#.....",  //
        "...........",  //
        ".....#.....",  //
        ".....#.....",  //
    };
  }

  static GridWorld chain(std::size_t n, double gamma = 0.98) {
    return parse({std::string(n, '.')}, false, gamma);
  }

  const UmdpSpec& spec() const { return spec_; }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t state_count() const { return state_to_cell_.size(); }
  const std::vector<std::string>& rows() const { return rows_; }
  std::size_t episode_limit() const { return episode_limit_; }
  void set_episode_limit(std::size_t n) { episode_limit_ = n; }

  std::pair<std::size_t, std::size_t> cell_of(std::size_t state) const {
    auto cell = state_to_cell_.at(state);
    return {cell / width_, cell % width_};
  }
  std::optional<std::size_t> state_at(std::size_t row, std::size_t col) const {
    if (row >= height_ || col >= width_) return std::nullopt;
    int s = cell_to_state_[row * width_ + col];
    if (s < 0) return std::nullopt;
    return static_cast<std::size_t>(s);
  }

  // Moves into walls or off the map leave the agent in place.
  std::size_t move(std::size_t state, std::size_t action) const {
    auto [r, c] = cell_of(state);
    long rr = static_cast<long>(r), cc = static_cast<long>(c);
    switch (static_cast<GridMove>(action)) {
      case GridMove::Up: --rr; break;
      case GridMove::Down: ++rr; break;
      case GridMove::Left: --cc; break;
      case GridMove::Right: ++cc; break;
    }
    if (rr < 0 || cc < 0) return state;
    auto next = state_at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
    return next ? *next : state;
  }

  EnvState step(const EnvState& s, const Vec& action) const {
    auto a = static_cast<std::size_t>(std::lround(action[0]));
    if (a >= 4) a = 3;
    EnvState next{Vec::Constant(1, static_cast<double>(move(index_of(s), a))), s.step_count + 1};
    return next;
  }

  Task sample_task(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, state_count() - 1);
    for (int attempt = 0; attempt < kMaxTaskSamples; ++attempt) {
      auto start = pick(rng);
      auto goal = pick(rng);
      if (start != goal)
        return Task{EnvState{Vec::Constant(1, static_cast<double>(start)), 0}, Vec::Constant(1, static_cast<double>(goal))};
    }
    throw ConfigError("grid world: could not sample a non-trivial task");
  }

  static std::size_t index_of(const EnvState& s) { return static_cast<std::size_t>(std::lround(s.values[0])); }

  // Breadth-first primitive-step distances from `from` (-1 when unreachable).
  std::vector<int> distances_from(std::size_t from) const {
    std::vector<int> dist(state_count(), -1);
    std::queue<std::size_t> frontier;
    dist[from] = 0;
    frontier.push(from);
    while (!frontier.empty()) {
      auto s = frontier.front();
      frontier.pop();
      for (std::size_t a = 0; a < 4; ++a) {
        auto n = move(s, a);
        if (dist[n] < 0) {
          dist[n] = dist[s] + 1;
          frontier.push(n);
        }
      }
    }
    return dist;
  }

 private:
  GridWorld() = default;

  void build_spec(double gamma) {
    spec_.state_dim = 1;
    spec_.discrete = true;
    spec_.state_count = state_count();
    spec_.action_count = 4;
    spec_.state_bounds = Bounds(Vec::Zero(1), Vec::Constant(1, static_cast<double>(state_count() - 1)));
    spec_.action_bounds = Bounds(Vec::Zero(1), Vec::Constant(1, 3.0));
    spec_.end_goal = GoalSpace{{0}, Vec::Zero(1)};
    spec_.subgoal_thresholds = Vec::Zero(1);
    spec_.end_goal_bounds = spec_.state_bounds;
    spec_.gamma = gamma;
    spec_.validate();
  }

  void check_connected() const {
    for (int d : distances_from(0))
      if (d < 0) throw ConfigError("grid map: floor cells are not all mutually reachable");
  }

  bool blocked(long r, long c) const {
    if (r < 0 || c < 0 || r >= static_cast<long>(height_) || c >= static_cast<long>(width_)) return true;
    return cell_to_state_[static_cast<std::size_t>(r) * width_ + static_cast<std::size_t>(c)] < 0;
  }

  // A doorway is a floor cell squeezed between walls on two opposite sides.
  // Removing every doorway must leave exactly four connected rooms.
  void check_four_rooms() const {
    std::vector<bool> doorway(state_count(), false);
    std::size_t doorways = 0;
    for (std::size_t s = 0; s < state_count(); ++s) {
      auto [r, c] = cell_of(s);
      long rr = static_cast<long>(r), cc = static_cast<long>(c);
      bool vertical = blocked(rr - 1, cc) && blocked(rr + 1, cc) && !blocked(rr, cc - 1) && !blocked(rr, cc + 1);
      bool horizontal = blocked(rr, cc - 1) && blocked(rr, cc + 1) && !blocked(rr - 1, cc) && !blocked(rr + 1, cc);
      if (vertical || horizontal) {
        doorway[s] = true;
        ++doorways;
      }
    }
    std::vector<int> room(state_count(), -1);
    int rooms = 0;
    for (std::size_t s = 0; s < state_count(); ++s) {
      if (doorway[s] || room[s] >= 0) continue;
      std::queue<std::size_t> frontier;
      room[s] = rooms;
      frontier.push(s);
      while (!frontier.empty()) {
        auto u = frontier.front();
        frontier.pop();
        for (std::size_t a = 0; a < 4; ++a) {
          auto n = move(u, a);
          if (!doorway[n] && room[n] < 0) {
            room[n] = rooms;
            frontier.push(n);
          }
        }
      }
      ++rooms;
    }
    if (rooms != 4)
      throw ConfigError("four-rooms map: expected 4 rooms separated by one-cell doorways, found " +
                        std::to_string(rooms) + " (" + std::to_string(doorways) + " doorways)");
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::string> rows_;
  std::vector<int> cell_to_state_;
  std::vector<std::size_t> state_to_cell_;
  std::size_t episode_limit_ = 100;
  UmdpSpec spec_;
};

// ---------------------------------------------------------------------------
// Point mass: state (px, py, vx, vy), action (fx, fy), double integrator
// integrated with semi-implicit Euler.

struct PointMassParams {
  double mass = 1.0;
  double dt = 0.05;
  double force_limit = 1.0;
  double arena = 1.0;  // positions in [-arena, arena]
  double velocity_limit = 1.0;
  double goal_threshold = 0.2;
  double velocity_threshold = 0.3;
  double gamma = 0.98;
};

class PointMass2D {
 public:
  explicit PointMass2D(PointMassParams p = {}) : p_(p) {
    if (!(p_.mass > 0 && p_.dt > 0 && p_.force_limit > 0 && p_.arena > 0 && p_.velocity_limit > 0))
      throw ConfigError("point mass: physical constants must be positive");
    Vec lo(4), hi(4);
    lo << -p_.arena, -p_.arena, -p_.velocity_limit, -p_.velocity_limit;
    hi = -lo;
    spec_.state_dim = 4;
    spec_.state_bounds = Bounds(lo, hi);
    spec_.action_bounds = Bounds(Vec::Constant(2, -p_.force_limit), Vec::Constant(2, p_.force_limit));
    spec_.end_goal = GoalSpace{{0, 1}, Vec::Constant(2, p_.goal_threshold)};
    spec_.subgoal_thresholds = Vec(4);
    spec_.subgoal_thresholds << p_.goal_threshold, p_.goal_threshold, p_.velocity_threshold, p_.velocity_threshold;
    spec_.end_goal_bounds = Bounds(Vec::Constant(2, -p_.arena), Vec::Constant(2, p_.arena));
    spec_.gamma = p_.gamma;
    spec_.validate();
  }

  const UmdpSpec& spec() const { return spec_; }
  const PointMassParams& params() const { return p_; }

  EnvState step(const EnvState& s, const Vec& action) const {
    Vec force = spec_.action_bounds.clip(action);
    Vec next(4);
    for (int d = 0; d < 2; ++d) {
      double v = std::clamp(s.values[2 + d] + force[d] / p_.mass * p_.dt, -p_.velocity_limit, p_.velocity_limit);
      next[2 + d] = v;
      next[d] = std::clamp(s.values[d] + v * p_.dt, -p_.arena, p_.arena);
    }
    return EnvState{next, s.step_count + 1};
  }

  // Start at rest anywhere in the arena; goal position anywhere not already achieved.
  Task sample_task(Rng& rng) const {
    for (int attempt = 0; attempt < kMaxTaskSamples; ++attempt) {
      Vec start = Vec::Zero(4);
      start.head(2) = spec_.end_goal_bounds.sample(rng);
      Vec goal = spec_.end_goal_bounds.sample(rng);
      if (!goal_achieved(spec_.end_goal, start, goal)) return Task{EnvState{start, 0}, goal};
    }
    throw ConfigError("point mass: could not sample a non-trivial task");
  }

 private:
  PointMassParams p_;
  UmdpSpec spec_;
};

// ---------------------------------------------------------------------------
// Frictionless rigid pendulum, theta = 0 hanging down, state (theta, theta_dot).

struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double dt = 0.01;
  double torque_limit = 2.0;
  double gravity = 9.81;
  double velocity_limit = 8.0;
  double target_low = 2.6;  // end-goal angle range
  double target_high = 3.1;
  double angle_threshold = 0.1;
  double velocity_threshold = 0.3;
  double gamma = 0.98;
};

class Pendulum {
 public:
  explicit Pendulum(PendulumParams p = {}) : p_(p) {
    if (!(p_.mass > 0 && p_.length > 0 && p_.dt > 0 && p_.torque_limit > 0 && p_.gravity > 0 && p_.velocity_limit > 0))
      throw ConfigError("pendulum: physical constants must be positive");
    if (!(p_.target_low <= p_.target_high)) throw ConfigError("pendulum: empty target range");
    Vec lo(2), hi(2);
    lo << -kPi, -p_.velocity_limit;
    hi << kPi, p_.velocity_limit;
    spec_.state_dim = 2;
    spec_.state_bounds = Bounds(lo, hi);
    spec_.action_bounds = Bounds(Vec::Constant(1, -p_.torque_limit), Vec::Constant(1, p_.torque_limit));
    spec_.end_goal = GoalSpace{{0}, Vec::Constant(1, p_.angle_threshold)};
    spec_.subgoal_thresholds = Vec(2);
    spec_.subgoal_thresholds << p_.angle_threshold, p_.velocity_threshold;
    spec_.end_goal_bounds = Bounds(Vec::Constant(1, p_.target_low), Vec::Constant(1, p_.target_high));
    spec_.gamma = p_.gamma;
    spec_.validate();
  }

  static constexpr double kPi = 3.14159265358979323846;

  const UmdpSpec& spec() const { return spec_; }
  const PendulumParams& params() const { return p_; }

  EnvState step(const EnvState& s, const Vec& action) const {
    double torque = std::clamp(action[0], -p_.torque_limit, p_.torque_limit);
    double theta = s.values[0];
    double accel = -(p_.gravity / p_.length) * std::sin(theta) + torque / (p_.mass * p_.length * p_.length);
    double omega = std::clamp(s.values[1] + accel * p_.dt, -p_.velocity_limit, p_.velocity_limit);
    theta = wrap_angle(theta + omega * p_.dt);
    Vec next(2);
    next << theta, omega;
    return EnvState{next, s.step_count + 1};
  }

  // Start at rest near the bottom; goal angle from the declared target range.
  Task sample_task(Rng& rng) const {
    for (int attempt = 0; attempt < kMaxTaskSamples; ++attempt) {
      Vec start(2);
      start << std::uniform_real_distribution<double>(-0.5, 0.5)(rng), 0.0;
      Vec goal = spec_.end_goal_bounds.sample(rng);
      if (!goal_achieved(spec_.end_goal, start, goal)) return Task{EnvState{start, 0}, goal};
    }
    throw ConfigError("pendulum: could not sample a non-trivial task");
  }

  static double wrap_angle(double a) {
    double w = std::fmod(a + kPi, 2 * kPi);
    if (w < 0) w += 2 * kPi;
    return w - kPi;
  }

 private:
  PendulumParams p_;
  UmdpSpec spec_;
};

// ---------------------------------------------------------------------------

using EnvKind = std::variant<GridWorld, PointMass2D, Pendulum>;

inline EnvState env_step(const EnvKind& kind, const EnvState& state, const Vec& action) {
  return std::visit([&](const auto& e) { return e.step(state, action); }, kind);
}

inline Task sample_task(const EnvKind& kind, Rng& rng) {
  return std::visit([&](const auto& e) { return e.sample_task(rng); }, kind);
}

// Value wrapper so agents can hold any built-in environment.
class Environment {
 public:
  Environment(EnvKind kind) : kind_(std::move(kind)) {}  // NOLINT(google-explicit-constructor)

  const UmdpSpec& spec() const {
    return std::visit([](const auto& e) -> const UmdpSpec& { return e.spec(); }, kind_);
  }
  EnvState step(const EnvState& s, const Vec& a) const { return env_step(kind_, s, a); }
  Task sample_task(Rng& rng) const { return hac::sample_task(kind_, rng); }
  const EnvKind& kind() const { return kind_; }
  template <class T>
  const T* as() const { return std::get_if<T>(&kind_); }

 private:
  EnvKind kind_;
};

}  // namespace hac
