#pragma once

#include "hac/env.hpp"
#include "hac/transitions.hpp"
#include "hac/umdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hac {

// Discrete environments additionally expose their episode step limit.
template <class E>
concept DiscreteEnvironment = EnvironmentLike<E> && requires(const E& env) {
  { env.episode_limit() } -> std::convertible_to<std::size_t>;
};

/// Dense Q(s, g, a) table for one hierarchy level.
class QTable {
 public:
  QTable() = default;
  QTable(int level_index, std::size_t states, std::size_t goals, std::size_t actions, double init, double alpha)
      : level_index_(level_index),
        states_(states),
        goals_(goals),
        actions_(actions),
        alpha_(alpha),
        values_(states * goals * actions, init) {}

  double& at(std::size_t s, std::size_t g, std::size_t a) { return values_[index(s, g, a)]; }
  double at(std::size_t s, std::size_t g, std::size_t a) const { return values_[index(s, g, a)]; }
  const double* row(std::size_t s, std::size_t g) const { return &values_[index(s, g, 0)]; }

  double max_action_value(std::size_t s, std::size_t g) const {
    const double* r = row(s, g);
    return *std::max_element(r, r + actions_);
  }

  std::size_t state_count() const { return states_; }
  std::size_t goal_count() const { return goals_; }
  std::size_t action_count() const { return actions_; }
  int level_index() const { return level_index_; }
  double alpha() const { return alpha_; }
  void set_alpha(double a) { alpha_ = a; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t index(std::size_t s, std::size_t g, std::size_t a) const { return (s * goals_ + g) * actions_ + a; }

  int level_index_ = 0;
  std::size_t states_ = 0, goals_ = 0, actions_ = 0;
  double alpha_ = 0.1;
  std::vector<double> values_;
};

/// Ring of the most recent primitive-step states, capacity H^i.
class PrevStateWindow {
 public:
  explicit PrevStateWindow(std::size_t capacity = 1) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("previous-state window capacity must be positive");
  }
  void push(std::size_t s) {
    if (states_.size() < capacity_) {
      states_.push_back(s);
    } else {
      states_[head_] = s;
      head_ = (head_ + 1) % capacity_;
    }
  }
  void clear() {
    states_.clear();
    head_ = 0;
  }
  std::size_t size() const { return states_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Oldest first.
  std::size_t operator[](std::size_t i) const { return states_[(head_ + i) % states_.size()]; }

 private:
  std::size_t capacity_;
  std::vector<std::size_t> states_;
  std::size_t head_ = 0;
};

/// H^n with an overflow guard; values must stay exactly representable as doubles.
inline std::uint64_t checked_power(std::size_t H, int n) {
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 53;
  std::uint64_t out = 1;
  for (int i = 0; i < n; ++i) {
    if (H != 0 && out > kLimit / H) throw ConfigError("H^" + std::to_string(n) + " exceeds the representable range");
    out *= H;
  }
  return out;
}

/// Pessimistic initialization: level i starts uniformly at -H^(i+1).
/// Level 0 acts over primitive actions, higher levels over states.
inline std::vector<QTable> init_tables(int k, std::size_t H, std::size_t state_count, std::size_t action_count,
                                       double alpha = 0.1) {
  if (k < 1) throw ConfigError("init_tables: k must be positive");
  if (H == 0) throw ConfigError("init_tables: H must be positive");
  std::vector<QTable> tables;
  for (int i = 0; i < k; ++i) {
    double init = -static_cast<double>(checked_power(H, i + 1));
    std::size_t actions = i == 0 ? action_count : state_count;
    tables.emplace_back(i, state_count, state_count, actions, init, alpha);
  }
  return tables;
}

/// One-step update of Q0(s, g, a) for every goal g.
inline void update_primitive(QTable& q0, std::size_t s, std::size_t a, std::size_t s_next, double gamma) {
  const double alpha = q0.alpha();
  for (std::size_t g = 0; g < q0.goal_count(); ++g) {
    double target = s_next == g ? 0.0 : -1.0 + gamma * q0.max_action_value(s_next, g);
    double& q = q0.at(s, g, a);
    q = (1.0 - alpha) * q + alpha * target;
  }
}

/// Treats s0_next as a subgoal reached in hindsight from every windowed state.
/// Loops run goal-major; within one goal the bootstrap max is refreshed when a
/// write lands on the row it reads, which matches the state-major order.
inline void update_subgoal_levels(std::vector<QTable>& tables, const std::vector<PrevStateWindow>& windows,
                                  std::size_t s0_next, double gamma) {
  for (std::size_t i = 1; i < tables.size(); ++i) {
    QTable& q = tables[i];
    const PrevStateWindow& window = windows[i];
    if (window.size() == 0) continue;
    const double alpha = q.alpha();
    for (std::size_t g = 0; g < q.goal_count(); ++g) {
      bool terminal = s0_next == g;
      double best = terminal ? 0.0 : q.max_action_value(s0_next, g);
      for (std::size_t w = 0; w < window.size(); ++w) {
        std::size_t s = window[w];
        double target = terminal ? 0.0 : -1.0 + gamma * best;
        double& entry = q.at(s, g, s0_next);
        entry = (1.0 - alpha) * entry + alpha * target;
        if (!terminal && s == s0_next) best = q.max_action_value(s0_next, g);
      }
    }
  }
}

/// Uniform action with probability epsilon, else a uniformly chosen maximizer.
inline std::size_t epsilon_greedy(const QTable& q, std::size_t s, std::size_t g, double epsilon, Rng& rng) {
  std::size_t n = q.action_count();
  if (epsilon > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon)
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  const double* r = q.row(s, g);
  double best = *std::max_element(r, r + n);
  std::size_t ties = 0;
  for (std::size_t a = 0; a < n; ++a) ties += r[a] == best;
  std::size_t pick = ties == 1 ? 0 : std::uniform_int_distribution<std::size_t>(0, ties - 1)(rng);
  for (std::size_t a = 0; a < n; ++a)
    if (r[a] == best && pick-- == 0) return a;
  return n - 1;
}

struct TabularConfig {
  int k = 2;
  std::size_t H = 5;
  double alpha = 0.1;
  double gamma = 0.98;
  double epsilon_start = 0.1;
  double epsilon_end = 0.02;
  std::size_t decay_episodes = 5000;
  // Flat agent hindsight replay.
  HerStrategy her_strategy = HerStrategy::UniformAchieved;
  std::size_t her_count = 4;

  void validate(bool hierarchical) const {
    if (hierarchical ? (k < 2 || k > 3) : k != 1) throw ConfigError("tabular agent: unsupported level count");
    if (H == 0) throw ConfigError("tabular agent: H must be positive");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("tabular agent: alpha must lie in [0,1]");
    if (!(gamma >= 0 && gamma < 1)) throw ConfigError("tabular agent: gamma must lie in [0,1)");
    if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1))
      throw ConfigError("tabular agent: epsilon must lie in [0,1]");
  }

  double epsilon_at(std::size_t episode) const {
    if (decay_episodes == 0) return epsilon_end;
    double f = std::min(1.0, static_cast<double>(episode) / static_cast<double>(decay_episodes));
    return epsilon_start + (epsilon_end - epsilon_start) * f;
  }
};

inline std::size_t cell(const Vec& v) { return static_cast<std::size_t>(std::lround(v[0])); }
inline Vec cell_vec(std::size_t s) { return Vec::Constant(1, static_cast<double>(s)); }

/// Hierarchical tabular Q-learning with k in {2, 3}.
template <DiscreteEnvironment Env>
class HierQAgent {
 public:
  // Scripted choices for tests: return an action to override epsilon-greedy.
  using ActionHook = std::function<std::optional<std::size_t>(int level, std::size_t state, std::size_t goal)>;

  HierQAgent(const UmdpSpec& spec, TabularConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate(true);
    spec.validate();
    if (!spec.discrete) throw ConfigError("HierQ requires a discrete environment");
    tables_ = init_tables(cfg_.k, cfg_.H, spec.state_count, spec.action_count, cfg_.alpha);
    for (int i = 0; i < cfg_.k; ++i) windows_.emplace_back(static_cast<std::size_t>(checked_power(cfg_.H, i)));
  }

  const TabularConfig& config() const { return cfg_; }
  std::vector<QTable>& tables() { return tables_; }
  const std::vector<QTable>& tables() const { return tables_; }
  const std::vector<PrevStateWindow>& windows() const { return windows_; }
  ActionHook& action_hook() { return hook_; }
  std::size_t episodes_trained() const { return episodes_; }
  void set_episodes_trained(std::size_t n) { episodes_ = n; }
  std::size_t last_episode_steps() const { return steps_; }

  bool train_episode(const Env& env, Rng& rng) { return train_episode(env, env.sample_task(rng), rng); }

  bool train_episode(const Env& env, const Task& task, Rng& rng) {
    env_ = &env;
    epsilon_ = cfg_.epsilon_at(episodes_);
    steps_ = 0;
    limit_ = env.episode_limit();
    for (auto& w : windows_) w.clear();
    goals_.assign(static_cast<std::size_t>(cfg_.k), 0);
    std::size_t goal = cell(task.goal);
    std::size_t s = cell(task.start.values);
    goals_.back() = goal;
    int top = cfg_.k - 1;
    while (s != goal && steps_ < limit_) {
      std::size_t a = choose(top, s, goal, rng);
      s = train_level(top - 1, s, a, rng);
    }
    ++episodes_;
    env_ = nullptr;
    return s == goal;
  }

  /// Greedy rollout with random tie-breaking; tables are untouched.
  bool evaluate_episode(const Env& env, Rng& rng) const {
    Task task = env.sample_task(rng);
    std::size_t goal = cell(task.goal);
    std::size_t s = cell(task.start.values);
    std::vector<std::size_t> goals(static_cast<std::size_t>(cfg_.k), 0);
    goals.back() = goal;
    std::size_t steps = 0, limit = env.episode_limit();
    int top = cfg_.k - 1;
    while (s != goal && steps < limit) {
      std::size_t a = epsilon_greedy(tables_[static_cast<std::size_t>(top)], s, goal, 0.0, rng);
      s = execute_level(env, top - 1, s, a, goals, steps, limit, rng);
    }
    return s == goal;
  }

 private:
  std::size_t choose(int level, std::size_t s, std::size_t g, Rng& rng) {
    if (hook_)
      if (auto forced = hook_(level, s, g)) return *forced;
    return epsilon_greedy(tables_[static_cast<std::size_t>(level)], s, g, epsilon_, rng);
  }

  bool any_goal_achieved(int i, std::size_t s) const {
    for (int n = i; n < cfg_.k; ++n)
      if (goals_[static_cast<std::size_t>(n)] == s) return true;
    return false;
  }

  std::size_t train_level(int i, std::size_t s, std::size_t goal, Rng& rng) {
    goals_[static_cast<std::size_t>(i)] = goal;
    for (std::size_t attempt = 0; attempt < cfg_.H && steps_ < limit_; ++attempt) {
      std::size_t a = choose(i, s, goal, rng);
      std::size_t next;
      if (i > 0) {
        next = train_level(i - 1, s, a, rng);
        goals_[static_cast<std::size_t>(i)] = goal;
      } else {
        next = cell(env_->step(EnvState{cell_vec(s), steps_}, cell_vec(a)).values);
        ++steps_;
        update_primitive(tables_[0], s, a, next, cfg_.gamma);
        for (std::size_t w = 1; w < windows_.size(); ++w) windows_[w].push(s);
        update_subgoal_levels(tables_, windows_, next, cfg_.gamma);
      }
      s = next;
      if (any_goal_achieved(i, s)) break;
    }
    return s;
  }

  std::size_t execute_level(const Env& env, int i, std::size_t s, std::size_t goal, std::vector<std::size_t>& goals,
                            std::size_t& steps, std::size_t limit, Rng& rng) const {
    goals[static_cast<std::size_t>(i)] = goal;
    for (std::size_t attempt = 0; attempt < cfg_.H && steps < limit; ++attempt) {
      std::size_t a = epsilon_greedy(tables_[static_cast<std::size_t>(i)], s, goal, 0.0, rng);
      if (i > 0) {
        s = execute_level(env, i - 1, s, a, goals, steps, limit, rng);
        goals[static_cast<std::size_t>(i)] = goal;
      } else {
        s = cell(env.step(EnvState{cell_vec(s), steps}, cell_vec(a)).values);
        ++steps;
      }
      bool done = false;
      for (int n = i; n < cfg_.k; ++n) done = done || goals[static_cast<std::size_t>(n)] == s;
      if (done) break;
    }
    return s;
  }

  TabularConfig cfg_;
  std::vector<QTable> tables_;
  std::vector<PrevStateWindow> windows_;  // index 0 unused
  std::vector<std::size_t> goals_;
  ActionHook hook_;
  const Env* env_ = nullptr;
  double epsilon_ = 0.1;
  std::size_t episodes_ = 0;
  std::size_t steps_ = 0;
  std::size_t limit_ = 0;
};

/// Flat tabular Q-learning with hindsight goal replay at episode end.
template <DiscreteEnvironment Env>
class FlatQAgent {
 public:
  FlatQAgent(const UmdpSpec& spec, TabularConfig cfg) : cfg_(std::move(cfg)), goal_space_{{}, Vec::Zero(1)} {
    cfg_.validate(false);
    spec.validate();
    if (!spec.discrete) throw ConfigError("flat Q-learning requires a discrete environment");
    tables_ = init_tables(1, cfg_.H, spec.state_count, spec.action_count, cfg_.alpha);
  }

  const TabularConfig& config() const { return cfg_; }
  std::vector<QTable>& tables() { return tables_; }
  const std::vector<QTable>& tables() const { return tables_; }
  std::size_t episodes_trained() const { return episodes_; }
  void set_episodes_trained(std::size_t n) { episodes_ = n; }

  bool train_episode(const Env& env, Rng& rng) { return train_episode(env, env.sample_task(rng), rng); }

  bool train_episode(const Env& env, const Task& task, Rng& rng) {
    double epsilon = cfg_.epsilon_at(episodes_);
    std::size_t goal = cell(task.goal);
    std::size_t s = cell(task.start.values);
    std::vector<PendingHerRecord> pending;
    std::size_t steps = 0, limit = env.episode_limit();
    while (s != goal && steps < limit) {
      std::size_t a = epsilon_greedy(tables_[0], s, goal, epsilon, rng);
      std::size_t next = cell(env.step(EnvState{cell_vec(s), steps}, cell_vec(a)).values);
      ++steps;
      learn(make_standard_transition(cell_vec(s), cell_vec(a), cell_vec(next), cell_vec(goal), goal_space_, cfg_.gamma));
      pending.push_back(PendingHerRecord{cell_vec(s), cell_vec(a), cell_vec(next)});
      s = next;
    }
    for (const auto& t : finalize_hindsight_goals(pending, cfg_.her_strategy, cfg_.her_count, goal_space_, cfg_.gamma, rng))
      learn(t);
    ++episodes_;
    return s == goal;
  }

  bool evaluate_episode(const Env& env, Rng& rng) const {
    Task task = env.sample_task(rng);
    std::size_t goal = cell(task.goal);
    std::size_t s = cell(task.start.values);
    std::size_t steps = 0, limit = env.episode_limit();
    while (s != goal && steps < limit) {
      std::size_t a = epsilon_greedy(tables_[0], s, goal, 0.0, rng);
      s = cell(env.step(EnvState{cell_vec(s), steps}, cell_vec(a)).values);
      ++steps;
    }
    return s == goal;
  }

 private:
  void learn(const Transition& t) {
    QTable& q = tables_[0];
    std::size_t s = cell(t.state), a = cell(t.action), n = cell(t.next_state), g = cell(t.goal);
    double target = t.reward + t.discount * q.max_action_value(n, g);
    double& entry = q.at(s, g, a);
    entry = (1.0 - q.alpha()) * entry + q.alpha() * target;
  }

  TabularConfig cfg_;
  GoalSpace goal_space_;
  std::vector<QTable> tables_;
  std::size_t episodes_ = 0;
};

}  // namespace hac
