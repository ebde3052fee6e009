#pragma once

#include "hac/env.hpp"
#include "hac/nn.hpp"
#include "hac/transitions.hpp"
#include "hac/umdp.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hac {

enum class TestingMode : std::uint32_t { Standard = 0, NeverTest = 1, AlwaysPenalize = 2 };

inline const char* to_string(TestingMode m) {
  switch (m) {
    case TestingMode::Standard: return "standard";
    case TestingMode::NeverTest: return "never_test";
    case TestingMode::AlwaysPenalize: return "always_penalize";
  }
  return "?";
}

struct AgentConfig {
  int k = 2;
  std::size_t H = 20;
  double lambda = 0.3;
  std::optional<double> penalty;  // defaults to -H
  double gamma = 0.98;
  double uniform_explore_frac = 0.2;
  TestingMode testing_mode = TestingMode::Standard;
  // Gaussian exploration std-dev as a fraction of each dimension's range.
  double noise_primitive = 0.1;
  double noise_subgoal = 0.05;
  std::size_t batch_size = 256;
  std::size_t updates_per_episode = 20;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  std::size_t buffer_primitive = 1'000'000;
  std::size_t buffer_subgoal = 100'000;
  HerStrategy her_strategy = HerStrategy::FinalState;
  std::size_t her_count = 1;
  std::vector<std::size_t> hidden{64, 64, 64};
  double action_l2 = 1.0;  // actor penalty on squared normalized actions
  bool target_networks = false;  // flat agents only
  double tau = 0.005;

  double penalty_value() const { return penalty.value_or(-static_cast<double>(H)); }

  void validate() const {
    if (k < 1 || k > 3) throw ConfigError("agent: k must be 1, 2 or 3");
    if (H == 0) throw ConfigError("agent: H must be positive");
    if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("agent: lambda must lie in [0,1]");
    if (!(penalty_value() <= -1)) throw ConfigError("agent: penalty must be <= -1");
    if (!(uniform_explore_frac >= 0 && uniform_explore_frac <= 1))
      throw ConfigError("agent: uniform_explore_frac must lie in [0,1]");
    if (!(gamma >= 0 && gamma < 1)) throw ConfigError("agent: gamma must lie in [0,1)");
    if (batch_size == 0) throw ConfigError("agent: batch_size must be positive");
    if (!(action_l2 >= 0)) throw ConfigError("agent: action_l2 must be nonnegative");
    if (her_count == 0) throw ConfigError("agent: her_count must be positive");
    if (target_networks && k != 1) throw ConfigError("agent: target networks are only supported for flat agents");
  }
};

/// Decides whether a proposed subgoal is tested. A test in progress above
/// always propagates downward.
inline bool decide_subgoal_test(Rng& rng, double lambda, bool testing_inherited, TestingMode mode) {
  if (mode == TestingMode::NeverTest) return false;
  if (testing_inherited) return true;
  return std::bernoulli_distribution(lambda)(rng);
}

struct LevelRuntime {
  int level_index = 0;
  DenseNet actor;
  DenseNet critic;
  AdamState actor_opt;
  AdamState critic_opt;
  std::unique_ptr<DenseNet> target_actor;
  std::unique_ptr<DenseNet> target_critic;
  ReplayBuffer replay;
  std::vector<PendingHerRecord> her_pending;
  GoalSpace goal_space;
  Bounds goal_bounds;
  Bounds action_bounds;
  Vec noise_std;
};

/// Hierarchical actor-critic agent with k nested goal-conditioned levels.
/// Level 0 emits primitive actions; higher levels emit subgoal states.
template <EnvironmentLike Env>
class HacAgent {
 public:
  // Test and analysis seams. Any hook left empty falls back to the learned behaviour.
  struct Hooks {
    std::function<std::optional<Vec>(int level, const Vec& state, const Vec& goal, bool testing)> action;
    std::function<std::optional<bool>(int level, const Vec& state, const Vec& subgoal)> subgoal_test;
    std::function<void(int level, const Vec& state, const Vec& action, bool testing, bool noisy)> on_action;
    TraceSink trace;
  };

  HacAgent(const UmdpSpec& spec, AgentConfig cfg, std::uint64_t seed) : spec_(spec), cfg_(std::move(cfg)) {
    spec_.validate();
    cfg_.validate();
    if (spec_.discrete) throw ConfigError("HAC agent requires continuous state and action spaces");
    spec_.gamma = cfg_.gamma;
    Rng init(seed);
    for (int i = 0; i < cfg_.k; ++i) {
      bool top = i == cfg_.k - 1;
      GoalSpace gs = top ? spec_.end_goal : spec_.subgoal_space();
      Bounds gb = top ? spec_.end_goal_bounds : spec_.state_bounds;
      Bounds ab = i == 0 ? spec_.action_bounds : spec_.state_bounds;
      auto level_seed = init();
      Rng net_rng(level_seed);
      auto actor = make_actor(spec_.state_bounds, gb, ab, cfg_.hidden, net_rng);
      auto critic = make_critic(spec_.state_bounds, gb, ab, cfg_.hidden, static_cast<double>(cfg_.H), net_rng);
      TransitionRules rules{cfg_.gamma, cfg_.penalty_value(), ab.dim()};
      std::size_t cap = i == 0 ? cfg_.buffer_primitive : cfg_.buffer_subgoal;
      Vec noise = (ab.high - ab.low) * (i == 0 ? cfg_.noise_primitive : cfg_.noise_subgoal);
      LevelRuntime lvl{i,
                       actor,
                       critic,
                       AdamState(actor, cfg_.lr_actor),
                       AdamState(critic, cfg_.lr_critic),
                       nullptr,
                       nullptr,
                       ReplayBuffer(cap, init(), rules),
                       {},
                       gs,
                       gb,
                       ab,
                       noise};
      if (cfg_.target_networks) {
        lvl.target_actor = std::make_unique<DenseNet>(lvl.actor);
        lvl.target_critic = std::make_unique<DenseNet>(lvl.critic);
      }
      levels_.push_back(std::move(lvl));
    }
  }

  const AgentConfig& config() const { return cfg_; }
  const UmdpSpec& spec() const { return spec_; }
  Hooks& hooks() { return hooks_; }
  std::vector<LevelRuntime>& levels() { return levels_; }
  const std::vector<LevelRuntime>& levels() const { return levels_; }
  std::size_t last_episode_steps() const { return primitive_steps_; }

  /// Runs one training episode followed by the network updates.
  bool train_episode(const Env& env, Rng& rng) {
    Task task = env.sample_task(rng);
    return train_episode(env, task, rng);
  }

  bool train_episode(const Env& env, const Task& task, Rng& rng) {
    env_ = &env;
    primitive_steps_ = 0;
    goal_stack_.assign(static_cast<std::size_t>(cfg_.k), Vec());
    bool success = goal_achieved(spec_.end_goal, task.start.values, task.goal);
    if (!success) {
      EnvState final_state = train_level(cfg_.k - 1, task.start, task.goal, false, rng);
      success = goal_achieved(spec_.end_goal, final_state.values, task.goal);
    }
    env_ = nullptr;
    update_networks();
    return success;
  }

  /// Recursive attempt loop for one level; returns the last state reached.
  EnvState train_level(int i, const EnvState& start, const Vec& goal, bool testing_inherited, Rng& rng) {
    auto& lvl = levels_[static_cast<std::size_t>(i)];
    goal_stack_[static_cast<std::size_t>(i)] = goal;
    lvl.her_pending.clear();
    EnvState s = start;
    for (std::size_t attempt = 0; attempt < cfg_.H; ++attempt) {
      Vec a = select_action(i, s.values, goal, testing_inherited, rng);
      EnvState next;
      bool tested = false;
      if (i > 0) {
        std::optional<bool> forced = hooks_.subgoal_test ? hooks_.subgoal_test(i, s.values, a) : std::nullopt;
        if (forced)
          tested = *forced || testing_inherited;
        else
          tested = decide_subgoal_test(rng, cfg_.lambda, testing_inherited, cfg_.testing_mode);
        next = train_level(i - 1, s, a, tested, rng);
        goal_stack_[static_cast<std::size_t>(i)] = goal;
      } else {
        next = env_->step(s, a);
        ++primitive_steps_;
      }

      Vec her_action = a;
      if (i > 0) {
        bool missed = !goal_achieved(next.values, a, spec_.subgoal_thresholds);
        bool penalize = cfg_.testing_mode == TestingMode::AlwaysPenalize ||
                        (cfg_.testing_mode == TestingMode::Standard && tested);
        if (missed && penalize) {
          if (auto t = make_subgoal_test_transition(s.values, a, next.values, goal, spec_.subgoal_thresholds,
                                                    cfg_.penalty_value()))
            store(lvl, *t, TransitionKind::SubgoalTest);
        }
        auto ha = make_hindsight_action_transition(s.values, a, next.values, goal, lvl.goal_space,
                                                   spec_.subgoal_thresholds, cfg_.gamma);
        her_action = ha.action;
        store(lvl, std::move(ha), TransitionKind::HindsightAction);
      } else {
        store(lvl, make_standard_transition(s.values, a, next.values, goal, lvl.goal_space, cfg_.gamma),
              TransitionKind::Standard);
      }
      lvl.her_pending.push_back(PendingHerRecord{s.values, her_action, next.values});
      s = std::move(next);
      if (any_goal_achieved(i, s.values)) break;
    }
    for (auto& t : finalize_hindsight_goals(lvl.her_pending, cfg_.her_strategy, cfg_.her_count, lvl.goal_space, cfg_.gamma, rng))
      store(lvl, std::move(t), TransitionKind::HindsightGoal);
    lvl.her_pending.clear();
    return s;
  }

  /// Exact policy output when testing; otherwise uniform exploration or
  /// Gaussian-perturbed policy output, clipped to the action box.
  Vec select_action(int level, const Vec& s, const Vec& g, bool testing, Rng& rng) const {
    const auto& lvl = levels_[static_cast<std::size_t>(level)];
    if (hooks_.action) {
      if (auto forced = hooks_.action(level, s, g, testing)) {
        if (hooks_.on_action) hooks_.on_action(level, s, *forced, testing, false);
        return *forced;
      }
    }
    Vec a;
    bool noisy = false;
    if (testing) {
      a = policy(level, s, g);
    } else if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg_.uniform_explore_frac) {
      a = lvl.action_bounds.sample(rng);
      noisy = true;
    } else {
      a = policy(level, s, g);
      for (Eigen::Index d = 0; d < a.size(); ++d) {
        if (lvl.noise_std[d] > 0) {
          a[d] += std::normal_distribution<double>(0.0, lvl.noise_std[d])(rng);
          noisy = true;
        }
      }
      a = lvl.action_bounds.clip(a);
    }
    if (hooks_.on_action) hooks_.on_action(level, s, a, testing, noisy);
    return a;
  }

  Vec policy(int level, const Vec& s, const Vec& g) const {
    const auto& lvl = levels_[static_cast<std::size_t>(level)];
    return lvl.action_bounds.clip(actor_forward(lvl.actor, s, g));
  }

  /// Gradient updates for every level with data.
  void update_networks() {
    for (auto& lvl : levels_) {
      if (lvl.replay.empty()) continue;
      for (std::size_t u = 0; u < cfg_.updates_per_episode; ++u) {
        auto batch = lvl.replay.sample(cfg_.batch_size);
        const DenseNet& boot_actor = lvl.target_actor ? *lvl.target_actor : lvl.actor;
        critic_update(lvl.critic, lvl.critic_opt, batch, boot_actor, lvl.target_critic.get());
        actor_update(lvl.actor, lvl.actor_opt, batch, lvl.critic, cfg_.action_l2);
        if (lvl.target_actor) {
          soft_update(*lvl.target_actor, lvl.actor, cfg_.tau);
          soft_update(*lvl.target_critic, lvl.critic, cfg_.tau);
        }
      }
    }
  }

  using SubgoalObserver = std::function<void(int level, const Vec& state, const Vec& subgoal)>;

  /// Noise-free episode on a freshly sampled task; the agent is not modified.
  bool evaluate_episode(const Env& env, Rng& rng, const SubgoalObserver& observer = {}) const {
    Task task = env.sample_task(rng);
    return evaluate_task(env, task, observer);
  }

  bool evaluate_task(const Env& env, const Task& task, const SubgoalObserver& observer = {}) const {
    if (goal_achieved(spec_.end_goal, task.start.values, task.goal)) return true;
    std::vector<Vec> goals(static_cast<std::size_t>(cfg_.k));
    EnvState final_state = execute_level(env, cfg_.k - 1, task.start, task.goal, goals, observer);
    return goal_achieved(spec_.end_goal, final_state.values, task.goal);
  }

 private:
  EnvState execute_level(const Env& env, int i, const EnvState& start, const Vec& goal, std::vector<Vec>& goals,
                         const SubgoalObserver& observer) const {
    goals[static_cast<std::size_t>(i)] = goal;
    EnvState s = start;
    for (std::size_t attempt = 0; attempt < cfg_.H; ++attempt) {
      Vec a = policy(i, s.values, goal);
      if (i > 0) {
        if (observer) observer(i, s.values, a);
        s = execute_level(env, i - 1, s, a, goals, observer);
        goals[static_cast<std::size_t>(i)] = goal;
      } else {
        s = env.step(s, a);
      }
      if (achieved_any(i, s.values, goals)) break;
    }
    return s;
  }

  bool achieved_any(int i, const Vec& state, const std::vector<Vec>& goals) const {
    for (int n = i; n < cfg_.k; ++n) {
      const auto& space = levels_[static_cast<std::size_t>(n)].goal_space;
      if (goal_achieved(space, state, goals[static_cast<std::size_t>(n)])) return true;
    }
    return false;
  }

  bool any_goal_achieved(int i, const Vec& state) const { return achieved_any(i, state, goal_stack_); }

  void store(LevelRuntime& lvl, Transition t, TransitionKind kind) {
    if (hooks_.trace) hooks_.trace(t, lvl.level_index, kind);
    lvl.replay.push(std::move(t));
  }

  UmdpSpec spec_;
  AgentConfig cfg_;
  std::vector<LevelRuntime> levels_;
  Hooks hooks_;
  const Env* env_ = nullptr;
  std::vector<Vec> goal_stack_;
  std::size_t primitive_steps_ = 0;
};

}  // namespace hac
