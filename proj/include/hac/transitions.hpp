#pragma once

#include "hac/umdp.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hac {

struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
  Vec next_state;
  Vec goal;
  double discount = 0.0;
};

enum class TransitionKind { HindsightAction, HindsightGoal, SubgoalTest, Standard };

inline const char* to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::HindsightAction: return "hindsight_action";
    case TransitionKind::HindsightGoal: return "hindsight_goal";
    case TransitionKind::SubgoalTest: return "subgoal_test";
    case TransitionKind::Standard: return "standard";
  }
  return "?";
}

// Reward, goal and discount are resolved later by finalize_hindsight_goals,
// so they are simply not stored here.
struct PendingHerRecord {
  Vec state;
  Vec action;
  Vec next_state;
};

class EmptyBufferError : public std::logic_error {
 public:
  EmptyBufferError() : std::logic_error("replay buffer is empty") {}
};

class TransitionInvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Field-domain rules checked on every push.
struct TransitionRules {
  double gamma = 0.98;
  double penalty = -1.0;
  std::optional<Eigen::Index> action_dim;
};

inline void check_transition(const Transition& t, const TransitionRules& rules) {
  auto fail = [](const std::string& what) { throw TransitionInvariantError("transition invariant violated: " + what); };
  if (t.discount != 0.0 && t.discount != rules.gamma) fail("discount must be 0 or gamma");
  if (t.reward != 0.0 && t.reward != -1.0 && t.reward != rules.penalty) fail("reward must be 0, -1 or penalty");
  if (t.reward == 0.0 && t.discount != 0.0) fail("reward 0 requires discount 0");
  if (t.reward == rules.penalty && rules.penalty != -1.0 && t.discount != 0.0) fail("penalty requires discount 0");
  if (rules.action_dim && t.action.size() != *rules.action_dim) fail("action dimension");
  if (t.state.size() != t.next_state.size()) fail("state/next_state dimension");
}

/// Fixed-capacity ring of transitions; sampling is uniform with replacement.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed, std::optional<TransitionRules> rules = std::nullopt)
      : capacity_(capacity), rng_(seed), rules_(std::move(rules)) {
    if (capacity_ == 0) throw ConfigError("replay buffer capacity must be positive");
  }

  void push(Transition t) {
    if (rules_) check_transition(t, *rules_);
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::vector<Transition> sample(std::size_t batch) {
    if (items_.empty()) throw EmptyBufferError();
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(items_[pick(rng_)]);
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

  // i-th oldest entry.
  const Transition& at(std::size_t i) const { return items_.at((head_ + i) % items_.size()); }

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < items_.size(); ++i) f(at(i));
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // oldest slot once full
  Rng rng_;
  std::optional<TransitionRules> rules_;
};

// ---------------------------------------------------------------------------
// Transition construction

/// Hindsight action transition: when the proposed subgoal was missed, the
/// state actually reached becomes the action; a subgoal hit within its
/// thresholds is kept as proposed. Reward and discount are judged against
/// the level's own goal.
inline Transition make_hindsight_action_transition(const Vec& start_state, const Vec& proposed_subgoal,
                                                   const Vec& achieved_state, const Vec& goal,
                                                   const GoalSpace& goal_space, const Vec& subgoal_thresholds,
                                                   double gamma) {
  bool hit = goal_achieved(achieved_state, proposed_subgoal, subgoal_thresholds);
  Vec achieved = goal_space.project(achieved_state);
  return Transition{start_state,
                    hit ? proposed_subgoal : achieved_state,
                    shortest_path_reward(achieved, goal, goal_space.thresholds),
                    achieved_state,
                    goal,
                    discount_for(achieved, goal, goal_space.thresholds, gamma, false)};
}

/// Penalty transition for a tested subgoal that was missed; nothing when it was hit.
inline std::optional<Transition> make_subgoal_test_transition(const Vec& start_state, const Vec& proposed_subgoal,
                                                              const Vec& achieved_state, const Vec& goal,
                                                              const Vec& subgoal_thresholds, double penalty) {
  if (goal_achieved(achieved_state, proposed_subgoal, subgoal_thresholds)) return std::nullopt;
  return Transition{start_state, proposed_subgoal, penalty, achieved_state, goal, 0.0};
}

/// Ordinary evaluation of an executed action against the current goal.
inline Transition make_standard_transition(const Vec& state, const Vec& action, const Vec& next_state,
                                           const Vec& goal, const GoalSpace& goal_space, double gamma) {
  Vec achieved = goal_space.project(next_state);
  return Transition{state,
                    action,
                    shortest_path_reward(achieved, goal, goal_space.thresholds),
                    next_state,
                    goal,
                    discount_for(achieved, goal, goal_space.thresholds, gamma, false)};
}

enum class HerStrategy { FinalState, UniformAchieved };

inline const char* to_string(HerStrategy s) { return s == HerStrategy::FinalState ? "final" : "uniform"; }

/// Replays one attempt sequence with goals achieved in hindsight. Every
/// pending record is emitted once per chosen goal, with reward and discount
/// recomputed against that goal.
inline std::vector<Transition> finalize_hindsight_goals(std::span<const PendingHerRecord> pending, HerStrategy strategy,
                                                        std::size_t count, const GoalSpace& goal_space, double gamma,
                                                        Rng& rng) {
  std::vector<Transition> out;
  if (pending.empty()) return out;
  if (count == 0) throw ConfigError("hindsight goal count must be positive");
  std::vector<Vec> goals;
  if (strategy == HerStrategy::FinalState) {
    goals.push_back(goal_space.project(pending.back().next_state));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pending.size() - 1);
    for (std::size_t c = 0; c < count; ++c) goals.push_back(goal_space.project(pending[pick(rng)].next_state));
  }
  out.reserve(goals.size() * pending.size());
  for (const auto& g : goals)
    for (const auto& rec : pending)
      out.push_back(make_standard_transition(rec.state, rec.action, rec.next_state, g, goal_space, gamma));
  return out;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON trace: state, action, reward, next_state, goal, discount, level, kind.

using TraceSink = std::function<void(const Transition&, int level, TransitionKind kind)>;

inline nlohmann::ordered_json trace_record(const Transition& t, int level, TransitionKind kind) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::ordered_json j;
  j["state"] = vec(t.state);
  j["action"] = vec(t.action);
  j["reward"] = t.reward;
  j["next_state"] = vec(t.next_state);
  j["goal"] = vec(t.goal);
  j["discount"] = t.discount;
  j["level"] = level;
  j["kind"] = to_string(kind);
  return j;
}

inline TraceSink make_trace_writer(std::ostream& os) {
  return [&os](const Transition& t, int level, TransitionKind kind) { os << trace_record(t, level, kind).dump() << '\n'; };
}

}  // namespace hac
