#include "hac/hierq_agent.hpp"
#include "tabular_reference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace hac;

namespace {

bool all_equal(const QTable& q, double v) {
  return std::all_of(q.values().begin(), q.values().end(), [v](double x) { return x == v; });
}

// Pure function of its arguments so two implementations fed the same call sequence agree.
std::size_t scripted(int level, std::size_t s, std::size_t g, std::size_t call, std::size_t n) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t x : {std::uint64_t(level), std::uint64_t(s), std::uint64_t(g), std::uint64_t(call)}) {
    h ^= x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdull;
  }
  return static_cast<std::size_t>(h % n);
}

TabularConfig tab(int k, std::size_t H, double alpha) {
  TabularConfig c;
  c.k = k;
  c.H = H;
  c.alpha = alpha;
  return c;
}

}  // namespace

TEST(InitTables, PessimisticValues) {
  auto t2 = init_tables(2, 5, 4, 4);
  EXPECT_TRUE(all_equal(t2[0], -5.0));
  EXPECT_TRUE(all_equal(t2[1], -25.0));
  EXPECT_EQ(t2[0].action_count(), 4u);
  EXPECT_EQ(t2[1].action_count(), 4u);  // subgoal actions are states

  auto t3 = init_tables(3, 3, 6, 4);
  EXPECT_TRUE(all_equal(t3[0], -3.0));
  EXPECT_TRUE(all_equal(t3[1], -9.0));
  EXPECT_TRUE(all_equal(t3[2], -27.0));
  EXPECT_EQ(t3[2].action_count(), 6u);

  auto t1 = init_tables(3, 1, 3, 4);
  for (const auto& t : t1) EXPECT_TRUE(all_equal(t, -1.0));
}

TEST(InitTables, OverflowGuard) {
  EXPECT_THROW(checked_power(std::size_t{1} << 27, 2), ConfigError);
  EXPECT_EQ(checked_power(std::size_t{1} << 26, 2), std::uint64_t{1} << 52);
  EXPECT_THROW(init_tables(3, std::size_t{1} << 20, 2, 2), ConfigError);
  EXPECT_THROW(init_tables(2, 0, 2, 2), ConfigError);
}

TEST(UpdatePrimitive, TerminalTargetIsZero) {
  auto t = init_tables(2, 5, 4, 4, 1.0);
  update_primitive(t[0], 1, 3, 2, 0.98);
  EXPECT_EQ(t[0].at(1, 2, 3), 0.0);
}

TEST(UpdatePrimitive, SingleStepArithmetic) {
  auto t = init_tables(2, 5, 4, 4, 1.0);
  update_primitive(t[0], 1, 3, 2, 0.98);
  for (std::size_t g : {0u, 1u, 3u}) EXPECT_DOUBLE_EQ(t[0].at(1, g, 3), -1.0 + 0.98 * -5.0);
  EXPECT_DOUBLE_EQ(t[0].at(1, 0, 3), -5.9);
  EXPECT_EQ(t[0].at(1, 0, 2), -5.0);  // other actions untouched
}

TEST(UpdatePrimitive, ZeroAlphaLeavesTable) {
  auto t = init_tables(2, 5, 4, 4, 0.0);
  auto before = t[0];
  update_primitive(t[0], 1, 3, 2, 0.98);
  EXPECT_EQ(t[0], before);
}

TEST(UpdateSubgoalLevels, EmptyWindowIsNoOp) {
  auto t = init_tables(2, 3, 3, 4, 1.0);
  std::vector<PrevStateWindow> w{PrevStateWindow(1), PrevStateWindow(3)};
  auto before = t;
  update_subgoal_levels(t, w, 1, 0.98);
  EXPECT_EQ(t, before);
}

TEST(UpdateSubgoalLevels, FullWindowTouchesWindowTimesStates) {
  // Three-state chain, H = 3: the level-1 window holds 3 states.
  const std::size_t S = 3, H = 3;
  auto t = init_tables(2, H, S, 4, 1.0);
  std::vector<PrevStateWindow> w{PrevStateWindow(1), PrevStateWindow(H)};
  for (std::size_t s : {0u, 2u, 0u, 1u, 2u}) w[1].push(s);  // overfill
  ASSERT_EQ(w[1].size(), H);
  EXPECT_EQ(w[1][0], 0u);
  EXPECT_EQ(w[1][1], 1u);
  EXPECT_EQ(w[1][2], 2u);

  // Brute force, state-major: every windowed state, every goal.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> ref;
  auto get = [&](std::size_t s, std::size_t g, std::size_t a) {
    auto it = ref.find({s, g, a});
    return it == ref.end() ? -9.0 : it->second;
  };
  const std::size_t next = 1;
  std::size_t touched = 0;
  for (std::size_t i = 0; i < w[1].size(); ++i)
    for (std::size_t g = 0; g < S; ++g) {
      double best = get(next, g, 0);
      for (std::size_t a = 1; a < S; ++a) best = std::max(best, get(next, g, a));
      ref[{w[1][i], g, next}] = next == g ? 0.0 : -1.0 + 0.98 * best;
      ++touched;
    }
  update_subgoal_levels(t, w, next, 0.98);
  EXPECT_EQ(touched, H * S);
  std::size_t changed = 0;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t g = 0; g < S; ++g)
      for (std::size_t a = 0; a < S; ++a) {
        EXPECT_DOUBLE_EQ(t[1].at(s, g, a), get(s, g, a));
        changed += t[1].at(s, g, a) != -9.0;
      }
  EXPECT_EQ(changed, H * S);
  for (std::size_t s = 0; s < S; ++s) EXPECT_EQ(t[1].at(s, next, next), 0.0);
}

TEST(EpsilonGreedy, GreedyPicksUniqueMaximizer) {
  auto t = init_tables(2, 5, 4, 4);
  t[0].at(2, 1, 3) = -1.0;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(epsilon_greedy(t[0], 2, 1, 0.0, rng), 3u);
}

TEST(EpsilonGreedy, FullExplorationIsUniform) {
  auto t = init_tables(2, 5, 4, 4);
  t[0].at(2, 1, 3) = -1.0;
  Rng rng(2);
  const int n = 10000;
  std::vector<int> c(4, 0);
  for (int i = 0; i < n; ++i) ++c[epsilon_greedy(t[0], 2, 1, 1.0, rng)];
  double chi2 = 0, e = n / 4.0;
  for (int x : c) chi2 += (x - e) * (x - e) / e;
  EXPECT_LT(chi2, 16.27);  // chi-square 3 dof, p = 0.001
}

TEST(EpsilonGreedy, TiesBrokenUniformly) {
  auto t = init_tables(2, 5, 4, 4);
  Rng rng(3);
  const int n = 10000;
  std::vector<int> c(4, 0);
  for (int i = 0; i < n; ++i) ++c[epsilon_greedy(t[0], 0, 1, 0.0, rng)];
  double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int x : c) EXPECT_LE(std::abs(x - n / 4.0), 3 * sigma);
  // Two-way tie: the other actions never appear.
  t[0].at(0, 1, 1) = -1.0;
  t[0].at(0, 1, 2) = -1.0;
  std::vector<int> d(4, 0);
  for (int i = 0; i < n; ++i) ++d[epsilon_greedy(t[0], 0, 1, 0.0, rng)];
  EXPECT_EQ(d[0] + d[3], 0);
  EXPECT_LE(std::abs(d[1] - n / 2.0), 3 * std::sqrt(n * 0.25));
}

TEST(PrevStateWindow, Discipline) {
  PrevStateWindow w(4);
  for (std::size_t i = 0; i < 10; ++i) {
    w.push(i);
    EXPECT_EQ(w.size(), std::min<std::size_t>(i + 1, 4));
    EXPECT_EQ(w[w.size() - 1], i);
  }
  EXPECT_EQ(w[0], 6u);
  w.clear();
  EXPECT_EQ(w.size(), 0u);
  EXPECT_THROW(PrevStateWindow(0), ConfigError);
}

TEST(HierQAgent, WindowsHoldRecentStatesAndTablesStayNonPositive) {
  auto env = GridWorld::four_rooms();
  HierQAgent<GridWorld> agent(env.spec(), tab(3, 4, 0.3));
  Rng rng(5);
  for (int e = 0; e < 200; ++e) {
    agent.train_episode(env, rng);
    for (std::size_t i = 1; i < 3; ++i) {
      const auto& w = agent.windows()[i];
      EXPECT_EQ(w.size(), std::min<std::size_t>(agent.last_episode_steps(), w.capacity()));
      EXPECT_LE(w.size(), static_cast<std::size_t>(std::pow(4, i)));
    }
  }
  for (const auto& t : agent.tables())
    EXPECT_TRUE(std::all_of(t.values().begin(), t.values().end(), [](double x) { return x <= 0.0; }));
}

TEST(HierQAgent, MatchesReferenceOnScriptedEpisodes) {
  for (int k : {2, 3}) {
    for (std::size_t n : {4u, 6u}) {
      auto env = GridWorld::chain(n);
      env.set_episode_limit(30);
      HierQAgent<GridWorld> agent(env.spec(), tab(k, 2, 0.5));
      std::size_t calls = 0;
      auto script = [&](int level, std::size_t s, std::size_t g) {
        return scripted(level, s, g, calls++, level == 0 ? 4 : n);
      };
      agent.action_hook() = [&](int level, std::size_t s, std::size_t g) -> std::optional<std::size_t> {
        return script(level, s, g);
      };
      hac::testing::ReferenceHierQ ref{k, 2, 0.5, 0.98, n, 4, [&](std::size_t s, std::size_t a) { return env.move(s, a); },
                                       30, {}, {}, {}, 0, 0};
      Rng rng(7);
      for (int e = 0; e < 20; ++e) {
        Task task = env.sample_task(rng);
        std::size_t start = cell(task.start.values), goal = cell(task.goal);
        std::size_t mark = calls;
        bool a = agent.train_episode(env, task, rng);
        std::size_t used = calls - mark;
        calls = mark;
        bool b = ref.episode(start, goal, script);
        ASSERT_EQ(calls - mark, used) << "call sequences diverged";
        EXPECT_EQ(a, b);
      }
      for (int i = 0; i < k; ++i) {
        const auto& t = agent.tables()[static_cast<std::size_t>(i)];
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t g = 0; g < n; ++g)
            for (std::size_t a = 0; a < t.action_count(); ++a)
              ASSERT_EQ(t.at(s, g, a), ref.get(i, s, g, a)) << "k=" << k << " level " << i;
      }
    }
  }
}

TEST(HierQAgent, PessimismPreservedForFarSubgoals) {
  auto env = GridWorld::chain(8);
  auto c = tab(2, 3, 0.5);
  c.epsilon_start = c.epsilon_end = 1.0;
  HierQAgent<GridWorld> agent(env.spec(), c);
  Rng rng(9);
  for (int e = 0; e < 1500; ++e) agent.train_episode(env, rng);
  const auto& q1 = agent.tables()[1];
  for (std::size_t s = 0; s < 8; ++s) {
    auto dist = env.distances_from(s);
    for (std::size_t g = 0; g < 8; ++g) {
      if (g == s) continue;
      double far_max = -1e300, near_min = 1e300;
      for (std::size_t a = 0; a < 8; ++a) {
        double q = q1.at(s, g, a);
        if (dist[a] > 3)
          far_max = std::max(far_max, q);
        else
          near_min = std::min(near_min, q);
      }
      if (far_max > -1e300) {
        EXPECT_LE(far_max, near_min) << "s=" << s << " g=" << g;
      }
    }
  }
}

TEST(HierQAgent, TerminalEntriesPulledToZero) {
  auto env = GridWorld::chain(8);
  auto c = tab(2, 3, 0.5);
  c.epsilon_start = c.epsilon_end = 1.0;
  HierQAgent<GridWorld> agent(env.spec(), c);
  Rng rng(10);
  for (int e = 0; e < 1500; ++e) agent.train_episode(env, rng);
  for (std::size_t s = 0; s < 8; ++s)
    for (std::size_t a = 0; a < 4; ++a) EXPECT_GT(agent.tables()[0].at(s, env.move(s, a), a), -1e-6);
}

TEST(HierQAgent, LearnsChainAndEvaluationIsReadOnly) {
  auto env = GridWorld::chain(10);
  HierQAgent<GridWorld> agent(env.spec(), tab(2, 4, 0.5));
  Rng rng(11);
  for (int e = 0; e < 400; ++e) agent.train_episode(env, rng);
  auto before = agent.tables();
  int wins = 0;
  for (int e = 0; e < 50; ++e) wins += agent.evaluate_episode(env, rng);
  EXPECT_EQ(agent.tables(), before);
  EXPECT_GE(wins, 45);
  EXPECT_EQ(agent.episodes_trained(), 400u);
}

TEST(HierQAgent, RejectsBadLevelCounts) {
  auto env = GridWorld::chain(4);
  EXPECT_THROW(HierQAgent<GridWorld>(env.spec(), tab(1, 3, 0.1)), ConfigError);
  EXPECT_THROW(HierQAgent<GridWorld>(env.spec(), tab(4, 3, 0.1)), ConfigError);
  EXPECT_THROW(FlatQAgent<GridWorld>(env.spec(), tab(2, 3, 0.1)), ConfigError);
}

TEST(FlatQAgent, LearnsChainWithHindsightReplay) {
  auto env = GridWorld::chain(10);
  FlatQAgent<GridWorld> agent(env.spec(), tab(1, 100, 0.5));
  EXPECT_TRUE(all_equal(agent.tables()[0], -100.0));
  Rng rng(12);
  for (int e = 0; e < 300; ++e) agent.train_episode(env, rng);
  auto before = agent.tables();
  int wins = 0;
  for (int e = 0; e < 50; ++e) wins += agent.evaluate_episode(env, rng);
  EXPECT_EQ(agent.tables(), before);
  EXPECT_GE(wins, 45);
  EXPECT_TRUE(std::all_of(before[0].values().begin(), before[0].values().end(), [](double x) { return x <= 0.0; }));
}

TEST(TabularConfig, EpsilonSchedule) {
  TabularConfig c;
  EXPECT_DOUBLE_EQ(c.epsilon_at(0), 0.1);
  EXPECT_DOUBLE_EQ(c.epsilon_at(2500), 0.06);
  EXPECT_DOUBLE_EQ(c.epsilon_at(5000), 0.02);
  EXPECT_DOUBLE_EQ(c.epsilon_at(90000), 0.02);
}
