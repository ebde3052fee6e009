#pragma once

#include "hac/env.hpp"
#include "hac/hac_agent.hpp"
#include "hac/hierq_agent.hpp"

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

// Run configuration text format.
//
//   file    := { line }
//   line    := blank | comment | section | setting
//   comment := '#' anything
//   section := '[' name ']'
//   setting := key '=' value        (key valid for the current section)
//
// Whitespace around keys and values is ignored. '#' starts a comment only as
// the first non-blank character, so map rows may contain it. Every key may appear once per file except env.row, which
// appends one map row per occurrence. Unknown sections and keys are errors.
//
// Sections and keys:
//   [env]        kind (four_rooms | point_mass | pendulum), row
//   [point_mass] mass dt force_limit arena velocity_limit goal_threshold velocity_threshold
//   [pendulum]   mass length dt torque_limit gravity velocity_limit target_low target_high
//                angle_threshold velocity_threshold
//   [agent]      family (hac | hierq | flat), k, H, gamma
//   [hac]        lambda penalty uniform_explore_frac testing_mode noise_primitive noise_subgoal
//                batch_size updates_per_episode lr_actor lr_critic buffer_primitive buffer_subgoal
//                her_strategy (final | uniform) her_count action_l2 hidden target_networks tau
//   [tabular]    alpha epsilon_start epsilon_end epsilon_decay_episodes her_strategy her_count
//   [run]        episodes eval_interval eval_episodes seeds output_dir name jobs
//
// seeds is a comma list whose items are integers or inclusive ranges a-b.
// Command-line overrides use section.key=value.

namespace hac {

enum class EnvName { FourRooms, PointMass, Pendulum };
enum class Family { Hac, HierQ, Flat };

inline const char* to_string(EnvName e) {
  switch (e) {
    case EnvName::FourRooms: return "four_rooms";
    case EnvName::PointMass: return "point_mass";
    case EnvName::Pendulum: return "pendulum";
  }
  return "?";
}
inline const char* to_string(Family f) {
  switch (f) {
    case Family::Hac: return "hac";
    case Family::HierQ: return "hierq";
    case Family::Flat: return "flat";
  }
  return "?";
}

struct RunConfig {
  EnvName env = EnvName::PointMass;
  std::vector<std::string> map_rows;  // empty: default four-rooms map
  PointMassParams point_mass;
  PendulumParams pendulum;

  Family family = Family::Hac;
  int k = 2;
  std::optional<std::size_t> H;  // unset: per-family default
  double gamma = 0.98;
  AgentConfig hac;
  TabularConfig tabular;

  std::size_t episodes = 1000;
  std::optional<std::size_t> eval_interval;
  std::optional<std::size_t> eval_episodes;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
  std::string name = "run";
  std::size_t jobs = 1;

  bool discrete() const { return env == EnvName::FourRooms; }
  int levels() const { return family == Family::Flat ? 1 : k; }

  std::size_t horizon() const {
    if (H) return *H;
    if (discrete()) return family == Family::Flat ? 100 : 5;
    if (family == Family::Flat || k == 1) return 400;
    return k == 3 ? 10 : 20;
  }
  std::size_t interval() const { return eval_interval.value_or(discrete() ? 100 : 50); }
  std::size_t evaluations() const { return eval_episodes.value_or(discrete() ? 50 : 20); }

  AgentConfig agent_config() const {
    AgentConfig c = hac;
    c.k = levels();
    c.H = horizon();
    c.gamma = gamma;
    return c;
  }

  TabularConfig tabular_config() const {
    TabularConfig c = tabular;
    c.k = levels();
    c.H = horizon();
    c.gamma = gamma;
    return c;
  }

  void validate() const {
    if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
    if (episodes == 0) throw ConfigError("run.episodes must be positive");
    if (interval() == 0 || episodes % interval() != 0) throw ConfigError("run.eval_interval must divide run.episodes");
    if (evaluations() == 0) throw ConfigError("run.eval_episodes must be positive");
    if (jobs == 0) throw ConfigError("run.jobs must be positive");
    if (discrete() && family == Family::Hac) throw ConfigError("family hac needs a continuous environment");
    if (!discrete() && family == Family::HierQ) throw ConfigError("family hierq needs a discrete environment");
    if (family == Family::HierQ && (k < 2 || k > 3)) throw ConfigError("agent.k must be 2 or 3 for hierq");
    if (family == Family::Hac && (k < 1 || k > 3)) throw ConfigError("agent.k must be 1, 2 or 3 for hac");
    if (discrete())
      tabular_config().validate(family == Family::HierQ);
    else
      agent_config().validate();
  }
};

inline Environment make_environment(const RunConfig& c) {
  switch (c.env) {
    case EnvName::FourRooms: {
      auto rows = c.map_rows.empty() ? GridWorld::default_four_rooms_map() : c.map_rows;
      return Environment(GridWorld::parse(rows, true, c.gamma));
    }
    case EnvName::PointMass: {
      auto p = c.point_mass;
      p.gamma = c.gamma;
      return Environment(PointMass2D(p));
    }
    case EnvName::Pendulum: {
      auto p = c.pendulum;
      p.gamma = c.gamma;
      return Environment(Pendulum(p));
    }
  }
  throw ConfigError("unknown environment");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

template <class T>
T parse_uint(std::string_view v) {
  T out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("expected a nonnegative integer, got '" + std::string(v) + "'");
  return out;
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

inline HerStrategy parse_her(std::string_view v) {
  if (v == "final") return HerStrategy::FinalState;
  if (v == "uniform") return HerStrategy::UniformAchieved;
  throw ConfigError("unknown hindsight strategy '" + std::string(v) + "'");
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto p = s.find(sep);
    out.push_back(trim(s.substr(0, p)));
    if (p == std::string_view::npos) break;
    s.remove_prefix(p + 1);
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(std::string_view v) {
  std::vector<std::uint64_t> out;
  for (auto item : split(v, ',')) {
    if (item.empty()) throw ConfigError("empty item in seed list");
    auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_uint<std::uint64_t>(item));
      continue;
    }
    auto a = parse_uint<std::uint64_t>(trim(item.substr(0, dash)));
    auto b = parse_uint<std::uint64_t>(trim(item.substr(dash + 1)));
    if (b < a || b - a > 100000) throw ConfigError("bad seed range '" + std::string(item) + "'");
    for (auto s = a; s <= b; ++s) out.push_back(s);
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Key {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HAC_REAL(field) \
  Key { [](RunConfig& c, std::string_view v) { c.field = parse_double(v); }, [](const RunConfig& c) { return fmt(c.field); } }
#define HAC_HER(field)                                                                     \
  Key {                                                                                    \
    [](RunConfig& c, std::string_view v) { c.field = parse_her(v); },                      \
        [](const RunConfig& c) { return std::string(to_string(c.field)); }                 \
  }
#define HAC_UINT(field)                                                                    \
  Key {                                                                                    \
    [](RunConfig& c, std::string_view v) { c.field = parse_uint<std::size_t>(v); },        \
        [](const RunConfig& c) { return std::to_string(c.field); }                         \
  }

using KeyTable = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Key>>>>;

inline const KeyTable& key_table() {
  static const KeyTable table = [] {
    KeyTable t;
    t.push_back({"env",
                 {{"kind", Key{[](RunConfig& c, std::string_view v) {
                                 if (v == "four_rooms") c.env = EnvName::FourRooms;
                                 else if (v == "point_mass") c.env = EnvName::PointMass;
                                 else if (v == "pendulum") c.env = EnvName::Pendulum;
                                 else throw ConfigError("unknown environment '" + std::string(v) + "'");
                               },
                               [](const RunConfig& c) { return std::string(to_string(c.env)); }}}}});
    t.push_back({"point_mass",
                 {{"mass", HAC_REAL(point_mass.mass)},
                  {"dt", HAC_REAL(point_mass.dt)},
                  {"force_limit", HAC_REAL(point_mass.force_limit)},
                  {"arena", HAC_REAL(point_mass.arena)},
                  {"velocity_limit", HAC_REAL(point_mass.velocity_limit)},
                  {"goal_threshold", HAC_REAL(point_mass.goal_threshold)},
                  {"velocity_threshold", HAC_REAL(point_mass.velocity_threshold)}}});
    t.push_back({"pendulum",
                 {{"mass", HAC_REAL(pendulum.mass)},
                  {"length", HAC_REAL(pendulum.length)},
                  {"dt", HAC_REAL(pendulum.dt)},
                  {"torque_limit", HAC_REAL(pendulum.torque_limit)},
                  {"gravity", HAC_REAL(pendulum.gravity)},
                  {"velocity_limit", HAC_REAL(pendulum.velocity_limit)},
                  {"target_low", HAC_REAL(pendulum.target_low)},
                  {"target_high", HAC_REAL(pendulum.target_high)},
                  {"angle_threshold", HAC_REAL(pendulum.angle_threshold)},
                  {"velocity_threshold", HAC_REAL(pendulum.velocity_threshold)}}});
    t.push_back(
        {"agent",
         {{"family", Key{[](RunConfig& c, std::string_view v) {
                           if (v == "hac") c.family = Family::Hac;
                           else if (v == "hierq") c.family = Family::HierQ;
                           else if (v == "flat") c.family = Family::Flat;
                           else throw ConfigError("unknown agent family '" + std::string(v) + "'");
                         },
                         [](const RunConfig& c) { return std::string(to_string(c.family)); }}},
          {"k", Key{[](RunConfig& c, std::string_view v) { c.k = static_cast<int>(parse_uint<unsigned>(v)); },
                    [](const RunConfig& c) { return std::to_string(c.k); }}},
          {"H", Key{[](RunConfig& c, std::string_view v) { c.H = parse_uint<std::size_t>(v); },
                    [](const RunConfig& c) { return std::to_string(c.horizon()); }}},
          {"gamma", HAC_REAL(gamma)}}});
    t.push_back(
        {"hac",
         {{"lambda", HAC_REAL(hac.lambda)},
          {"penalty", Key{[](RunConfig& c, std::string_view v) { c.hac.penalty = parse_double(v); },
                          [](const RunConfig& c) { return c.hac.penalty ? fmt(*c.hac.penalty) : std::string("-H"); }}},
          {"uniform_explore_frac", HAC_REAL(hac.uniform_explore_frac)},
          {"testing_mode", Key{[](RunConfig& c, std::string_view v) {
                                 if (v == "standard") c.hac.testing_mode = TestingMode::Standard;
                                 else if (v == "never_test") c.hac.testing_mode = TestingMode::NeverTest;
                                 else if (v == "always_penalize") c.hac.testing_mode = TestingMode::AlwaysPenalize;
                                 else throw ConfigError("unknown testing mode '" + std::string(v) + "'");
                               },
                               [](const RunConfig& c) { return std::string(to_string(c.hac.testing_mode)); }}},
          {"noise_primitive", HAC_REAL(hac.noise_primitive)},
          {"noise_subgoal", HAC_REAL(hac.noise_subgoal)},
          {"batch_size", HAC_UINT(hac.batch_size)},
          {"updates_per_episode", HAC_UINT(hac.updates_per_episode)},
          {"lr_actor", HAC_REAL(hac.lr_actor)},
          {"lr_critic", HAC_REAL(hac.lr_critic)},
          {"buffer_primitive", HAC_UINT(hac.buffer_primitive)},
          {"buffer_subgoal", HAC_UINT(hac.buffer_subgoal)},
          {"her_strategy", HAC_HER(hac.her_strategy)},
          {"her_count", HAC_UINT(hac.her_count)},
          {"action_l2", HAC_REAL(hac.action_l2)},
          {"hidden", Key{[](RunConfig& c, std::string_view v) {
                           c.hac.hidden.clear();
                           for (auto item : split(v, ',')) c.hac.hidden.push_back(parse_uint<std::size_t>(item));
                         },
                         [](const RunConfig& c) {
                           std::string s;
                           for (auto h : c.hac.hidden) s += (s.empty() ? "" : ",") + std::to_string(h);
                           return s;
                         }}},
          {"target_networks", Key{[](RunConfig& c, std::string_view v) { c.hac.target_networks = parse_bool(v); },
                                  [](const RunConfig& c) { return std::string(c.hac.target_networks ? "true" : "false"); }}},
          {"tau", HAC_REAL(hac.tau)}}});
    t.push_back({"tabular",
                 {{"alpha", HAC_REAL(tabular.alpha)},
                  {"epsilon_start", HAC_REAL(tabular.epsilon_start)},
                  {"epsilon_end", HAC_REAL(tabular.epsilon_end)},
                  {"epsilon_decay_episodes", HAC_UINT(tabular.decay_episodes)},
                  {"her_strategy", HAC_HER(tabular.her_strategy)},
                  {"her_count", HAC_UINT(tabular.her_count)}}});
    t.push_back(
        {"run",
         {{"episodes", HAC_UINT(episodes)},
          {"eval_interval", Key{[](RunConfig& c, std::string_view v) { c.eval_interval = parse_uint<std::size_t>(v); },
                                [](const RunConfig& c) { return std::to_string(c.interval()); }}},
          {"eval_episodes", Key{[](RunConfig& c, std::string_view v) { c.eval_episodes = parse_uint<std::size_t>(v); },
                                [](const RunConfig& c) { return std::to_string(c.evaluations()); }}},
          {"seeds", Key{[](RunConfig& c, std::string_view v) { c.seeds = parse_seeds(v); },
                        [](const RunConfig& c) {
                          std::string s;
                          for (auto x : c.seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
                          return s;
                        }}},
          {"output_dir", Key{[](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); },
                             [](const RunConfig& c) { return c.output_dir; }}},
          {"name", Key{[](RunConfig& c, std::string_view v) { c.name = std::string(v); },
                       [](const RunConfig& c) { return c.name; }}},
          {"jobs", HAC_UINT(jobs)}}});
    return t;
  }();
  return table;
}

#undef HAC_REAL
#undef HAC_UINT
#undef HAC_HER

inline const Key* find_key(std::string_view section, std::string_view key) {
  for (const auto& [sec, keys] : key_table()) {
    if (sec != section) continue;
    for (const auto& [name, k] : keys)
      if (name == key) return &k;
    throw ConfigError("unknown key '" + std::string(key) + "' in section [" + std::string(section) + "]");
  }
  throw ConfigError("unknown section [" + std::string(section) + "]");
}

}  // namespace detail

/// Applies one setting; env.row appends a map row.
inline void apply_setting(RunConfig& c, std::string_view section, std::string_view key, std::string_view value) {
  if (section == "env" && key == "row") {
    c.map_rows.emplace_back(value);
    return;
  }
  detail::find_key(section, key)->set(c, value);
}

/// Applies a "section.key=value" override.
inline void apply_override(RunConfig& c, std::string_view text) {
  auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like section.key=value: '" + std::string(text) + "'");
  auto lhs = detail::trim(text.substr(0, eq));
  auto dot = lhs.find('.');
  if (dot == std::string_view::npos) throw ConfigError("override key must be section.key: '" + std::string(lhs) + "'");
  apply_setting(c, lhs.substr(0, dot), lhs.substr(dot + 1), detail::trim(text.substr(eq + 1)));
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  RunConfig c;
  std::string section;
  std::vector<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
    auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError("unterminated section header");
        section = std::string(detail::trim(t.substr(1, t.size() - 2)));
        bool known = false;
        for (const auto& entry : detail::key_table()) known = known || entry.first == section;
        if (!known) throw ConfigError("unknown section [" + section + "]");
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected key = value");
      if (section.empty()) throw ConfigError("setting outside of any section");
      auto key = std::string(detail::trim(t.substr(0, eq)));
      if (key.empty()) throw ConfigError("empty key");
      std::string full = section + "." + key;
      if (full != "env.row") {
        if (std::find(seen.begin(), seen.end(), full) != seen.end()) throw ConfigError("duplicate key " + full);
        seen.push_back(full);
      }
      apply_setting(c, section, key, detail::trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where() + e.what());
    }
  }
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

/// Writes every setting with its resolved value; parsing the output yields an equivalent config.
inline void write_config(std::ostream& os, const RunConfig& c) {
  bool first = true;
  for (const auto& [sec, keys] : detail::key_table()) {
    os << (first ? "" : "\n") << '[' << sec << "]\n";
    first = false;
    for (const auto& [name, k] : keys) {
      if (sec == "hac" && name == "penalty" && !c.hac.penalty) continue;
      os << name << " = " << k.get(c) << '\n';
    }
    if (sec == "env")
      for (const auto& r : c.map_rows) os << "row = " << r << '\n';
  }
}

}  // namespace hac
