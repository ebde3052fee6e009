#pragma once

#include "hac/checkpoint.hpp"
#include "hac/config.hpp"
#include "hac/env.hpp"
#include "hac/hac_agent.hpp"
#include "hac/hierq_agent.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hac {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CsvParseError : public std::runtime_error {
 public:
  CsvParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Fraction of noise-free episodes that reach the end goal.
template <class Agent, class Env>
double evaluate(const Agent& agent, const Env& env, std::size_t n_episodes, Rng& rng) {
  if (n_episodes == 0) throw ConfigError("evaluate: need at least one episode");
  std::size_t wins = 0;
  for (std::size_t e = 0; e < n_episodes; ++e) wins += agent.evaluate_episode(env, rng) ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(n_episodes);
}

// Independent generator streams derived from a run seed.
enum class Stream : std::uint64_t { Agent = 1, Train = 2, Eval = 3 };

inline Rng stream_rng(std::uint64_t seed, Stream s, std::uint64_t extra = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(extra),
                    static_cast<std::uint32_t>(extra >> 32)};
  return Rng(seq);
}

/// Type-erased agent bound to its environment.
class AgentRunner {
 public:
  virtual ~AgentRunner() = default;
  virtual bool train_episode(Rng& rng) = 0;
  virtual bool evaluate_episode(Rng& rng) const = 0;
  virtual CheckpointData checkpoint() const = 0;
  virtual void restore(const CheckpointData& d) = 0;
  // Transition trace; only agents that build transitions support it.
  virtual void set_trace(TraceSink sink) = 0;

  double evaluate(std::size_t n, Rng& rng) const {
    std::size_t wins = 0;
    for (std::size_t e = 0; e < n; ++e) wins += evaluate_episode(rng) ? 1 : 0;
    return static_cast<double>(wins) / static_cast<double>(n);
  }
};

namespace detail {

template <class Env>
class HacRunner final : public AgentRunner {
 public:
  HacRunner(Env env, const AgentConfig& cfg, std::uint64_t seed)
      : env_(std::move(env)), agent_(env_.spec(), cfg, seed) {}
  bool train_episode(Rng& rng) override {
    ++episodes_;
    return agent_.train_episode(env_, rng);
  }
  bool evaluate_episode(Rng& rng) const override { return agent_.evaluate_episode(env_, rng); }
  CheckpointData checkpoint() const override { return capture(agent_, episodes_); }
  void restore(const CheckpointData& d) override {
    hac::restore(agent_, d);
    episodes_ = d.episodes;
  }
  void set_trace(TraceSink sink) override { agent_.hooks().trace = std::move(sink); }
  HacAgent<Env>& agent() { return agent_; }
  const Env& env() const { return env_; }

 private:
  Env env_;
  HacAgent<Env> agent_;
  std::uint64_t episodes_ = 0;
};

template <class Agent>
class TabularRunner final : public AgentRunner {
 public:
  TabularRunner(GridWorld env, const TabularConfig& cfg) : env_(std::move(env)), agent_(env_.spec(), cfg) {}
  bool train_episode(Rng& rng) override { return agent_.train_episode(env_, rng); }
  bool evaluate_episode(Rng& rng) const override { return agent_.evaluate_episode(env_, rng); }
  CheckpointData checkpoint() const override { return capture(agent_); }
  void restore(const CheckpointData& d) override { hac::restore(agent_, d); }
  void set_trace(TraceSink) override { throw ConfigError("transition trace is only available for hac agents"); }

 private:
  GridWorld env_;
  Agent agent_;
};

}  // namespace detail

inline std::unique_ptr<AgentRunner> make_runner(const RunConfig& c, std::uint64_t seed) {
  c.validate();
  Environment env = make_environment(c);
  if (const auto* grid = env.as<GridWorld>()) {
    if (c.family == Family::Flat)
      return std::make_unique<detail::TabularRunner<FlatQAgent<GridWorld>>>(*grid, c.tabular_config());
    return std::make_unique<detail::TabularRunner<HierQAgent<GridWorld>>>(*grid, c.tabular_config());
  }
  auto agent_seed = stream_rng(seed, Stream::Agent)();
  if (const auto* pm = env.as<PointMass2D>())
    return std::make_unique<detail::HacRunner<PointMass2D>>(*pm, c.agent_config(), agent_seed);
  return std::make_unique<detail::HacRunner<Pendulum>>(*env.as<Pendulum>(), c.agent_config(), agent_seed);
}

// ---------------------------------------------------------------------------
// Campaigns

struct CurvePoint {
  std::size_t episode = 0;
  double success = 0;
};

struct SeedCurve {
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;
};

struct AggregatePoint {
  std::size_t episode = 0;
  double mean = 0;
  double std = 0;
};

struct RunRecord {
  std::string name;
  std::vector<SeedCurve> curves;  // in seed-list order
  std::vector<AggregatePoint> aggregate;
};

/// Population mean and standard deviation across seeds at each evaluation point.
inline std::vector<AggregatePoint> aggregate_curves(const std::vector<SeedCurve>& curves) {
  std::vector<AggregatePoint> out;
  if (curves.empty()) return out;
  for (std::size_t p = 0; p < curves.front().points.size(); ++p) {
    double sum = 0;
    for (const auto& c : curves) sum += c.points.at(p).success;
    double n = static_cast<double>(curves.size());
    double mean = sum / n;
    double var = 0;
    for (const auto& c : curves) var += (c.points[p].success - mean) * (c.points[p].success - mean);
    out.push_back({curves.front().points[p].episode, mean, std::sqrt(var / n)});
  }
  return out;
}

/// Trains one seed; evaluation happens before training and after every interval.
/// The evaluation generator is reseeded per point so every point sees the same tasks.
inline SeedCurve run_seed(const RunConfig& c, std::uint64_t seed, AgentRunner& agent) {
  SeedCurve curve{seed, {}};
  Rng train = stream_rng(seed, Stream::Train);
  auto eval_point = [&](std::size_t ep) {
    Rng eval = stream_rng(seed, Stream::Eval);
    curve.points.push_back({ep, agent.evaluate(c.evaluations(), eval)});
  };
  eval_point(0);
  for (std::size_t ep = 1; ep <= c.episodes; ++ep) {
    agent.train_episode(train);
    if (ep % c.interval() == 0) eval_point(ep);
  }
  return curve;
}

inline SeedCurve run_seed(const RunConfig& c, std::uint64_t seed) {
  auto runner = make_runner(c, seed);
  return run_seed(c, seed, *runner);
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

}  // namespace detail

inline void write_seed_csv(std::ostream& os, const std::vector<SeedCurve>& curves) {
  os << "episode,seed,success_rate\n";
  for (const auto& c : curves)
    for (const auto& p : c.points) os << p.episode << ',' << c.seed << ',' << detail::num(p.success) << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregatePoint>& agg) {
  os << "episode,mean,std\n";
  for (const auto& a : agg) os << a.episode << ',' << detail::num(a.mean) << ',' << detail::num(a.std) << '\n';
}

inline std::filesystem::path seed_csv_path(const RunConfig& c) {
  return std::filesystem::path(c.output_dir) / (c.name + ".csv");
}
inline std::filesystem::path aggregate_csv_path(const RunConfig& c) {
  return std::filesystem::path(c.output_dir) / (c.name + "_aggregate.csv");
}
inline std::filesystem::path checkpoint_path(const RunConfig& c, std::uint64_t seed) {
  return std::filesystem::path(c.output_dir) / (c.name + "_seed" + std::to_string(seed) + ".ckpt");
}

struct CampaignOptions {
  bool write_files = true;
  bool save_checkpoints = false;
};

/// Runs every seed (in parallel when jobs > 1), then writes
/// <output_dir>/<name>.csv and <name>_aggregate.csv.
inline RunRecord run_campaign(const RunConfig& c, const CampaignOptions& opt = {}) {
  c.validate();
  namespace fs = std::filesystem;
  if (opt.write_files) {
    std::error_code ec;
    fs::create_directories(c.output_dir, ec);
    if (ec || !fs::is_directory(c.output_dir)) throw IoError("cannot create output directory " + c.output_dir);
  }
  auto one = [&](std::uint64_t seed) {
    auto runner = make_runner(c, seed);
    SeedCurve curve = run_seed(c, seed, *runner);
    if (opt.save_checkpoints) save_checkpoint(checkpoint_path(c, seed), runner->checkpoint());
    return curve;
  };
  RunRecord rec{c.name, {}, {}};
  if (c.jobs <= 1) {
    for (auto s : c.seeds) rec.curves.push_back(one(s));
  } else {
    for (std::size_t start = 0; start < c.seeds.size(); start += c.jobs) {
      std::vector<std::future<SeedCurve>> batch;
      for (std::size_t i = start; i < std::min(c.seeds.size(), start + c.jobs); ++i)
        batch.push_back(std::async(std::launch::async, one, c.seeds[i]));
      for (auto& f : batch) rec.curves.push_back(f.get());
    }
  }
  rec.aggregate = aggregate_curves(rec.curves);
  if (opt.write_files) {
    auto a = detail::open_out(seed_csv_path(c));
    write_seed_csv(a, rec.curves);
    auto b = detail::open_out(aggregate_csv_path(c));
    write_aggregate_csv(b, rec.aggregate);
    if (!a || !b) throw IoError("write failed in " + c.output_dir);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// CSV reading

namespace detail {

inline std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T csv_number(const std::string& s, const std::string& source, std::size_t line) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw CsvParseError(source, line, "bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<AggregatePoint> read_aggregate_csv(std::istream& in, const std::string& source = "csv") {
  std::vector<AggregatePoint> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      if (line != "episode,mean,std") throw CsvParseError(source, n, "expected header episode,mean,std");
      continue;
    }
    if (line.empty()) continue;
    auto f = detail::csv_fields(line);
    if (f.size() != 3) throw CsvParseError(source, n, "expected 3 fields, got " + std::to_string(f.size()));
    AggregatePoint p{detail::csv_number<std::size_t>(f[0], source, n), detail::csv_number<double>(f[1], source, n),
                     detail::csv_number<double>(f[2], source, n)};
    if (!std::isfinite(p.mean) || !std::isfinite(p.std) || p.std < 0)
      throw CsvParseError(source, n, "mean must be finite and std nonnegative");
    out.push_back(p);
  }
  if (n == 0) throw CsvParseError(source, 1, "empty file");
  return out;
}

inline std::vector<SeedCurve> read_seed_csv(std::istream& in, const std::string& source = "csv") {
  std::vector<SeedCurve> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      if (line != "episode,seed,success_rate") throw CsvParseError(source, n, "expected header episode,seed,success_rate");
      continue;
    }
    if (line.empty()) continue;
    auto f = detail::csv_fields(line);
    if (f.size() != 3) throw CsvParseError(source, n, "expected 3 fields, got " + std::to_string(f.size()));
    auto ep = detail::csv_number<std::size_t>(f[0], source, n);
    auto seed = detail::csv_number<std::uint64_t>(f[1], source, n);
    auto rate = detail::csv_number<double>(f[2], source, n);
    if (out.empty() || out.back().seed != seed) out.push_back({seed, {}});
    out.back().points.push_back({ep, rate});
  }
  if (n == 0) throw CsvParseError(source, 1, "empty file");
  return out;
}

// ---------------------------------------------------------------------------
// SVG learning-curve plot

struct PlotSeries {
  std::string label;
  std::vector<AggregatePoint> points;
};

inline void write_svg(std::ostream& os, const std::vector<PlotSeries>& series) {
  if (series.empty()) throw ConfigError("plot: need at least one series");
  static const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  const double W = 720, Hh = 440, left = 70, right = 170, top = 20, bottom = 60;
  const double pw = W - left - right, ph = Hh - top - bottom;
  std::size_t xmax = 1;
  for (const auto& s : series)
    for (const auto& p : s.points) xmax = std::max(xmax, p.episode);
  auto X = [&](double e) { return left + pw * e / static_cast<double>(xmax); };
  auto Y = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };
  auto n = [](double v) { return detail::num(std::round(v * 100) / 100); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\" viewBox=\"0 0 " << W
     << ' ' << Hh << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double v = i / 4.0;
    os << "<line x1=\"" << n(left) << "\" y1=\"" << n(Y(v)) << "\" x2=\"" << n(left + pw) << "\" y2=\"" << n(Y(v))
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << n(left - 8) << "\" y=\"" << n(Y(v) + 4) << "\" text-anchor=\"end\">" << detail::num(v)
       << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    double e = static_cast<double>(xmax) * i / 5.0;
    os << "<text x=\"" << n(X(e)) << "\" y=\"" << n(top + ph + 18) << "\" text-anchor=\"middle\">"
       << static_cast<long long>(std::llround(e)) << "</text>\n";
  }
  os << "<rect x=\"" << n(left) << "\" y=\"" << n(top) << "\" width=\"" << n(pw) << "\" height=\"" << n(ph)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << n(left + pw / 2) << "\" y=\"" << n(Hh - 15) << "\" text-anchor=\"middle\">episodes</text>\n";
  os << "<text x=\"18\" y=\"" << n(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << n(top + ph / 2) << ")\">success rate</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* col = colors[i % std::size(colors)];
    if (s.points.empty()) continue;
    os << "<polygon class=\"band\" fill=\"" << col << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& p : s.points) os << n(X(static_cast<double>(p.episode))) << ',' << n(Y(p.mean + p.std)) << ' ';
    for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
      os << n(X(static_cast<double>(it->episode))) << ',' << n(Y(it->mean - it->std)) << ' ';
    os << "\"/>\n";
    os << "<polyline class=\"mean\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : s.points) os << n(X(static_cast<double>(p.episode))) << ',' << n(Y(p.mean)) << ' ';
    os << "\"/>\n";
    double ly = top + 14 + 20.0 * static_cast<double>(i);
    os << "<g class=\"legend\"><line x1=\"" << n(left + pw + 15) << "\" y1=\"" << n(ly - 4) << "\" x2=\""
       << n(left + pw + 40) << "\" y2=\"" << n(ly - 4) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>";
    std::string label;
    for (char ch : s.label) {
      if (ch == '<') label += "&lt;";
      else if (ch == '>') label += "&gt;";
      else if (ch == '&') label += "&amp;";
      else label += ch;
    }
    os << "<text x=\"" << n(left + pw + 46) << "\" y=\"" << n(ly) << "\">" << label << "</text></g>\n";
  }
  os << "</svg>\n";
}

/// Reads aggregate CSVs and writes one SVG; labels are the file stems.
inline void emit_plot(const std::vector<std::filesystem::path>& csvs, const std::filesystem::path& out) {
  if (csvs.empty()) throw ConfigError("plot: need at least one aggregate CSV");
  std::vector<PlotSeries> series;
  for (const auto& p : csvs) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read " + p.string());
    series.push_back({p.stem().string(), read_aggregate_csv(in, p.string())});
  }
  auto os = detail::open_out(out);
  write_svg(os, series);
  if (!os) throw IoError("write failed: " + out.string());
}

}  // namespace hac
