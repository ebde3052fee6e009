#include "hac/bench.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace hac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hac_bench_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Walks straight down the breadth-first distance field to the goal.
struct OracleWalker {
  bool evaluate_episode(const GridWorld& env, Rng& rng) const {
    Task t = env.sample_task(rng);
    std::size_t s = cell(t.start.values), g = cell(t.goal);
    auto d = env.distances_from(g);
    for (std::size_t n = 0; n < env.episode_limit() && s != g; ++n)
      for (std::size_t a = 0; a < 4; ++a)
        if (d[env.move(s, a)] < d[s]) {
          s = env.move(s, a);
          break;
        }
    return s == g;
  }
};

struct Idle {
  bool evaluate_episode(const GridWorld& env, Rng& rng) const {
    Task t = env.sample_task(rng);
    return cell(t.start.values) == cell(t.goal);
  }
};

struct RandomWalker {
  bool evaluate_episode(const GridWorld& env, Rng& rng) const {
    Task t = env.sample_task(rng);
    std::size_t s = cell(t.start.values), g = cell(t.goal);
    std::uniform_int_distribution<std::size_t> a(0, 3);
    for (std::size_t n = 0; n < env.episode_limit() && s != g; ++n) s = env.move(s, a(rng));
    return s == g;
  }
};

RunConfig hierq_config(const fs::path& dir, std::vector<std::uint64_t> seeds) {
  RunConfig c;
  c.env = EnvName::FourRooms;
  c.family = Family::HierQ;
  c.k = 2;
  c.episodes = 200;
  c.eval_interval = 50;
  c.eval_episodes = 10;
  c.seeds = std::move(seeds);
  c.output_dir = dir.string();
  c.name = "hq";
  return c;
}

RunConfig hac_config(const fs::path& dir) {
  RunConfig c;
  c.point_mass.arena = 1.0;
  c.k = 2;
  c.H = 5;
  c.hac.hidden = {8, 8};
  c.hac.batch_size = 8;
  c.hac.updates_per_episode = 2;
  c.episodes = 6;
  c.eval_interval = 3;
  c.eval_episodes = 3;
  c.seeds = {1, 2};
  c.output_dir = dir.string();
  c.name = "pm";
  return c;
}

std::vector<double> numbers_in(const std::string& s) {
  std::vector<double> out;
  std::regex num(R"(-?\d+(\.\d+)?)");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), num); it != std::sregex_iterator(); ++it)
    out.push_back(std::stod(it->str()));
  return out;
}

std::string attribute_of(const std::string& svg, const std::string& cls, const std::string& attr, std::size_t nth = 0) {
  std::size_t at = 0;
  for (std::size_t i = 0; i <= nth; ++i) {
    at = svg.find("class=\"" + cls + "\"", i == 0 ? 0 : at + 1);
    if (at == std::string::npos) return "";
  }
  auto b = svg.find(attr + "=\"", at) + attr.size() + 2;
  return svg.substr(b, svg.find('"', b) - b);
}

}  // namespace

TEST(Evaluate, ScriptedAgents) {
  auto env = GridWorld::four_rooms();
  Rng rng(1);
  EXPECT_EQ(evaluate(OracleWalker{}, env, 100, rng), 1.0);
  EXPECT_EQ(evaluate(Idle{}, env, 100, rng), 0.0);
  EXPECT_THROW(evaluate(Idle{}, env, 0, rng), ConfigError);
}

TEST(Evaluate, RandomWalkFourRoomsAnchor) {
  auto env = GridWorld::four_rooms();
  Rng rng(2024);
  double rate = evaluate(RandomWalker{}, env, 500, rng);
  EXPECT_EQ(rate, 114.0 / 500.0);  // regression anchor recorded from this walker
}

TEST(Streams, IndependentAndRepeatable) {
  EXPECT_EQ(stream_rng(5, Stream::Train)(), stream_rng(5, Stream::Train)());
  EXPECT_NE(stream_rng(5, Stream::Train)(), stream_rng(5, Stream::Eval)());
  EXPECT_NE(stream_rng(5, Stream::Train)(), stream_rng(6, Stream::Train)());
  EXPECT_NE(stream_rng(5, Stream::Train, 1)(), stream_rng(5, Stream::Train, 2)());
}

TEST(Campaign, IdenticalConfigsGiveIdenticalCsvs) {
  auto a = scratch("det_a"), b = scratch("det_b");
  run_campaign(hierq_config(a, {1, 2, 3}));
  run_campaign(hierq_config(b, {1, 2, 3}));
  EXPECT_EQ(slurp(a / "hq.csv"), slurp(b / "hq.csv"));
  EXPECT_EQ(slurp(a / "hq_aggregate.csv"), slurp(b / "hq_aggregate.csv"));
  EXPECT_FALSE(slurp(a / "hq.csv").empty());

  auto c = scratch("det_c"), d = scratch("det_d");
  run_campaign(hac_config(c));
  auto par = hac_config(d);
  par.jobs = 2;
  run_campaign(par);
  EXPECT_EQ(slurp(c / "pm.csv"), slurp(d / "pm.csv"));
  for (const auto& p : {a, b, c, d}) fs::remove_all(p);
}

TEST(Campaign, SingleSeedHasZeroStd) {
  auto dir = scratch("single");
  auto rec = run_campaign(hierq_config(dir, {7}));
  ASSERT_EQ(rec.aggregate.size(), 5u);
  for (const auto& p : rec.aggregate) EXPECT_EQ(p.std, 0.0);
  std::ifstream in(dir / "hq_aggregate.csv");
  for (const auto& p : read_aggregate_csv(in)) EXPECT_EQ(p.std, 0.0);
  fs::remove_all(dir);
}

TEST(Campaign, AggregateMatchesIndependentRecomputation) {
  auto dir = scratch("agg");
  auto cfg = hierq_config(dir, {1, 2, 3, 4, 5});
  run_campaign(cfg);
  std::ifstream sin(dir / "hq.csv"), ain(dir / "hq_aggregate.csv");
  auto seeds = read_seed_csv(sin);
  auto agg = read_aggregate_csv(ain);
  ASSERT_EQ(seeds.size(), 5u);
  ASSERT_EQ(agg.size(), 5u);
  for (std::size_t p = 0; p < agg.size(); ++p) {
    EXPECT_EQ(agg[p].episode, p * 50);
    long double sum = 0, sq = 0;
    for (const auto& s : seeds) {
      double r = s.points[p].success;
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
      EXPECT_EQ(s.points[p].episode, agg[p].episode);
      sum += r;
      sq += static_cast<long double>(r) * r;
    }
    long double mean = sum / 5, var = sq / 5 - mean * mean;
    EXPECT_NEAR(agg[p].mean, static_cast<double>(mean), 1e-12);
    EXPECT_NEAR(agg[p].std, std::sqrt(static_cast<double>(std::max<long double>(var, 0))), 1e-12);
  }
  fs::remove_all(dir);
}

TEST(Campaign, UnwritableDirectoryNamesPath) {
  auto base = scratch("unwritable");
  fs::create_directories(base);
  std::ofstream(base / "file") << "x";
  auto cfg = hierq_config(base / "file" / "sub", {1});
  try {
    run_campaign(cfg);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find((base / "file" / "sub").string()), std::string::npos);
  }
  fs::remove_all(base);
}

TEST(Campaign, CheckpointRestoresEvaluationExactly) {
  auto dir = scratch("ckpt");
  auto cfg = hac_config(dir);
  CampaignOptions opt;
  opt.save_checkpoints = true;
  run_campaign(cfg, opt);
  auto trained = make_runner(cfg, 1);
  run_seed(cfg, 1, *trained);
  auto restored = make_runner(cfg, 1);
  restored->restore(load_checkpoint(checkpoint_path(cfg, 1)));
  std::ostringstream x, y;
  write_checkpoint(x, trained->checkpoint());
  write_checkpoint(y, restored->checkpoint());
  EXPECT_EQ(x.str(), y.str());
  Rng r1(77), r2(77);
  EXPECT_EQ(trained->evaluate(10, r1), restored->evaluate(10, r2));
  fs::remove_all(dir);
}

TEST(Campaign, EvaluationDoesNotMutateAgent) {
  for (auto cfg : {hierq_config("unused", {1}), hac_config("unused")}) {
    auto runner = make_runner(cfg, 3);
    Rng train(1);
    for (int e = 0; e < 3; ++e) runner->train_episode(train);
    std::ostringstream before, after;
    write_checkpoint(before, runner->checkpoint());
    Rng eval(2);
    runner->evaluate(5, eval);
    write_checkpoint(after, runner->checkpoint());
    EXPECT_EQ(before.str(), after.str());
  }
}

TEST(Campaign, TraceOnlyForHac) {
  auto runner = make_runner(hierq_config("unused", {1}), 1);
  EXPECT_THROW(runner->set_trace({}), ConfigError);
}

TEST(Csv, ParseErrorsNameTheLine) {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_aggregate_csv(in, "x.csv");
    } catch (const CsvParseError& e) {
      EXPECT_NE(std::string(e.what()).find("x.csv:" + std::to_string(e.line()) + ":"), std::string::npos);
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("episode,mean\n0,0,0\n"), 1u);
  EXPECT_EQ(line_of("episode,mean,std\n0,0.5,0\n50,abc,0\n"), 3u);
  EXPECT_EQ(line_of("episode,mean,std\n0,0.5\n"), 2u);
  EXPECT_EQ(line_of("episode,mean,std\n0,0.5,-1\n"), 2u);
  EXPECT_EQ(line_of(""), 1u);
  EXPECT_EQ(line_of("episode,mean,std\r\n0,0.5,0.1\r\n"), 0u);

  std::istringstream seeds("episode,seed,success_rate\n0,1,0.5\n0,x,0.5\n");
  EXPECT_THROW(read_seed_csv(seeds), CsvParseError);
}

TEST(Csv, WriteReadRoundTripIsExact) {
  std::vector<AggregatePoint> agg{{0, 0.1, 0.2}, {50, 1.0 / 3.0, 0.0}, {100, 0.9999999999999999, 1e-17}};
  std::ostringstream os;
  write_aggregate_csv(os, agg);
  std::istringstream in(os.str());
  auto back = read_aggregate_csv(in);
  ASSERT_EQ(back.size(), agg.size());
  for (std::size_t i = 0; i < agg.size(); ++i) {
    EXPECT_EQ(back[i].episode, agg[i].episode);
    EXPECT_EQ(back[i].mean, agg[i].mean);
    EXPECT_EQ(back[i].std, agg[i].std);
  }
}

TEST(Plot, FlatZeroCurveSitsOnTheAxis) {
  std::ostringstream os;
  write_svg(os, {{"zero", {{0, 0, 0}, {50, 0, 0}, {100, 0, 0}}}});
  std::string svg = os.str();
  auto pts = numbers_in(attribute_of(svg, "mean", "points"));
  ASSERT_EQ(pts.size(), 6u);
  for (std::size_t i = 1; i < pts.size(); i += 2) EXPECT_EQ(pts[i], pts[1]);
  EXPECT_NE(svg.find(">episodes</text>"), std::string::npos);
  EXPECT_NE(svg.find(">success rate</text>"), std::string::npos);
  EXPECT_NE(svg.find(">0</text>"), std::string::npos);
  EXPECT_NE(svg.find(">1</text>"), std::string::npos);
}

TEST(Plot, LegendInInputOrderAndBandsClamped) {
  std::vector<PlotSeries> s{{"three", {{0, 0.9, 0.3}, {10, 0.95, 0.2}}},
                            {"two", {{0, 0.1, 0.4}, {10, 0.5, 0.1}}},
                            {"flat", {{0, 0.0, 0.0}, {10, 0.02, 0.05}}}};
  std::ostringstream os;
  write_svg(os, s);
  std::string svg = os.str();
  auto p3 = svg.find(">three</text>"), p2 = svg.find(">two</text>"), p1 = svg.find(">flat</text>");
  ASSERT_NE(p3, std::string::npos);
  ASSERT_NE(p2, std::string::npos);
  ASSERT_NE(p1, std::string::npos);
  EXPECT_LT(p3, p2);
  EXPECT_LT(p2, p1);
  std::size_t legends = 0;
  for (auto at = svg.find("class=\"legend\""); at != std::string::npos; at = svg.find("class=\"legend\"", at + 1))
    ++legends;
  EXPECT_EQ(legends, 3u);

  // Plot area spans y in [20, 380]; band edges must stay inside it.
  for (std::size_t i = 0; i < 3; ++i) {
    auto pts = numbers_in(attribute_of(svg, "band", "points", i));
    ASSERT_EQ(pts.size(), 8u);
    for (std::size_t j = 1; j < pts.size(); j += 2) {
      EXPECT_GE(pts[j], 20.0);
      EXPECT_LE(pts[j], 380.0);
    }
  }
}

TEST(Plot, EmitFromFiles) {
  auto dir = scratch("plot");
  fs::create_directories(dir);
  std::ofstream(dir / "a.csv") << "episode,mean,std\n0,0.2,0.1\n100,0.8,0.1\n";
  std::ofstream(dir / "bad.csv") << "episode,mean,std\n0,0.2,0.1\n100,oops,0.1\n";
  emit_plot({dir / "a.csv"}, dir / "out.svg");
  EXPECT_NE(slurp(dir / "out.svg").find(">a</text>"), std::string::npos);
  try {
    emit_plot({dir / "a.csv", dir / "bad.csv"}, dir / "out2.svg");
    FAIL() << "expected CsvParseError";
  } catch (const CsvParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(emit_plot({dir / "missing.csv"}, dir / "x.svg"), IoError);
  EXPECT_THROW(emit_plot({}, dir / "x.svg"), ConfigError);
  fs::remove_all(dir);
}
