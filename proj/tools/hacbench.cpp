// hacbench: train, evaluate, benchmark and plot hierarchical agents.
#include "hac/bench.hpp"
#include "hac/checkpoint.hpp"
#include "hac/config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

hac::RunConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw hac::IoError("cannot read config " + path);
  hac::RunConfig c = hac::parse_config(in, path);
  for (const auto& o : overrides) hac::apply_override(c, o);
  c.validate();
  return c;
}

void report(const hac::RunRecord& rec) {
  if (rec.aggregate.empty()) return;
  const auto& last = rec.aggregate.back();
  std::printf("%s: episode %zu mean success %.4f (std %.4f) over %zu seeds\n", rec.name.c_str(), last.episode,
              last.mean, last.std, rec.curves.size());
}

void write_resolved(const hac::RunConfig& c) {
  std::ofstream os(fs::path(c.output_dir) / (c.name + ".resolved.cfg"));
  hac::write_config(os, c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical agent training and benchmark harness"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string trace_path;

  auto* train = app.add_subcommand("train", "train all seeds of a config, write CSVs and checkpoints");
  train->add_option("config", config, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--set", overrides, "override, section.key=value")->take_all();

  std::string ckpt;
  std::size_t episodes = 0;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--config", config, "config describing the environment and agent")->required()->check(CLI::ExistingFile);
  eval->add_option("--set", overrides, "override, section.key=value")->take_all();
  eval->add_option("--episodes", episodes, "evaluation episodes (default run.eval_episodes)");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  std::vector<std::string> configs;
  std::string plot_out;
  auto* bench = app.add_subcommand("bench", "run one or more campaigns and optionally plot them together");
  bench->add_option("configs", configs, "config files")->required()->check(CLI::ExistingFile);
  bench->add_option("--set", overrides, "override applied to every config")->take_all();
  bench->add_option("--plot", plot_out, "SVG output for the aggregate curves");

  std::vector<std::string> csvs;
  std::string svg_out;
  auto* plot = app.add_subcommand("plot", "render aggregate CSVs to SVG");
  plot->add_option("csvs", csvs, "aggregate CSV files")->required();
  plot->add_option("-o,--output", svg_out, "SVG output")->required();

  std::size_t trace_episodes = 1;
  auto* trace = app.add_subcommand("trace", "train the first seed with the transition trace enabled");
  trace->add_option("config", config, "config file")->required()->check(CLI::ExistingFile);
  trace->add_option("--set", overrides, "override, section.key=value")->take_all();
  trace->add_option("-o,--output", trace_path, "trace output")->required();
  trace->add_option("--episodes", trace_episodes, "training episodes to trace");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto c = load(config, overrides);
      hac::CampaignOptions opt{true, true};
      auto rec = hac::run_campaign(c, opt);
      write_resolved(c);
      report(rec);
      std::printf("wrote %s and %s\n", hac::seed_csv_path(c).c_str(), hac::aggregate_csv_path(c).c_str());
    } else if (*eval) {
      auto c = load(config, overrides);
      auto runner = hac::make_runner(c, 0);
      runner->restore(hac::load_checkpoint(ckpt));
      hac::Rng rng = hac::stream_rng(eval_seed, hac::Stream::Eval);
      double rate = runner->evaluate(episodes ? episodes : c.evaluations(), rng);
      std::printf("success_rate %s\n", hac::detail::num(rate).c_str());
    } else if (*bench) {
      std::vector<fs::path> aggregates;
      for (const auto& path : configs) {
        auto c = load(path, overrides);
        auto rec = hac::run_campaign(c);
        write_resolved(c);
        report(rec);
        aggregates.push_back(hac::aggregate_csv_path(c));
      }
      if (!plot_out.empty()) hac::emit_plot(aggregates, plot_out);
    } else if (*plot) {
      std::vector<fs::path> paths(csvs.begin(), csvs.end());
      hac::emit_plot(paths, svg_out);
    } else if (*trace) {
      auto c = load(config, overrides);
      std::ofstream tos(trace_path);
      if (!tos) throw hac::IoError("cannot write " + trace_path);
      auto runner = hac::make_runner(c, c.seeds.front());
      runner->set_trace(hac::make_trace_writer(tos));
      hac::Rng rng = hac::stream_rng(c.seeds.front(), hac::Stream::Train);
      for (std::size_t e = 0; e < trace_episodes; ++e) runner->train_episode(rng);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "hacbench: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
