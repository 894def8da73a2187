#include "emx/config.hpp"
#include "emx/errors.hpp"
#include "emx/harness.hpp"
#include "emx/simulation.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoull(item));
    } else {
      const auto lo = std::stoull(item.substr(0, dash));
      const auto hi = std::stoull(item.substr(dash + 1));
      if (hi < lo) throw emx::ConfigError("bad seed range " + item);
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
  }
  if (out.empty()) throw emx::ConfigError("no seeds given");
  return out;
}

std::vector<emx::PlannerKind> parse_planners(const std::string& text) {
  std::vector<emx::PlannerKind> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(emx::parse_planner(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-robot uncertainty-aware exploration simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string planner;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto* run = app.add_subcommand("run", "Run a single trial");
  run->add_option("-c,--config", config_path, "Trial configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("-s,--seed", seed, "Trial seed")->each([&](const std::string&) { seed_given = true; });
  run->add_option("-p,--planner", planner, "Planner override: em2, em3, ce or bsp");
  run->add_option("-o,--out", out_dir, "Output directory");

  std::string seeds_text = "1-10";
  std::string planners_text = "em2,em3,ce,bsp";
  int jobs = 1;
  bool no_svg = false;
  auto* batch = app.add_subcommand("batch", "Run a Monte-Carlo batch");
  batch->add_option("-c,--config", config_path, "Trial configuration (JSON)")->required()->check(CLI::ExistingFile);
  batch->add_option("--seeds", seeds_text, "Seeds, e.g. 1-10 or 3,5,9");
  batch->add_option("--planners", planners_text, "Comma-separated planners");
  batch->add_option("-o,--out", out_dir, "Output directory");
  batch->add_option("-j,--jobs", jobs, "Concurrent trials");
  batch->add_flag("--no-svg", no_svg, "Skip chart rendering");

  std::string input;
  double bin_width = 10.0;
  double explored_target = 0.95;
  auto* render = app.add_subcommand("render", "Render charts from a summary CSV or a batch directory");
  render->add_option("-i,--input", input, "summary.csv or batch directory")->required()->check(CLI::ExistingPath);
  render->add_option("-o,--out", out_dir, "Output directory");
  render->add_option("--bin-width", bin_width, "Distance bin width (m) when re-aggregating");
  render->add_option("--explored-target", explored_target, "Explored ratio target when re-aggregating");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      emx::TrialConfig cfg = emx::load_config(config_path);
      if (seed_given) cfg.seed = seed;
      if (!planner.empty()) cfg.planner = emx::parse_planner(planner);
      const emx::TrialRecord rec = emx::run_trial(cfg);
      const auto dir = std::filesystem::path(out_dir) / rec.planner / ("seed_" + std::to_string(rec.seed));
      emx::write_trial(rec, dir);
      std::printf("%s seed %llu: %s, steps %zu, distance %.1f m, explored %.3f, loc RMSE %.4f m, lm RMSE %.4f m\n",
                  rec.planner.c_str(), static_cast<unsigned long long>(rec.seed),
                  std::string(emx::to_string(rec.status)).c_str(), rec.steps.size(), rec.total_distance(),
                  rec.final_explored(), emx::localization_rmse(rec), emx::landmark_rmse(rec));
      if (rec.status == emx::TrialStatus::Failed) {
        std::fprintf(stderr, "trial failed: %s\n", rec.error.c_str());
        return 1;
      }
      return 0;
    }
    if (*batch) {
      emx::BatchOptions opts;
      opts.config = emx::load_config(config_path);
      opts.seeds = parse_seeds(seeds_text);
      opts.planners = parse_planners(planners_text);
      opts.out_dir = out_dir;
      opts.jobs = jobs;
      opts.write_svg = !no_svg;
      const auto result = emx::run_batch(opts);
      for (const auto& p : result.summary.planners) {
        std::printf("%-4s trials %d failed %d  loc RMSE %.4f m  lm RMSE %.4f m  explored %.3f  to-target %.1f m (%d)\n",
                    p.planner.c_str(), p.trials, p.failed, p.final_loc_rmse, p.final_lm_rmse, p.final_explored,
                    p.distance_to_target, p.reached_target);
      }
      return result.failed > 0 ? 1 : 0;
    }
    if (*render) {
      emx::BatchSummary summary;
      if (std::filesystem::is_directory(input)) {
        summary = emx::aggregate_directory(input, bin_width, explored_target);
      } else {
        std::ifstream in(input);
        summary = emx::read_summary_csv(in);
      }
      emx::render_charts(summary, out_dir);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
