#include <catch_amalgamated.hpp>

#include "emx/errors.hpp"
#include "emx/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace emx;
using Catch::Matchers::WithinAbs;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "name": "tiny",
  "seed": 4,
  "planner": "em3",
  "max_steps": 60,
  "environment": {"width": 40.0, "height": 40.0, "landmarks": 3, "min_landmark_separation": 10.0, "robots": 2}
})";

StepRecord step(double d, double loc, double lm, double ex) {
  StepRecord s;
  s.distance = d;
  s.localization_rmse = loc;
  s.landmark_rmse = lm;
  s.explored = ex;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string all_csv(const TrialRecord& r) {
  std::ostringstream out;
  write_steps_csv(r, out);
  write_poses_csv(r, out);
  write_landmarks_csv(r, out);
  write_decisions_csv(r, out);
  return out.str();
}

}  // namespace

TEST_CASE("RMSE helpers") {
  TrialRecord r;
  CHECK(localization_rmse(r) == 0.0);
  CHECK(landmark_rmse(r) == 0.0);
  r.poses.push_back({0, 0, Pose2{0, 0, 0}, Pose2{3, 4, 1}});
  CHECK_THAT(localization_rmse(r), WithinAbs(5.0, 1e-12));
  r.poses.push_back({0, 1, Pose2{1, 1, 0}, Pose2{1, 1, 0}});
  CHECK_THAT(localization_rmse(r), WithinAbs(std::sqrt(12.5), 1e-12));

  r.landmarks.push_back({0, {0, 0}, Point2{0, 2}});
  r.landmarks.push_back({1, {5, 5}, std::nullopt});
  r.landmarks.push_back({2, {1, 1}, Point2{1, 1}});
  CHECK_THAT(landmark_rmse(r), WithinAbs(std::sqrt(2.0), 1e-12));

  // Loop oracle over random errors.
  TrialRecord q;
  double sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double ex = 0.01 * i;
    const double ey = -0.02 * (i % 7);
    sum += ex * ex + ey * ey;
    q.poses.push_back({i % 3, i, Pose2{1.0 * i, 2.0, 0}, Pose2{1.0 * i + ex, 2.0 + ey, 0}});
  }
  CHECK_THAT(localization_rmse(q), WithinAbs(std::sqrt(sum / 100.0), 1e-12));
}

TEST_CASE("configuration parsing") {
  const TrialConfig d = parse_config("{}");
  CHECK(d.planner == PlannerKind::Em3);
  CHECK(d.environment.num_landmarks == 20);
  const TrialConfig c = parse_config(kSmall);
  CHECK(c.name == "tiny");
  CHECK(c.seed == 4);
  CHECK(c.environment.width == 40.0);
  CHECK(c.environment.num_robots == 2);
  CHECK(c.cell_size == d.cell_size);

  const TrialConfig back = parse_config(to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"planner": "nope"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"unknown_key": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"cell_size": -1})"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  CHECK(parse_planner("bsp") == PlannerKind::Bsp);
  CHECK(to_string(PlannerKind::Ce) == "ce");
}

TEST_CASE("binning carries values forward") {
  TrialRecord a;
  a.planner = "x";
  a.status = TrialStatus::Explored;
  a.steps = {step(0, 0.1, 0.2, 0.0), step(6, 0.3, 0.4, 0.5), step(14, 0.5, 0.6, 0.9)};
  TrialRecord b = a;
  b.steps = {step(0, 0.3, 0.0, 0.1), step(25, 0.7, 1.0, 0.95)};
  TrialRecord f = a;
  f.status = TrialStatus::Failed;
  const BatchSummary s = aggregate({a, b, f}, 10.0, 0.9);
  REQUIRE(s.planners.size() == 1);
  const PlannerSummary& p = s.planner("x");
  CHECK(p.trials == 3);
  CHECK(p.failed == 1);
  REQUIRE(p.bins.size() == 3);
  CHECK_THAT(p.bins[0].loc_mean, WithinAbs(0.3, 1e-12));
  CHECK_THAT(p.bins[0].loc_std, WithinAbs(0.0, 1e-12));
  CHECK_THAT(p.bins[1].loc_mean, WithinAbs(0.4, 1e-12));
  CHECK_THAT(p.bins[1].loc_std, WithinAbs(std::sqrt(0.02), 1e-12));
  CHECK_THAT(p.bins[2].explored_mean, WithinAbs(0.925, 1e-12));
  CHECK_THAT(p.distance_to_target, WithinAbs(19.5, 1e-12));
  CHECK(p.reached_target == 2);
  CHECK_THROWS_AS(aggregate({a}, 0.0, 0.9), ConfigError);

  std::ostringstream out;
  write_summary_csv(s, out);
  std::istringstream in(out.str());
  const BatchSummary r = read_summary_csv(in);
  std::ostringstream again;
  write_summary_csv(r, again);
  CHECK(again.str() == out.str());
  CHECK(render_svg(s, "localization").find("<svg") != std::string::npos);
}

TEST_CASE("trials are deterministic and round-trip through CSV") {
  const TrialConfig c = parse_config(kSmall);
  const TrialRecord r1 = run_trial(c);
  const TrialRecord r2 = run_trial(c);
  REQUIRE(r1.status != TrialStatus::Failed);
  CHECK(r1.steps.size() > 10);
  CHECK(all_csv(r1) == all_csv(r2));

  TrialConfig other = c;
  other.seed = 5;
  CHECK(all_csv(run_trial(other)) != all_csv(r1));

  const fs::path dir = fs::temp_directory_path() / "emx_harness_roundtrip";
  fs::remove_all(dir);
  write_trial(r1, dir / "a");
  const TrialRecord back = read_trial(dir / "a");
  write_trial(back, dir / "b");
  for (const char* f : {"steps.csv", "poses.csv", "landmarks.csv", "decisions.csv", "meta.csv"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  CHECK(back.steps.size() == r1.steps.size());
  CHECK_THAT(localization_rmse(back), WithinAbs(localization_rmse(r1), 1e-6));
  fs::remove_all(dir);
}

TEST_CASE("small batch") {
  BatchOptions opt;
  opt.config = parse_config(kSmall);
  opt.config.max_steps = 25;
  opt.planners = {PlannerKind::Ce, PlannerKind::Em2};
  opt.seeds = {1, 2};
  opt.out_dir = fs::temp_directory_path() / "emx_harness_batch";
  opt.write_svg = false;
  fs::remove_all(opt.out_dir);
  const BatchResult res = run_batch(opt);
  CHECK(res.records.size() == 4);
  CHECK(res.failed == 0);
  CHECK(fs::exists(opt.out_dir / "trials.csv"));
  CHECK(fs::exists(opt.out_dir / "summary.csv"));
  CHECK(fs::exists(opt.out_dir / "ce" / "seed_2" / "steps.csv"));
  const BatchSummary again = aggregate_directory(opt.out_dir, opt.bin_width, opt.config.explored_target);
  std::ostringstream a;
  std::ostringstream b;
  write_summary_csv(res.summary, a);
  write_summary_csv(again, b);
  CHECK(a.str() == b.str());
  fs::remove_all(opt.out_dir);
}
