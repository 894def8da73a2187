#pragma once

#include "emx/config.hpp"
#include "emx/simulation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace emx {

/// Per-trial CSV files (steps, poses, landmarks, decisions) in `dir`.
void write_trial(const TrialRecord& record, const std::filesystem::path& dir);
/// Reads back the files written by write_trial.
TrialRecord read_trial(const std::filesystem::path& dir);

void write_steps_csv(const TrialRecord& record, std::ostream& out);
void write_poses_csv(const TrialRecord& record, std::ostream& out);
void write_landmarks_csv(const TrialRecord& record, std::ostream& out);
void write_decisions_csv(const TrialRecord& record, std::ostream& out);

struct BinStats {
  double bin_start = 0.0;
  double bin_end = 0.0;
  int trials = 0;
  double loc_mean = 0.0;
  double loc_std = 0.0;
  double lm_mean = 0.0;
  double lm_std = 0.0;
  double explored_mean = 0.0;
  double explored_std = 0.0;
};

struct PlannerSummary {
  std::string planner;
  std::vector<BinStats> bins;
  int trials = 0;
  int failed = 0;
  double final_loc_rmse = 0.0;
  double final_lm_rmse = 0.0;
  double final_explored = 0.0;
  /// Mean team distance to reach the explored target; trials that never reach it are excluded.
  double distance_to_target = 0.0;
  int reached_target = 0;
};

struct BatchSummary {
  double bin_width = 10.0;
  double explored_target = 0.95;
  std::vector<PlannerSummary> planners;

  const PlannerSummary& planner(const std::string& name) const;
};

/// Bins every trial's step series by team distance. A trial contributes to a
/// bin the values of its last step at or before the bin end (final values
/// once it has finished). Failed trials are excluded. Bin edges are shared by
/// all planners.
BatchSummary aggregate(const std::vector<TrialRecord>& records, double bin_width, double explored_target);

void write_summary_csv(const BatchSummary& summary, std::ostream& out);
BatchSummary read_summary_csv(std::istream& in);
void write_trials_csv(const std::vector<TrialRecord>& records, double explored_target, std::ostream& out);

struct BatchOptions {
  TrialConfig config;
  std::vector<PlannerKind> planners;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  int jobs = 1;
  bool write_svg = true;
  double bin_width = 10.0;
};

struct BatchResult {
  std::vector<TrialRecord> records;
  BatchSummary summary;
  int failed = 0;
};

/// Runs every (planner, seed) pair; identical seeds across planners give
/// identical environments. Writes per-trial CSVs under
/// out_dir/<planner>/seed_<seed>/, plus trials.csv, summary.csv and charts.
BatchResult run_batch(const BatchOptions& options);

/// Re-aggregates every trial directory found under `batch_dir`.
BatchSummary aggregate_directory(const std::filesystem::path& batch_dir, double bin_width, double explored_target);

/// One SVG line chart per metric (localization, landmark, explored) vs distance.
void render_charts(const BatchSummary& summary, const std::filesystem::path& out_dir);
std::string render_svg(const BatchSummary& summary, const std::string& metric);

}  // namespace emx
