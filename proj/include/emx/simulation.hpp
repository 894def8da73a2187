#pragma once

#include "emx/config.hpp"
#include "emx/em_planner.hpp"
#include "emx/factor_graph.hpp"
#include "emx/sim_world.hpp"
#include "emx/virtual_map.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace emx {

struct StepRecord {
  int step = 0;
  /// Total distance traveled by the team (meters).
  double distance = 0.0;
  double explored = 0.0;
  /// RMSE of every pose so far at the current estimate (meters).
  double localization_rmse = 0.0;
  /// RMSE of every observed landmark at the current estimate (meters).
  double landmark_rmse = 0.0;
  std::vector<Pose2> truth;
  std::vector<Pose2> estimate;
};

struct DecisionRecord {
  int step = 0;
  int robot = 0;
  std::vector<CandidateEvaluation> candidates;
  std::optional<std::size_t> selected;
};

struct PoseRecord {
  int robot = 0;
  int time = 0;
  Pose2 truth;
  Pose2 estimate;
};

struct LandmarkRecord {
  int id = 0;
  Point2 truth;
  std::optional<Point2> estimate;
};

enum class TrialStatus { Running, Explored, AllDone, StepBudget, Failed };

std::string_view to_string(TrialStatus status);

struct TrialRecord {
  std::string planner;
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::Running;
  std::string error;
  std::vector<StepRecord> steps;
  std::vector<DecisionRecord> decisions;
  /// Every pose of every robot at the final estimate.
  std::vector<PoseRecord> poses;
  std::vector<LandmarkRecord> landmarks;

  double total_distance() const { return steps.empty() ? 0.0 : steps.back().distance; }
  double final_explored() const { return steps.empty() ? 0.0 : steps.back().explored; }
  /// Team distance at the first step whose explored ratio reaches `ratio`.
  std::optional<double> distance_to_explore(double ratio) const;
};

/// RMSE of the (x, y) error of every recorded pose.
double localization_rmse(const TrialRecord& record);
/// RMSE of the position error over landmarks with an estimate.
double landmark_rmse(const TrialRecord& record);

/// Navigation and decision state of one robot.
struct RobotAgent {
  std::optional<Pose2> target;
  std::optional<FrontierKind> target_kind;
  std::vector<Point2> path;
  std::size_t path_index = 0;
  bool done = false;
  int steps_without_progress = 0;
  double best_distance = 0.0;
  std::vector<Point2> blacklist;
};

/// Team-wide information every robot reads when deciding.
struct SharedState {
  std::vector<NeighborTarget> target_history;
};

/// Centralized multi-robot exploration trial: ground truth, one SLAM graph
/// for the whole team, and asynchronous target decisions.
class Simulation {
 public:
  explicit Simulation(const TrialConfig& config);
  Simulation(const TrialConfig& config, Environment environment);

  /// Advances every robot by one motion step, senses, optimizes and lets
  /// robots that reached (or stalled on) their target decide.
  void step();
  /// Runs to termination and returns the record.
  TrialRecord run();

  bool finished() const { return status_ != TrialStatus::Running; }
  TrialStatus status() const { return status_; }
  int time() const { return time_; }
  double explored() const { return explored_; }

  const TrialConfig& config() const { return config_; }
  const Environment& environment() const { return env_; }
  const FactorGraph& graph() const { return graph_; }
  const std::vector<RobotSim>& robots() const { return robots_; }
  const RobotAgent& agent(int robot) const { return agents_.at(robot); }
  const SharedState& shared() const { return shared_; }
  const TrialRecord& record() const { return record_; }
  /// Robot pairs that observed each other during the last step.
  const std::vector<std::pair<int, int>>& last_rendezvous() const { return last_rendezvous_; }

  Pose2 estimate(int robot) const;
  VariableKey current_key(int robot) const { return VariableKey::pose(robot, time_); }
  VirtualMapSpec map_spec() const { return spec_; }

  /// Fills final poses and landmarks into the record.
  TrialRecord finish();

 private:
  struct TickCache {
    std::unique_ptr<UncertaintyPropagator> propagator;
    std::optional<VirtualMap> inter_map;
    std::optional<ObstacleGrid> grid;
    std::vector<LandmarkBelief> landmarks;
  };

  void initialize();
  void sense_all();
  void optimize();
  void record_step();
  void decide_pending();
  void decision_cycle(int robot);
  TickCache& cache();
  double current_explored() const;

  TrialConfig config_;
  NoiseSpec noise_;
  Environment env_;
  VirtualMapSpec spec_;
  std::unique_ptr<Planner> planner_;
  FactorGraph graph_;
  std::vector<RobotSim> robots_;
  std::vector<RobotAgent> agents_;
  SharedState shared_;
  std::vector<std::vector<Pose2>> truth_history_;
  std::vector<std::pair<int, int>> last_rendezvous_;
  std::optional<TickCache> cache_;
  TrialRecord record_;
  TrialStatus status_ = TrialStatus::Running;
  int time_ = 0;
  double explored_ = 0.0;
};

/// Runs one trial; errors are captured in the record (status Failed).
TrialRecord run_trial(const TrialConfig& config);

}  // namespace emx
