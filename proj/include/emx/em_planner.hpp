#pragma once

#include "emx/factor_graph.hpp"
#include "emx/frontier.hpp"
#include "emx/grid_path.hpp"
#include "emx/marginals.hpp"
#include "emx/virtual_map.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace emx {

enum class DistanceMode { PathLength, Euclidean };
enum class Lambda1Mode { Fixed, ExploredRatioScaled };

/// Scale factors of the EM utility lambda0*U_M + lambda1*U_T + lambda2*U_D.
struct PlannerWeights {
  double lambda0 = 1.0;
  double lambda1 = 0.0;
  double lambda2 = 10.0;
  /// ExploredRatioScaled uses lambda1 * (1 - r), r the explored ratio.
  Lambda1Mode lambda1_mode = Lambda1Mode::Fixed;

  static PlannerWeights em2() { return {1.0, 0.0, 10.0, Lambda1Mode::Fixed}; }
  static PlannerWeights em3() { return {1.0, 20.0, 10.0, Lambda1Mode::ExploredRatioScaled}; }

  double effective_lambda1(double explored_ratio) const;
};

/// Parameters shared by all planners.
struct PlanningParams {
  NoiseSpec noise;
  /// Distance between consecutive virtual waypoints (meters).
  double waypoint_spacing = 4.0;
  /// Distance covered by one motion step; virtual odometry noise grows per step.
  double step_length = 1.0;
  /// Falloff distance of the task-allocation kernel h(d).
  double d_max = 30.0;
  DistanceMode distance_mode = DistanceMode::PathLength;
};

struct CandidateEvaluation {
  Frontier frontier;
  double u_m = 0.0;
  double u_t = 0.0;
  double u_d = 0.0;
  double utility = 0.0;
  bool feasible = false;
};

/// Waypoints of one robot; index 0 is its current state (key time `first_time`),
/// index k maps to key time first_time + k.
struct RobotWaypoints {
  int robot = 0;
  int first_time = 0;
  std::vector<Pose2> waypoints;
};

/// Uniform samples along the shortest obstacle-free grid path from `from` to
/// `to`. Throws PlanningError when no path exists.
std::vector<Pose2> generate_virtual_waypoints(const Pose2& from, const Pose2& to, const ObstacleGrid& grid,
                                              double spacing);

/// Same sampling over an already planned polyline.
std::vector<Pose2> waypoints_along(std::span<const Point2> path, const Pose2& from, const Pose2& to, double spacing);

/// Noise-free predicted measurements along the waypoint sets: odometry between
/// consecutive waypoints, range-bearing to known landmarks within sensing
/// range, and robot-robot relative poses at equal indices within range.
std::vector<Factor> virtual_observe(std::span<const LandmarkBelief> landmarks,
                                    std::span<const RobotWaypoints> plans, const NoiseSpec& noise,
                                    double step_length);

enum class PropagationMode {
  /// Exact low-rank update of the current marginals (no graph copy).
  ConditionalUpdate,
  /// Copy the graph, append the virtual factors and re-optimize.
  FullReoptimize,
};

struct PropagationResult {
  bool feasible = true;
  /// Estimates of reported historical poses and of every appended pose.
  std::map<VariableKey, Pose2> poses;
  std::map<VariableKey, Cov3> pose_marginals;
  std::map<VariableKey, Cov2> landmark_marginals;
  std::set<VariableKey> appended;

  std::vector<PoseBelief> pose_beliefs(int robot) const;
  /// `base` with covariances replaced by the propagated landmark marginals.
  std::vector<LandmarkBelief> landmark_beliefs(std::span<const LandmarkBelief> base) const;
};

/// Predicts posterior uncertainty after hypothetical future trajectories.
/// Holds a reference to `graph`, which must be optimized and outlive it.
class UncertaintyPropagator {
 public:
  UncertaintyPropagator(const FactorGraph& graph, PropagationMode mode, const NoiseSpec& noise,
                        double step_length);

  /// Appends the plans' future states and their virtual observations and
  /// returns marginals of the appended poses, of every historical pose of the
  /// robots in `report_robots` and of every landmark. The graph is not modified.
  PropagationResult propagate(std::span<const RobotWaypoints> plans, std::span<const LandmarkBelief> landmarks,
                              const std::set<int>& report_robots) const;

  PropagationMode mode() const { return mode_; }
  const FactorGraph& graph() const { return graph_; }
  /// Marginals of the current graph; null in FullReoptimize mode.
  const Marginals* marginals() const { return marginals_.get(); }
  const std::map<VariableKey, Eigen::MatrixXd>& current_blocks() const;

 private:
  PropagationResult propagate_full(const std::vector<Factor>& factors, const std::map<VariableKey, Pose2>& appended,
                                   const std::set<int>& report_robots) const;
  PropagationResult propagate_update(const std::vector<Factor>& factors,
                                     const std::map<VariableKey, Pose2>& appended,
                                     const std::set<int>& report_robots) const;
  Eigen::MatrixXd columns_for(std::span<const VariableKey> keys) const;

  const FactorGraph& graph_;
  PropagationMode mode_;
  NoiseSpec noise_;
  double step_length_;
  std::unique_ptr<Marginals> marginals_;
  mutable std::optional<std::map<VariableKey, Eigen::MatrixXd>> blocks_;
  std::map<VariableKey, int> cached_col_;
  Eigen::MatrixXd cached_columns_;
};

/// Map-uncertainty utility: sum of trace(sigma) of the local map over cells
/// observed (q > q_min) in both maps. Throws Error on grid mismatch.
double compute_u_m(const VirtualMap& inter_map, const VirtualMap& local_map);

/// Task-allocation utility: sum of h(|candidate - a|) over other robots'
/// historical targets with h(d) = 1 - d/d_max for d < d_max, else 0.
double compute_u_t(Point2 candidate, std::span<const Point2> other_targets, double d_max);

/// Index of the minimum-utility feasible candidate; ties go to the smaller
/// U_D, then to the earlier candidate. Throws PlanningError when none is feasible.
std::size_t select_target(std::span<const CandidateEvaluation> evaluations);

struct RobotState {
  int id = 0;
  VariableKey current_key;
  Pose2 estimate;
  std::optional<Pose2> target;
};

/// Immutable snapshot a robot decides on.
struct PlanningContext {
  const FactorGraph* graph = nullptr;
  const VirtualMap* inter_map = nullptr;
  const ObstacleGrid* grid = nullptr;
  /// Current-graph propagator shared by the candidates of one decision.
  const UncertaintyPropagator* propagator = nullptr;
  std::vector<LandmarkBelief> landmarks;
  std::vector<RobotState> robots;
  /// Every target ever chosen, by any robot.
  std::vector<NeighborTarget> target_history;
  int self = 0;

  const RobotState& self_state() const;
  std::vector<Point2> other_targets() const;
  double explored_ratio() const;
};

/// Candidate frontier with its planned path.
struct CandidatePlan {
  Frontier frontier;
  std::vector<Point2> path;
  bool reachable = false;
  double path_length = 0.0;
  double euclidean = 0.0;

  double distance(DistanceMode mode) const { return mode == DistanceMode::PathLength ? path_length : euclidean; }
};

std::vector<CandidatePlan> plan_candidates(const PlanningContext& ctx, std::span<const Frontier> frontiers);

/// Waypoint sets of the other robots heading to their current targets (X_predict).
std::vector<RobotWaypoints> neighbor_predictions(const PlanningContext& ctx, double spacing);

class Planner {
 public:
  virtual ~Planner() = default;
  virtual std::string name() const = 0;
  virtual bool needs_propagator() const { return false; }
  virtual std::vector<CandidateEvaluation> evaluate(const PlanningContext& ctx,
                                                    std::span<const CandidatePlan> candidates) const = 0;
};

/// Expectation-maximization planner: propagates every candidate through the
/// SLAM graph, rebuilds the local virtual map and scores it against the
/// inter-robot map.
class EmPlanner : public Planner {
 public:
  EmPlanner(PlannerWeights weights, PlanningParams params, std::string name = "em");
  std::string name() const override { return name_; }
  bool needs_propagator() const override { return true; }
  std::vector<CandidateEvaluation> evaluate(const PlanningContext& ctx,
                                            std::span<const CandidatePlan> candidates) const override;

  /// Local virtual map of the deciding robot after a hypothetical move to `plan`.
  std::optional<VirtualMap> predicted_local_map(const PlanningContext& ctx, const CandidatePlan& plan,
                                                std::span<const RobotWaypoints> neighbors) const;

  const PlannerWeights& weights() const { return weights_; }

 private:
  PlannerWeights weights_;
  PlanningParams params_;
  std::string name_;
};

struct Decision {
  std::vector<CandidateEvaluation> evaluations;
  std::optional<std::size_t> selected;
  std::vector<Point2> path;
};

/// Frontiers -> candidate paths -> planner scores -> argmin.
Decision decide(const Planner& planner, const PlanningContext& ctx, std::span<const Frontier> frontiers);

}  // namespace emx
