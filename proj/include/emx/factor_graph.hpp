#pragma once

#include "emx/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace emx {

/// Identifies a variable: a robot pose (robot, time step) or a landmark.
/// The natural ordering is all poses by (robot, time), then landmarks by id.
struct VariableKey {
  enum class Kind : std::uint8_t { RobotPose = 0, Landmark = 1 };

  Kind kind = Kind::RobotPose;
  int robot = 0;
  int time = 0;
  int landmark = 0;

  static VariableKey pose(int robot_id, int time_index) {
    return {Kind::RobotPose, robot_id, time_index, 0};
  }
  static VariableKey point(int landmark_id) { return {Kind::Landmark, 0, 0, landmark_id}; }

  bool is_pose() const { return kind == Kind::RobotPose; }
  int dim() const { return is_pose() ? 3 : 2; }
  std::string str() const;

  auto operator<=>(const VariableKey&) const = default;
};

using Value = std::variant<Pose2, Point2>;

struct PriorPoseFactor {
  VariableKey key;
  Pose2 measured;
  Cov3 covariance;
};

struct PriorPointFactor {
  VariableKey key;
  Point2 measured;
  Cov2 covariance;
};

/// Relative pose between consecutive states of one robot.
struct OdometryFactor {
  VariableKey from;
  VariableKey to;
  Pose2 measured;
  Cov3 covariance;
};

/// Relative pose of robot `to` observed by robot `from` at the same time step.
struct RendezvousFactor {
  VariableKey from;
  VariableKey to;
  Pose2 measured;
  Cov3 covariance;
};

struct LandmarkFactor {
  VariableKey pose;
  VariableKey landmark;
  RangeBearing measured;
  Cov2 covariance;
};

using Factor =
    std::variant<PriorPoseFactor, PriorPointFactor, OdometryFactor, RendezvousFactor, LandmarkFactor>;

std::vector<VariableKey> factor_keys(const Factor& factor);
bool is_prior(const Factor& factor);

struct OptimizerOptions {
  int max_iterations = 100;
  double relative_cost_tolerance = 1e-8;
  double step_tolerance = 1e-8;
  /// Infinity norm of the whitened gradient below which the current point is accepted as-is.
  double gradient_tolerance = 1e-10;
  double initial_lambda = 1e-4;
  double lambda_factor = 10.0;
  double max_lambda = 1e12;
};

struct GraphEstimate {
  std::map<VariableKey, Value> values;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;

  Pose2 pose(const VariableKey& key) const;
  Point2 point(const VariableKey& key) const;
  bool contains(const VariableKey& key) const { return values.count(key) != 0; }
};

/// Gauss-Newton system at a linearization point: information matrix (full
/// symmetric storage), gradient J^T W r and cost 0.5 * sum |r|_W^2.
struct LinearSystem {
  Eigen::SparseMatrix<double> information;
  Eigen::VectorXd gradient;
  double cost = 0.0;
};

/// Nonlinear least-squares factor graph over 2D poses and landmarks. Values
/// are the current linearization point; optimize() replaces them with the
/// MAP estimate. Copying a graph yields a fully independent clone.
class FactorGraph {
 public:
  void add_variable(const VariableKey& key, const Value& initial);
  void add_factor(const Factor& factor);

  bool contains(const VariableKey& key) const { return index_.count(key) != 0; }
  std::size_t num_variables() const { return values_.size(); }
  std::size_t num_factors() const { return factors_.size(); }
  /// Total scalar dimension of the state.
  int dimension() const;

  const Value& value(const VariableKey& key) const;
  Pose2 pose(const VariableKey& key) const;
  Point2 point(const VariableKey& key) const;
  void set_value(const VariableKey& key, const Value& value);

  const std::vector<Factor>& factors() const { return factors_; }
  /// Keys in matrix layout order.
  std::vector<VariableKey> keys() const;
  /// Offset of the key's block in the stacked state vector.
  int offset(const VariableKey& key) const;

  double cost() const;
  LinearSystem linearize() const;

  /// Levenberg-Marquardt MAP optimization. Throws UnknownKeyError when a
  /// factor references a missing variable and GaugeError when a connected
  /// component carries no prior.
  GraphEstimate optimize(const OptimizerOptions& options = {});

  /// Current values packaged as an estimate (no optimization).
  GraphEstimate snapshot() const;

  /// Line-oriented text dump: a `#` header, then one `VAR` or `FACTOR` per line.
  void write_dump(std::ostream& out) const;

  void check_gauge() const;

 private:
  struct Slot {
    VariableKey key;
    Value value;
  };

  void refresh_layout() const;
  double cost_at(const std::vector<Slot>& values) const;
  LinearSystem linearize_at(const std::vector<Slot>& values) const;
  void check_factor_keys() const;

  std::vector<Slot> values_;
  std::map<VariableKey, int> index_;
  std::vector<Factor> factors_;
  std::vector<Eigen::Matrix3d> sqrt_info_;

  // Layout caches (rebuilt lazily after structural changes).
  mutable bool layout_dirty_ = true;
  mutable std::vector<int> offsets_;       // per slot
  mutable std::vector<std::array<int, 2>> factor_slots_;
  mutable int dimension_ = 0;
  // Sparsity pattern of the information matrix and, per factor, the value
  // index of the first entry of each (row block, column) pair.
  mutable Eigen::SparseMatrix<double> pattern_;
  mutable std::vector<std::array<int, 12>> fill_index_;
};

/// Marginal covariance of one variable at the graph's current values.
Eigen::MatrixXd marginal_covariance(const FactorGraph& graph, const VariableKey& key);

}  // namespace emx
