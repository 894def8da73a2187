#pragma once

#include "emx/factor_graph.hpp"
#include "emx/geometry.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

namespace emx {

/// Geometry and probability parameters of a virtual map.
struct VirtualMapSpec {
  Point2 origin{0.0, 0.0};
  double cell_size = 2.0;
  int width = 0;
  int height = 0;
  double q_prior = 0.5;
  double p_hit = 0.8;
  /// Minimum probability for a cell to count as observed.
  double q_min = 0.67;
  double max_sensing_range = 7.5;

  /// Smallest grid anchored at `origin` covering a width_m x height_m area.
  static VirtualMapSpec covering(double width_m, double height_m, double cell, double sensing_range);

  bool same_grid(const VirtualMapSpec& other) const;
  int num_cells() const { return width * height; }
};

/// A grid cell treated as a fictitious point feature.
struct VirtualLandmark {
  Point2 center;
  double q = 0.5;
  Cov2 sigma = Cov2::Zero();
  int observed_count = 0;
  /// False until the first covariance contribution arrives.
  bool has_sigma = false;
};

/// Pose (with optional marginal) fed into a map rebuild.
struct PoseBelief {
  int robot = 0;
  Pose2 pose;
  std::optional<Cov3> covariance;
};

/// Landmark estimate (with optional marginal) stamped into a map rebuild.
struct LandmarkBelief {
  int id = 0;
  Point2 position;
  std::optional<Cov2> covariance;
};

class VirtualMap {
 public:
  explicit VirtualMap(const VirtualMapSpec& spec);

  const VirtualMapSpec& spec() const { return spec_; }
  int width() const { return spec_.width; }
  int height() const { return spec_.height; }
  int size() const { return static_cast<int>(cells_.size()); }

  int index(int ix, int iy) const { return iy * spec_.width + ix; }
  int ix(int index) const { return index % spec_.width; }
  int iy(int index) const { return index / spec_.width; }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < spec_.width && iy < spec_.height; }
  /// Cell containing `p`, if inside the grid.
  std::optional<int> cell_at(Point2 p) const;
  Point2 center(int index) const { return cells_[index].center; }
  /// True for cells on the outermost ring of the grid.
  bool on_border(int index) const;

  const VirtualLandmark& cell(int index) const { return cells_[index]; }
  VirtualLandmark& cell(int index) { return cells_[index]; }
  const std::vector<VirtualLandmark>& cells() const { return cells_; }
  std::vector<VirtualLandmark>& cells_mut() { return cells_; }

  bool observed(int index) const { return cells_[index].q > spec_.q_min; }

  /// Text snapshot: header lines (origin, cell_size, dims) then one line per
  /// cell in row-major order: q sigma_xx sigma_xy sigma_yy.
  void write_snapshot(std::ostream& out) const;
  static VirtualMap read_snapshot(std::istream& in);

  friend bool operator==(const VirtualMap& a, const VirtualMap& b);

 private:
  VirtualMapSpec spec_;
  std::vector<VirtualLandmark> cells_;
};

/// Log-odds update: logit(q_new) = logit(q_old) + logit(p_hit); inputs are
/// clamped to [1e-6, 1 - 1e-6].
double update_q(double q_old, double p_hit);

/// Pose marginal projected through the landmark-observation Jacobian at the
/// cell center: H * pose_cov * H^T. Throws DegenerateGeometryError when the
/// cell center coincides with the pose.
Cov2 propagate_cell(const Pose2& pose, const Cov3& pose_cov, Point2 cell_center);

struct CovarianceIntersection {
  Cov2 sigma;
  double omega = 0.5;
};

/// Covariance intersection with the weight minimizing the fused trace. For
/// 2x2 inputs trace(M^-1) = tr(M)/det(M) is a ratio of a linear and a
/// quadratic polynomial in omega, so the stationary point is solved for
/// directly. Throws SingularMatrixError for inputs that are not positive
/// definite.
CovarianceIntersection covariance_intersection_weighted(const Cov2& a, const Cov2& b);
/// Same fusion with omega from a golden-section search (tolerance 1e-6).
CovarianceIntersection covariance_intersection_golden(const Cov2& a, const Cov2& b);
Cov2 covariance_intersection(const Cov2& a, const Cov2& b);

/// Trace of the CI fusion at a fixed weight.
double ci_trace(const Cov2& a, const Cov2& b, double omega);

/// Builds a virtual map from pose beliefs. Cells whose centers lie within the
/// sensing range of a pose get a q update and, when the pose carries a
/// covariance, a projected covariance fused by CI. Landmarks are stamped into
/// their cells afterwards. With `robot_filter` only poses of those robots
/// contribute.
VirtualMap rebuild(const VirtualMapSpec& spec, std::span<const PoseBelief> poses,
                   std::span<const LandmarkBelief> landmarks,
                   const std::optional<std::set<int>>& robot_filter = std::nullopt);

/// Convenience overload over a graph estimate and per-variable marginals.
/// Poses without an entry in `marginals` only update q.
VirtualMap rebuild(const VirtualMapSpec& spec, const GraphEstimate& estimate,
                   const std::map<VariableKey, Eigen::MatrixXd>& marginals,
                   const std::optional<std::set<int>>& robot_filter = std::nullopt);

using CellMask = std::function<bool(int index, const VirtualLandmark& cell)>;

/// Sum of trace(sigma) over observed-at-least-once cells passing the mask.
double sum_uncertainty(const VirtualMap& map, const CellMask& mask = {});

/// Fraction of cells with q > q_min.
double explored_ratio(const VirtualMap& map);

}  // namespace emx
