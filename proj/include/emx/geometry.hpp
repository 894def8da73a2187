#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace emx {

using Cov2 = Eigen::Matrix2d;
using Cov3 = Eigen::Matrix3d;
using Matrix23 = Eigen::Matrix<double, 2, 3>;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Eigen::Vector2d vec() const { return {x, y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

inline double distance(Point2 a, Point2 b) { return std::hypot(b.x - a.x, b.y - a.y); }

/// SE(2) state: position in meters, heading in radians kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double px, double py, double heading) : x(px), y(py), theta(wrap_angle(heading)) {}

  Point2 position() const { return {x, y}; }
  Eigen::Vector3d vec() const { return {x, y, theta}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

struct RangeBearing {
  double range = 0.0;
  double bearing = 0.0;

  friend bool operator==(const RangeBearing&, const RangeBearing&) = default;
};

/// Standard deviations of the motion and sensor models, plus the sensing radius.
struct NoiseSpec {
  double odom_trans_sigma = 0.05 / 1.96;
  double odom_rot_sigma = deg2rad(0.5) / 1.96;
  double range_sigma = 0.002 / 1.96;
  double bearing_sigma = deg2rad(0.5) / 1.96;
  double max_sensing_range = 7.5;

  /// Builds a spec from 95% confidence half-widths (sigma = value / 1.96).
  static NoiseSpec from_confidence95(double odom_trans, double odom_rot_rad, double range,
                                     double bearing_rad, double max_range);

  /// Multiplies every sigma by `factor`; the sensing range is unchanged.
  NoiseSpec scaled(double factor) const;

  Cov3 odometry_covariance() const;
  Cov2 range_bearing_covariance() const;
  /// Relative-pose measurement between two robots: the translational part comes
  /// from range/bearing accuracy at the edge of the sensing disc.
  Cov3 rendezvous_covariance() const;

  void validate() const;
};

Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& a);
/// Relative pose expressing `b` in the frame of `a`.
Pose2 between(const Pose2& a, const Pose2& b);

/// Point expressed in `frame` mapped into the world.
Point2 transform_from(const Pose2& frame, Point2 local);
/// World point expressed in `frame`.
Point2 transform_to(const Pose2& frame, Point2 world);

/// Range and bearing (counterclockwise from the heading) of a landmark.
/// A coincident landmark yields (0, 0).
RangeBearing observe_landmark(const Pose2& x, Point2 l);

/// Landmark position implied by a range-bearing measurement taken at `x`.
Point2 landmark_from_observation(const Pose2& x, const RangeBearing& z);

/// d(range, bearing) / d(x, y, theta). Throws DegenerateGeometryError at zero range.
Matrix23 jacobian_observe_wrt_pose(const Pose2& x, Point2 l);
/// d(range, bearing) / d(lx, ly). Throws DegenerateGeometryError at zero range.
Eigen::Matrix2d jacobian_observe_wrt_landmark(const Pose2& x, Point2 l);

/// Jacobians of between(a, b) with respect to the global (x, y, theta) of a and b.
struct BetweenJacobians {
  Eigen::Matrix3d wrt_a;
  Eigen::Matrix3d wrt_b;
};
BetweenJacobians jacobian_between(const Pose2& a, const Pose2& b);

bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol = 1e-9);

}  // namespace emx
