#include "emx/geometry.hpp"

#include "emx/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace emx {

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(angle, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

NoiseSpec NoiseSpec::from_confidence95(double odom_trans, double odom_rot_rad, double range,
                                       double bearing_rad, double max_range) {
  constexpr double z95 = 1.96;
  NoiseSpec spec;
  spec.odom_trans_sigma = odom_trans / z95;
  spec.odom_rot_sigma = odom_rot_rad / z95;
  spec.range_sigma = range / z95;
  spec.bearing_sigma = bearing_rad / z95;
  spec.max_sensing_range = max_range;
  spec.validate();
  return spec;
}

NoiseSpec NoiseSpec::scaled(double factor) const {
  NoiseSpec s = *this;
  s.odom_trans_sigma *= factor;
  s.odom_rot_sigma *= factor;
  s.range_sigma *= factor;
  s.bearing_sigma *= factor;
  return s;
}

Cov3 NoiseSpec::odometry_covariance() const {
  const double t2 = odom_trans_sigma * odom_trans_sigma;
  return Eigen::Vector3d(t2, t2, odom_rot_sigma * odom_rot_sigma).asDiagonal();
}

Cov2 NoiseSpec::range_bearing_covariance() const {
  return Eigen::Vector2d(range_sigma * range_sigma, bearing_sigma * bearing_sigma).asDiagonal();
}

Cov3 NoiseSpec::rendezvous_covariance() const {
  const double t = std::max(range_sigma, max_sensing_range * bearing_sigma);
  return Eigen::Vector3d(t * t, t * t, bearing_sigma * bearing_sigma).asDiagonal();
}

void NoiseSpec::validate() const {
  if (!(odom_trans_sigma > 0 && odom_rot_sigma > 0 && range_sigma > 0 && bearing_sigma > 0)) {
    throw ConfigError("noise sigmas must be positive");
  }
  if (!(max_sensing_range > 0)) throw ConfigError("max sensing range must be positive");
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

Pose2 inverse(const Pose2& a) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return {-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta};
}

Pose2 between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta};
}

Point2 transform_from(const Pose2& frame, Point2 local) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y};
}

Point2 transform_to(const Pose2& frame, Point2 world) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const double dx = world.x - frame.x;
  const double dy = world.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

RangeBearing observe_landmark(const Pose2& x, Point2 l) {
  const double dx = l.x - x.x;
  const double dy = l.y - x.y;
  const double r = std::hypot(dx, dy);
  if (r == 0.0) return {0.0, 0.0};
  return {r, wrap_angle(std::atan2(dy, dx) - x.theta)};
}

Point2 landmark_from_observation(const Pose2& x, const RangeBearing& z) {
  const double a = x.theta + z.bearing;
  return {x.x + z.range * std::cos(a), x.y + z.range * std::sin(a)};
}

Matrix23 jacobian_observe_wrt_pose(const Pose2& x, Point2 l) {
  const double dx = l.x - x.x;
  const double dy = l.y - x.y;
  const double r2 = dx * dx + dy * dy;
  if (r2 == 0.0) throw DegenerateGeometryError("bearing derivative undefined at zero range");
  const double r = std::sqrt(r2);
  Matrix23 h;
  h << -dx / r, -dy / r, 0.0,
       dy / r2, -dx / r2, -1.0;
  return h;
}

Eigen::Matrix2d jacobian_observe_wrt_landmark(const Pose2& x, Point2 l) {
  const double dx = l.x - x.x;
  const double dy = l.y - x.y;
  const double r2 = dx * dx + dy * dy;
  if (r2 == 0.0) throw DegenerateGeometryError("bearing derivative undefined at zero range");
  const double r = std::sqrt(r2);
  Eigen::Matrix2d h;
  h << dx / r, dy / r,
       -dy / r2, dx / r2;
  return h;
}

BetweenJacobians jacobian_between(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  BetweenJacobians j;
  j.wrt_a << -c, -s, -s * dx + c * dy,
              s, -c, -c * dx - s * dy,
              0, 0, -1;
  j.wrt_b << c, s, 0,
             -s, c, 0,
             0, 0, 1;
  return j;
}

bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

}  // namespace emx
