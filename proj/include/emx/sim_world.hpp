#pragma once

#include "emx/geometry.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace emx {

/// Portable random stream: mt19937_64 bits mapped to doubles by fixed
/// formulas, so sequences do not depend on the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller).
  double normal();
  double normal(double sigma) { return sigma * normal(); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Seed of an independent stream derived from a trial seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t trial_seed, std::uint64_t stream);

struct EnvironmentSpec {
  double width = 100.0;
  double height = 100.0;
  int num_landmarks = 20;
  double landmark_radius = 1.0;
  double min_landmark_separation = 10.0;
  int num_robots = 3;
  /// Minimum clearance between a landmark surface and the mission boundary.
  double wall_clearance = 2.0;
  /// Robot starts are drawn in [x0, x1] x [y0, y1], given as fractions of the area.
  double start_x0 = 0.05;
  double start_x1 = 0.2;
  double start_y0 = 0.4;
  double start_y1 = 0.6;
  /// Robots start within this distance of every teammate.
  double start_mutual_range = 7.5;
  double start_min_spacing = 2.0;
  /// Landmarks keep this clearance from every start position.
  double start_clearance = 5.0;
};

struct Landmark {
  int id = 0;
  Point2 position;
  double radius = 1.0;
};

struct Environment {
  double width = 0.0;
  double height = 0.0;
  std::vector<Landmark> landmarks;
  std::vector<Pose2> starts;
  std::uint64_t seed = 0;

  bool inside(Point2 p, double margin = 0.0) const;
  /// True when `p` is within `clearance` of any landmark surface.
  bool collides(Point2 p, double clearance) const;
};

/// Random environment by rejection sampling. Deterministic in `seed`; throws
/// ConfigError after 1e5 rejected draws.
Environment generate_environment(const EnvironmentSpec& spec, std::uint64_t seed);

struct Action {
  double turn = 0.0;
  double forward = 0.0;
};

struct RobotSim {
  int id = 0;
  Pose2 true_pose;
  Rng rng{0};
  double distance = 0.0;
};

/// Applies `action` (turn clamped to +-max_turn, then forward along the new
/// heading) and returns the noisy odometry: the true relative pose plus
/// Gaussian noise on x, y and theta.
Pose2 step_robot(RobotSim& robot, const Action& action, const NoiseSpec& noise, double max_turn);

struct LandmarkObservation {
  int landmark = 0;
  RangeBearing measured;
};

struct RobotObservation {
  int robot = 0;
  /// Pose of the observed robot in the observer's frame.
  Pose2 measured;
};

struct Measurements {
  std::vector<LandmarkObservation> landmarks;
  std::vector<RobotObservation> robots;
};

/// Noisy range-bearing to every landmark center within sensing range and
/// noisy relative poses of every other robot within range.
Measurements sense(RobotSim& robot, const Environment& env, std::span<const RobotSim> others,
                   const NoiseSpec& noise);

struct ApfParams {
  double speed = 1.0;
  double max_turn = deg2rad(15.0);
  double robot_radius = 0.5;
  /// Obstacles farther than this from the robot exert no force.
  double influence = 3.0;
  double attraction_gain = 1.0;
  double repulsion_gain = 1.5;
  /// Heading errors above this turn in place instead of moving.
  double rotate_threshold = deg2rad(60.0);
};

/// One artificial-potential-field action toward `goal`. Attraction uses the
/// estimated pose; repulsion from landmarks and walls uses the true pose. The
/// chosen action never ends inside an inflated landmark or outside the area.
Action apf_step(const Pose2& estimate, const Pose2& truth, Point2 goal, const Environment& env,
                const ApfParams& params);

}  // namespace emx
