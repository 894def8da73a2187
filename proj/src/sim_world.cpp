#include "emx/sim_world.hpp"

#include "emx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace emx {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  return r * std::cos(a);
}

std::uint64_t derive_seed(std::uint64_t trial_seed, std::uint64_t stream) {
  std::uint64_t z = trial_seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool Environment::inside(Point2 p, double margin) const {
  return p.x >= margin && p.y >= margin && p.x <= width - margin && p.y <= height - margin;
}

bool Environment::collides(Point2 p, double clearance) const {
  return std::any_of(landmarks.begin(), landmarks.end(),
                     [&](const Landmark& l) { return distance(p, l.position) < l.radius + clearance; });
}

Environment generate_environment(const EnvironmentSpec& spec, std::uint64_t seed) {
  if (spec.width <= 0.0 || spec.height <= 0.0) throw ConfigError("environment size must be positive");
  if (spec.num_landmarks < 0 || spec.num_robots < 1) throw ConfigError("invalid landmark or robot count");

  Environment env;
  env.width = spec.width;
  env.height = spec.height;
  env.seed = seed;
  Rng rng(derive_seed(seed, 0));
  long failures = 0;
  auto reject = [&] {
    if (++failures >= 100000) throw ConfigError("environment constraints could not be satisfied");
  };

  const double sx0 = spec.start_x0 * spec.width;
  const double sx1 = spec.start_x1 * spec.width;
  const double sy0 = spec.start_y0 * spec.height;
  const double sy1 = spec.start_y1 * spec.height;
  while (static_cast<int>(env.starts.size()) < spec.num_robots) {
    const Point2 p{rng.uniform(sx0, sx1), rng.uniform(sy0, sy1)};
    const bool ok = std::all_of(env.starts.begin(), env.starts.end(), [&](const Pose2& s) {
      const double d = distance(s.position(), p);
      return d <= spec.start_mutual_range && d >= spec.start_min_spacing;
    });
    if (!ok) {
      reject();
      continue;
    }
    env.starts.emplace_back(p.x, p.y, 0.0);
  }

  const double margin = spec.wall_clearance + spec.landmark_radius;
  if (2.0 * margin >= spec.width || 2.0 * margin >= spec.height) throw ConfigError("area too small for landmarks");
  while (static_cast<int>(env.landmarks.size()) < spec.num_landmarks) {
    const Point2 p{rng.uniform(margin, spec.width - margin), rng.uniform(margin, spec.height - margin)};
    const bool spaced = std::all_of(env.landmarks.begin(), env.landmarks.end(), [&](const Landmark& l) {
      return distance(l.position, p) >= spec.min_landmark_separation;
    });
    const bool clear = std::all_of(env.starts.begin(), env.starts.end(), [&](const Pose2& s) {
      return distance(s.position(), p) >= spec.start_clearance + spec.landmark_radius;
    });
    if (!spaced || !clear) {
      reject();
      continue;
    }
    env.landmarks.push_back({static_cast<int>(env.landmarks.size()), p, spec.landmark_radius});
  }
  return env;
}

Pose2 step_robot(RobotSim& robot, const Action& action, const NoiseSpec& noise, double max_turn) {
  const double turn = std::clamp(action.turn, -max_turn, max_turn);
  const double forward = std::max(0.0, action.forward);
  const Pose2 before = robot.true_pose;
  const double heading = before.theta + turn;
  robot.true_pose = Pose2(before.x + forward * std::cos(heading), before.y + forward * std::sin(heading), heading);
  robot.distance += forward;

  const Pose2 rel = between(before, robot.true_pose);
  const double nx = robot.rng.normal(noise.odom_trans_sigma);
  const double ny = robot.rng.normal(noise.odom_trans_sigma);
  const double nt = robot.rng.normal(noise.odom_rot_sigma);
  return {rel.x + nx, rel.y + ny, rel.theta + nt};
}

Measurements sense(RobotSim& robot, const Environment& env, std::span<const RobotSim> others,
                   const NoiseSpec& noise) {
  Measurements m;
  const Pose2& x = robot.true_pose;
  for (const auto& l : env.landmarks) {
    const double d = distance(x.position(), l.position);
    if (d > noise.max_sensing_range || d < 1e-9) continue;
    const RangeBearing z = observe_landmark(x, l.position);
    const double nr = robot.rng.normal(noise.range_sigma);
    const double nb = robot.rng.normal(noise.bearing_sigma);
    m.landmarks.push_back({l.id, {z.range + nr, wrap_angle(z.bearing + nb)}});
  }
  const Cov3 rv = noise.rendezvous_covariance();
  for (const auto& o : others) {
    if (o.id == robot.id) continue;
    if (distance(x.position(), o.true_pose.position()) > noise.max_sensing_range) continue;
    const Pose2 rel = between(x, o.true_pose);
    const double nx = robot.rng.normal(std::sqrt(rv(0, 0)));
    const double ny = robot.rng.normal(std::sqrt(rv(1, 1)));
    const double nt = robot.rng.normal(std::sqrt(rv(2, 2)));
    m.robots.push_back({o.id, {rel.x + nx, rel.y + ny, rel.theta + nt}});
  }
  return m;
}

namespace {

void add_repulsion(double clearance, double ux, double uy, const ApfParams& params, double& fx, double& fy) {
  if (clearance >= params.influence) return;
  const double d = std::max(clearance, 0.05);
  const double mag = params.repulsion_gain * (1.0 / d - 1.0 / params.influence) / (d * d);
  fx += mag * ux;
  fy += mag * uy;
}

}  // namespace

Action apf_step(const Pose2& estimate, const Pose2& truth, Point2 goal, const Environment& env,
                const ApfParams& params) {
  const double dist_goal = distance(estimate.position(), goal);
  if (dist_goal < 1e-6) return {0.0, 0.0};

  const double ax = (goal.x - estimate.x) / dist_goal;
  const double ay = (goal.y - estimate.y) / dist_goal;
  double fx = params.attraction_gain * ax;
  double fy = params.attraction_gain * ay;

  const Point2 p = truth.position();
  for (const auto& l : env.landmarks) {
    const double dc = distance(p, l.position);
    if (dc < 1e-9) continue;
    const double ux = (p.x - l.position.x) / dc;
    const double uy = (p.y - l.position.y) / dc;
    const double clearance = dc - l.radius - params.robot_radius;
    double rx = 0.0;
    double ry = 0.0;
    add_repulsion(clearance, ux, uy, params, rx, ry);
    if (rx == 0.0 && ry == 0.0) continue;
    // Tangential slide around the disc, on the side the goal lies.
    const double side = (ux * ay - uy * ax) >= 0.0 ? 1.0 : -1.0;
    const double mag = std::hypot(rx, ry);
    fx += rx - side * 0.5 * mag * uy;
    fy += ry + side * 0.5 * mag * ux;
  }
  add_repulsion(p.x - params.robot_radius, 1.0, 0.0, params, fx, fy);
  add_repulsion(env.width - p.x - params.robot_radius, -1.0, 0.0, params, fx, fy);
  add_repulsion(p.y - params.robot_radius, 0.0, 1.0, params, fx, fy);
  add_repulsion(env.height - p.y - params.robot_radius, 0.0, -1.0, params, fx, fy);

  const double desired = std::atan2(fy, fx);
  const double err = wrap_angle(desired - estimate.theta);
  const double turn = std::clamp(err, -params.max_turn, params.max_turn);
  const double forward = std::abs(err) > params.rotate_threshold ? 0.0 : std::min(params.speed, dist_goal);

  auto feasible = [&](double t, double f) {
    const double h = truth.theta + t;
    const Point2 next{p.x + f * std::cos(h), p.y + f * std::sin(h)};
    return env.inside(next, params.robot_radius) && !env.collides(next, params.robot_radius);
  };
  if (forward == 0.0 || feasible(turn, forward)) return {turn, forward};

  std::vector<double> turns;
  for (int k = -6; k <= 6; ++k) turns.push_back(params.max_turn * k / 6.0);
  std::stable_sort(turns.begin(), turns.end(),
                   [&](double a, double b) { return std::abs(a - turn) < std::abs(b - turn); });
  for (double t : turns) {
    if (feasible(t, forward)) return {t, forward};
  }
  return {turn, 0.0};
}

}  // namespace emx
