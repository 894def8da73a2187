#include "emx/simulation.hpp"

#include "emx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace emx {

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::Running: return "running";
    case TrialStatus::Explored: return "explored";
    case TrialStatus::AllDone: return "all_done";
    case TrialStatus::StepBudget: return "step_budget";
    case TrialStatus::Failed: return "failed";
  }
  return "unknown";
}

std::optional<double> TrialRecord::distance_to_explore(double ratio) const {
  for (const auto& s : steps) {
    if (s.explored >= ratio) return s.distance;
  }
  return std::nullopt;
}

double localization_rmse(const TrialRecord& record) {
  if (record.poses.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : record.poses) {
    const double d = distance(p.truth.position(), p.estimate.position());
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(record.poses.size()));
}

double landmark_rmse(const TrialRecord& record) {
  double sum = 0.0;
  int n = 0;
  for (const auto& l : record.landmarks) {
    if (!l.estimate) continue;
    const double d = distance(l.truth, *l.estimate);
    sum += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sum / n);
}

Simulation::Simulation(const TrialConfig& config)
    : Simulation(config, generate_environment(config.environment, config.seed)) {}

Simulation::Simulation(const TrialConfig& config, Environment environment)
    : config_(config), noise_(config.effective_noise()), env_(std::move(environment)) {
  config_.validate();
  if (static_cast<int>(env_.starts.size()) < 1) throw ConfigError("environment has no robot starts");
  spec_ = VirtualMapSpec::covering(env_.width, env_.height, config_.cell_size, noise_.max_sensing_range);
  planner_ = make_planner(config_);
  const int n = static_cast<int>(env_.starts.size());
  for (int i = 0; i < n; ++i) {
    RobotSim r;
    r.id = i;
    r.true_pose = env_.starts[i];
    r.rng = Rng(derive_seed(config_.seed, 100 + static_cast<std::uint64_t>(i)));
    robots_.push_back(r);
  }
  agents_.resize(n);
  truth_history_.resize(n);
  record_.planner = planner_->name();
  record_.seed = config_.seed;
  initialize();
}

Pose2 Simulation::estimate(int robot) const { return graph_.pose(current_key(robot)); }

void Simulation::initialize() {
  const Cov3 prior = Cov3::Identity() * 1e-6;
  for (const auto& r : robots_) {
    graph_.add_variable(VariableKey::pose(r.id, 0), r.true_pose);
    graph_.add_factor(PriorPoseFactor{VariableKey::pose(r.id, 0), r.true_pose, prior});
    truth_history_[r.id].push_back(r.true_pose);
  }
  sense_all();
  optimize();
  explored_ = current_explored();
  record_step();
  decide_pending();
}

void Simulation::sense_all() {
  last_rendezvous_.clear();
  const Cov2 rb = noise_.range_bearing_covariance();
  const Cov3 rv = noise_.rendezvous_covariance();
  for (auto& robot : robots_) {
    const Measurements m = sense(robot, env_, robots_, noise_);
    const VariableKey xk = current_key(robot.id);
    for (const auto& z : m.landmarks) {
      const VariableKey lk = VariableKey::point(z.landmark);
      if (!graph_.contains(lk)) graph_.add_variable(lk, landmark_from_observation(graph_.pose(xk), z.measured));
      graph_.add_factor(LandmarkFactor{xk, lk, z.measured, rb});
    }
    for (const auto& z : m.robots) {
      if (z.robot <= robot.id) continue;
      graph_.add_factor(RendezvousFactor{xk, current_key(z.robot), z.measured, rv});
      last_rendezvous_.emplace_back(robot.id, z.robot);
    }
  }
}

void Simulation::optimize() { graph_.optimize(); }

double Simulation::current_explored() const {
  std::vector<PoseBelief> poses;
  std::vector<LandmarkBelief> landmarks;
  for (const auto& key : graph_.keys()) {
    if (key.is_pose()) poses.push_back({key.robot, graph_.pose(key), std::nullopt});
    else landmarks.push_back({key.landmark, graph_.point(key), std::nullopt});
  }
  return explored_ratio(rebuild(spec_, poses, landmarks));
}

void Simulation::record_step() {
  StepRecord s;
  s.step = time_;
  s.explored = explored_;
  double sum = 0.0;
  int n = 0;
  for (const auto& r : robots_) {
    s.distance += r.distance;
    s.truth.push_back(r.true_pose);
    s.estimate.push_back(estimate(r.id));
    for (int t = 0; t <= time_; ++t) {
      const double d = distance(truth_history_[r.id][t].position(), graph_.pose(VariableKey::pose(r.id, t)).position());
      sum += d * d;
      ++n;
    }
  }
  s.localization_rmse = n ? std::sqrt(sum / n) : 0.0;
  double lsum = 0.0;
  int ln = 0;
  for (const auto& l : env_.landmarks) {
    const auto key = VariableKey::point(l.id);
    if (!graph_.contains(key)) continue;
    const double d = distance(l.position, graph_.point(key));
    lsum += d * d;
    ++ln;
  }
  s.landmark_rmse = ln ? std::sqrt(lsum / ln) : 0.0;
  record_.steps.push_back(std::move(s));
}

void Simulation::step() {
  if (finished()) return;
  cache_.reset();
  const Cov3 odom_cov = noise_.odometry_covariance();
  const double arrive = config_.arrival_radius();
  for (auto& robot : robots_) {
    RobotAgent& a = agents_[robot.id];
    const Pose2 est = estimate(robot.id);
    Action action;
    if (!a.done && a.target && !a.path.empty()) {
      while (a.path_index + 1 < a.path.size() &&
             distance(est.position(), a.path[a.path_index]) < std::max(arrive, config_.apf.speed)) {
        ++a.path_index;
      }
      action = apf_step(est, robot.true_pose, a.path[a.path_index], env_, config_.apf);
    }
    const Pose2 odom = step_robot(robot, action, noise_, config_.apf.max_turn);
    const VariableKey from = VariableKey::pose(robot.id, time_);
    const VariableKey to = VariableKey::pose(robot.id, time_ + 1);
    graph_.add_variable(to, compose(est, odom));
    graph_.add_factor(OdometryFactor{from, to, odom, odom_cov});
    truth_history_[robot.id].push_back(robot.true_pose);
  }
  ++time_;
  sense_all();
  optimize();
  explored_ = current_explored();
  record_step();

  if (explored_ >= config_.explored_target) {
    status_ = TrialStatus::Explored;
    return;
  }
  decide_pending();
  const bool all_done = std::all_of(agents_.begin(), agents_.end(), [](const RobotAgent& a) { return a.done; });
  if (all_done) status_ = TrialStatus::AllDone;
  else if (time_ >= config_.max_steps) status_ = TrialStatus::StepBudget;
}

void Simulation::decide_pending() {
  const double arrive = config_.arrival_radius();
  for (const auto& robot : robots_) {
    RobotAgent& a = agents_[robot.id];
    if (a.done) continue;
    bool need = !a.target.has_value();
    if (a.target) {
      const double d = distance(estimate(robot.id).position(), a.target->position());
      if (d <= arrive) {
        need = true;
      } else if (d < a.best_distance - 0.1) {
        a.best_distance = d;
        a.steps_without_progress = 0;
      } else if (++a.steps_without_progress >= config_.stall_steps) {
        a.blacklist.push_back(a.target->position());
        need = true;
      }
    }
    if (need) decision_cycle(robot.id);
  }
}

Simulation::TickCache& Simulation::cache() {
  if (cache_) return *cache_;
  cache_.emplace();
  TickCache& c = *cache_;
  std::map<VariableKey, Eigen::MatrixXd> blocks;
  if (planner_->needs_propagator()) {
    c.propagator = std::make_unique<UncertaintyPropagator>(graph_, config_.propagation, noise_, config_.apf.speed);
    blocks = c.propagator->current_blocks();
  }
  c.inter_map = rebuild(spec_, graph_.snapshot(), blocks);

  const double inflation = config_.environment.landmark_radius + config_.apf.robot_radius + config_.obstacle_margin;
  std::vector<Disc> discs;
  for (const auto& key : graph_.keys()) {
    if (key.is_pose()) continue;
    LandmarkBelief b{key.landmark, graph_.point(key), std::nullopt};
    if (auto it = blocks.find(key); it != blocks.end()) b.covariance = Cov2(it->second);
    c.landmarks.push_back(b);
    discs.push_back({b.position, inflation});
  }
  c.grid.emplace(spec_, discs);
  return c;
}

void Simulation::decision_cycle(int robot) {
  TickCache& c = cache();
  RobotAgent& a = agents_[robot];
  const Pose2 est = estimate(robot);

  std::vector<NeighborTarget> neighbors;
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (static_cast<int>(i) == robot || agents_[i].done || !agents_[i].target) continue;
    neighbors.push_back({static_cast<int>(i), *agents_[i].target});
  }
  FrontierOptions fopts = config_.frontiers;
  fopts.obstacle_radius = config_.environment.landmark_radius + config_.apf.robot_radius + config_.obstacle_margin;
  auto frontiers = generate_frontiers(*c.inter_map, est, c.landmarks, neighbors, fopts);
  // A revisiting or rendezvous leg is always followed by an exploring one.
  const bool explore_only = a.target_kind && *a.target_kind != FrontierKind::Exploring;
  std::erase_if(frontiers, [&](const Frontier& f) {
    if (explore_only && f.kind != FrontierKind::Exploring) return true;
    if (distance(f.target.position(), est.position()) < config_.cell_size) return true;
    return std::any_of(a.blacklist.begin(), a.blacklist.end(), [&](Point2 b) {
      return distance(b, f.target.position()) < 2.0 * config_.cell_size;
    });
  });
  const bool exploring_left = std::any_of(frontiers.begin(), frontiers.end(),
                                          [](const Frontier& f) { return f.kind == FrontierKind::Exploring; });
  if (!exploring_left) {
    a.done = true;
    a.target.reset();
    a.path.clear();
    return;
  }

  PlanningContext ctx;
  ctx.graph = &graph_;
  ctx.inter_map = &*c.inter_map;
  ctx.grid = &*c.grid;
  ctx.propagator = c.propagator.get();
  ctx.landmarks = c.landmarks;
  ctx.target_history = shared_.target_history;
  ctx.self = robot;
  for (const auto& r : robots_) {
    const RobotAgent& ra = agents_[r.id];
    ctx.robots.push_back({r.id, current_key(r.id), estimate(r.id), ra.done ? std::nullopt : ra.target});
  }

  Decision d = decide(*planner_, ctx, frontiers);
  record_.decisions.push_back({time_, robot, d.evaluations, d.selected});
  if (!d.selected) {
    a.done = true;
    a.target.reset();
    a.path.clear();
    return;
  }
  const Frontier& chosen = d.evaluations[*d.selected].frontier;
  a.target = chosen.target;
  a.target_kind = chosen.kind;
  a.path = std::move(d.path);
  a.path_index = a.path.size() > 1 ? 1 : 0;
  a.best_distance = std::numeric_limits<double>::infinity();
  a.steps_without_progress = 0;
  shared_.target_history.push_back({robot, chosen.target});
}

TrialRecord Simulation::finish() {
  record_.status = status_;
  record_.poses.clear();
  for (const auto& r : robots_) {
    for (int t = 0; t <= time_; ++t) {
      const auto key = VariableKey::pose(r.id, t);
      if (!graph_.contains(key)) break;
      record_.poses.push_back({r.id, t, truth_history_[r.id][t], graph_.pose(key)});
    }
  }
  record_.landmarks.clear();
  for (const auto& l : env_.landmarks) {
    LandmarkRecord lr{l.id, l.position, std::nullopt};
    if (graph_.contains(VariableKey::point(l.id))) lr.estimate = graph_.point(VariableKey::point(l.id));
    record_.landmarks.push_back(lr);
  }
  return record_;
}

TrialRecord Simulation::run() {
  while (!finished()) step();
  return finish();
}

TrialRecord run_trial(const TrialConfig& config) {
  std::unique_ptr<Simulation> sim;
  try {
    sim = std::make_unique<Simulation>(config);
    return sim->run();
  } catch (const std::exception& e) {
    TrialRecord r;
    if (sim) {
      r = sim->finish();
    } else {
      r.planner = std::string(to_string(config.planner));
      r.seed = config.seed;
    }
    r.status = TrialStatus::Failed;
    r.error = e.what();
    return r;
  }
}

}  // namespace emx
