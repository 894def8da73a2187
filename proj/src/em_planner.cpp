#include "emx/em_planner.hpp"

#include "emx/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace emx {

double PlannerWeights::effective_lambda1(double explored_ratio) const {
  if (lambda1_mode == Lambda1Mode::ExploredRatioScaled) return lambda1 * (1.0 - explored_ratio);
  return lambda1;
}

std::vector<Pose2> waypoints_along(std::span<const Point2> path, const Pose2& from, const Pose2& to, double spacing) {
  if (spacing <= 0.0) throw PlanningError("waypoint spacing must be positive");
  if (polyline_length(path) < 1e-9) {
    if (distance(from.position(), to.position()) < 1e-9) return {from};
    return {from, to};
  }
  return resample_path(path, spacing, from, to);
}

std::vector<Pose2> generate_virtual_waypoints(const Pose2& from, const Pose2& to, const ObstacleGrid& grid,
                                              double spacing) {
  const auto path = plan_path(grid, from.position(), to.position());
  if (!path) throw PlanningError("no obstacle-free path to the target");
  return waypoints_along(*path, from, to, spacing);
}

std::vector<Factor> virtual_observe(std::span<const LandmarkBelief> landmarks,
                                    std::span<const RobotWaypoints> plans, const NoiseSpec& noise,
                                    double step_length) {
  std::vector<Factor> out;
  const Cov3 odom = noise.odometry_covariance();
  const Cov2 rb = noise.range_bearing_covariance();
  const Cov3 rv = noise.rendezvous_covariance();
  const double range = noise.max_sensing_range;

  for (const auto& plan : plans) {
    const auto& w = plan.waypoints;
    for (std::size_t k = 1; k < w.size(); ++k) {
      const double len = distance(w[k - 1].position(), w[k].position());
      const double steps = std::max(1.0, std::ceil(len / step_length - 1e-9));
      out.push_back(OdometryFactor{VariableKey::pose(plan.robot, plan.first_time + static_cast<int>(k) - 1),
                                   VariableKey::pose(plan.robot, plan.first_time + static_cast<int>(k)),
                                   between(w[k - 1], w[k]), odom * steps});
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      for (const auto& lm : landmarks) {
        const double d = distance(w[k].position(), lm.position);
        if (d > range || d < 1e-9) continue;
        out.push_back(LandmarkFactor{VariableKey::pose(plan.robot, plan.first_time + static_cast<int>(k)),
                                     VariableKey::point(lm.id), observe_landmark(w[k], lm.position), rb});
      }
    }
  }

  for (std::size_t a = 0; a < plans.size(); ++a) {
    for (std::size_t b = a + 1; b < plans.size(); ++b) {
      const auto& pa = plans[a];
      const auto& pb = plans[b];
      const std::size_t n = std::min(pa.waypoints.size(), pb.waypoints.size());
      for (std::size_t k = 0; k < n; ++k) {
        if (distance(pa.waypoints[k].position(), pb.waypoints[k].position()) > range) continue;
        out.push_back(RendezvousFactor{VariableKey::pose(pa.robot, pa.first_time + static_cast<int>(k)),
                                       VariableKey::pose(pb.robot, pb.first_time + static_cast<int>(k)),
                                       between(pa.waypoints[k], pb.waypoints[k]), rv});
      }
    }
  }
  return out;
}

std::vector<PoseBelief> PropagationResult::pose_beliefs(int robot) const {
  std::vector<PoseBelief> out;
  for (const auto& [key, pose] : poses) {
    if (!key.is_pose() || key.robot != robot) continue;
    PoseBelief b{robot, pose, std::nullopt};
    if (auto it = pose_marginals.find(key); it != pose_marginals.end()) b.covariance = it->second;
    out.push_back(b);
  }
  return out;
}

std::vector<LandmarkBelief> PropagationResult::landmark_beliefs(std::span<const LandmarkBelief> base) const {
  std::vector<LandmarkBelief> out(base.begin(), base.end());
  for (auto& l : out) {
    if (auto it = landmark_marginals.find(VariableKey::point(l.id)); it != landmark_marginals.end()) {
      l.covariance = it->second;
    }
  }
  return out;
}

UncertaintyPropagator::UncertaintyPropagator(const FactorGraph& graph, PropagationMode mode, const NoiseSpec& noise,
                                             double step_length)
    : graph_(graph), mode_(mode), noise_(noise), step_length_(step_length) {
  if (mode_ != PropagationMode::ConditionalUpdate) return;
  marginals_ = std::make_unique<Marginals>(graph_);

  // Latest pose of every robot plus every landmark: the variables new factors attach to.
  std::map<int, VariableKey> latest;
  std::vector<VariableKey> frontier_keys;
  for (const auto& key : graph_.keys()) {
    if (key.is_pose()) {
      auto [it, inserted] = latest.emplace(key.robot, key);
      if (!inserted && it->second.time < key.time) it->second = key;
    } else {
      frontier_keys.push_back(key);
    }
  }
  for (const auto& [robot, key] : latest) frontier_keys.push_back(key);
  std::sort(frontier_keys.begin(), frontier_keys.end());
  int col = 0;
  for (const auto& key : frontier_keys) {
    cached_col_.emplace(key, col);
    col += key.dim();
  }
  cached_columns_ = marginals_->covariance_columns(frontier_keys);
}

const std::map<VariableKey, Eigen::MatrixXd>& UncertaintyPropagator::current_blocks() const {
  if (!blocks_) {
    if (marginals_) blocks_ = marginals_->block_diagonal();
    else blocks_ = Marginals(graph_).block_diagonal();
  }
  return *blocks_;
}

Eigen::MatrixXd UncertaintyPropagator::columns_for(std::span<const VariableKey> keys) const {
  int total = 0;
  for (const auto& k : keys) total += k.dim();
  Eigen::MatrixXd out(marginals_->dimension(), total);
  int col = 0;
  for (const auto& key : keys) {
    if (auto it = cached_col_.find(key); it != cached_col_.end()) {
      out.middleCols(col, key.dim()) = cached_columns_.middleCols(it->second, key.dim());
    } else {
      const VariableKey one[1] = {key};
      out.middleCols(col, key.dim()) = marginals_->covariance_columns(one);
    }
    col += key.dim();
  }
  return out;
}

PropagationResult UncertaintyPropagator::propagate(std::span<const RobotWaypoints> plans,
                                                   std::span<const LandmarkBelief> landmarks,
                                                   const std::set<int>& report_robots) const {
  std::map<VariableKey, Pose2> appended;
  for (const auto& plan : plans) {
    if (plan.waypoints.empty()) throw PlanningError("empty waypoint set");
    const auto start = VariableKey::pose(plan.robot, plan.first_time);
    if (!graph_.contains(start)) throw UnknownKeyError("plan starts at unknown state " + start.str());
    for (std::size_t k = 1; k < plan.waypoints.size(); ++k) {
      const auto key = VariableKey::pose(plan.robot, plan.first_time + static_cast<int>(k));
      if (graph_.contains(key)) throw DuplicateKeyError("planned state already in graph: " + key.str());
      appended.emplace(key, plan.waypoints[k]);
    }
  }

  std::vector<Factor> kept;
  for (const auto& f : virtual_observe(landmarks, plans, noise_, step_length_)) {
    bool touches_new = false;
    bool resolvable = true;
    for (const auto& key : factor_keys(f)) {
      if (appended.count(key)) touches_new = true;
      else if (!graph_.contains(key)) resolvable = false;
    }
    if (touches_new && resolvable) kept.push_back(f);
  }

  try {
    if (mode_ == PropagationMode::FullReoptimize) return propagate_full(kept, appended, report_robots);
    return propagate_update(kept, appended, report_robots);
  } catch (const SingularMatrixError&) {
    PropagationResult r;
    r.feasible = false;
    return r;
  }
}

PropagationResult UncertaintyPropagator::propagate_full(const std::vector<Factor>& factors,
                                                        const std::map<VariableKey, Pose2>& appended,
                                                        const std::set<int>& report_robots) const {
  FactorGraph clone = graph_;
  for (const auto& [key, pose] : appended) clone.add_variable(key, pose);
  for (const auto& f : factors) clone.add_factor(f);
  const GraphEstimate est = clone.optimize();

  PropagationResult r;
  if (!est.converged) {
    r.feasible = false;
    return r;
  }
  const auto blocks = Marginals(clone).block_diagonal();
  for (const auto& [key, cov] : blocks) {
    if (key.is_pose()) {
      if (!appended.count(key) && !report_robots.count(key.robot)) continue;
      r.poses.emplace(key, est.pose(key));
      r.pose_marginals.emplace(key, cov);
    } else {
      r.landmark_marginals.emplace(key, cov);
    }
  }
  for (const auto& [key, pose] : appended) r.appended.insert(key);
  return r;
}

PropagationResult UncertaintyPropagator::propagate_update(const std::vector<Factor>& factors,
                                                          const std::map<VariableKey, Pose2>& appended,
                                                          const std::set<int>& report_robots) const {
  PropagationResult r;
  const auto& base = current_blocks();
  for (const auto& [key, pose] : appended) r.appended.insert(key);

  std::set<VariableKey> old_set;
  for (const auto& f : factors) {
    for (const auto& key : factor_keys(f)) {
      if (!appended.count(key)) old_set.insert(key);
    }
  }
  const std::vector<VariableKey> old_keys(old_set.begin(), old_set.end());

  // Hessian of the new factors alone, over the touched old variables (S) and the new ones (F).
  FactorGraph local;
  for (const auto& key : old_keys) local.add_variable(key, graph_.value(key));
  for (const auto& [key, pose] : appended) local.add_variable(key, pose);
  for (const auto& f : factors) local.add_factor(f);
  const Eigen::MatrixXd h = Eigen::MatrixXd(local.linearize().information);

  std::vector<int> s_idx;
  std::vector<int> f_idx;
  for (const auto& key : old_keys) {
    for (int d = 0; d < key.dim(); ++d) s_idx.push_back(local.offset(key) + d);
  }
  for (const auto& [key, pose] : appended) {
    for (int d = 0; d < 3; ++d) f_idx.push_back(local.offset(key) + d);
  }
  const int ns = static_cast<int>(s_idx.size());
  const int nf = static_cast<int>(f_idx.size());
  const Eigen::MatrixXd a = h(s_idx, s_idx);
  const Eigen::MatrixXd b = h(s_idx, f_idx);
  const Eigen::MatrixXd c = h(f_idx, f_idx);

  Eigen::MatrixXd g = ns > 0 ? columns_for(old_keys) : Eigen::MatrixXd(marginals_->dimension(), 0);
  std::vector<int> s_rows;
  for (const auto& key : old_keys) {
    for (int d = 0; d < key.dim(); ++d) s_rows.push_back(marginals_->offset(key) + d);
  }
  Eigen::MatrixXd sigma_ss = g(s_rows, Eigen::all);
  sigma_ss = 0.5 * (sigma_ss + sigma_ss.transpose()).eval();

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(ns, ns);
  if (nf > 0) {
    const Eigen::LDLT<Eigen::MatrixXd> c_ldlt(c);
    if (c_ldlt.info() != Eigen::Success || !c_ldlt.isPositive()) throw SingularMatrixError("singular future block");
    const Eigen::MatrixXd u = a - b * c_ldlt.solve(b.transpose());
    const Eigen::MatrixXd eye_s = Eigen::MatrixXd::Identity(ns, ns);
    if (ns > 0) {
      // W = U (I + Sigma_SS U)^-1, so that Sigma' = Sigma - G W G^T.
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu((eye_s + sigma_ss * u).transpose());
      w = lu.solve(u.transpose()).transpose();
    }

    const Eigen::MatrixXd m =
        ns > 0 ? Eigen::MatrixXd(Eigen::PartialPivLU<Eigen::MatrixXd>(eye_s + sigma_ss * a).solve(sigma_ss))
               : Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd info_f = c;
    if (ns > 0) info_f -= b.transpose() * m * b;
    info_f = 0.5 * (info_f + info_f.transpose()).eval();
    const Eigen::LLT<Eigen::MatrixXd> llt(info_f);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("future information not positive definite");
    const Eigen::MatrixXd cov_f = llt.solve(Eigen::MatrixXd::Identity(nf, nf));
    int off = 0;
    for (const auto& [key, pose] : appended) {
      r.poses.emplace(key, pose);
      r.pose_marginals.emplace(key, cov_f.block<3, 3>(off, off));
      off += 3;
    }
  }

  auto updated = [&](const VariableKey& key, const Eigen::MatrixXd& prior) -> Eigen::MatrixXd {
    if (ns == 0) return prior;
    const Eigen::MatrixXd gk = g.middleRows(marginals_->offset(key), key.dim());
    Eigen::MatrixXd out = prior - gk * w * gk.transpose();
    return 0.5 * (out + out.transpose());
  };
  for (const auto& [key, cov] : base) {
    if (key.is_pose()) {
      if (!report_robots.count(key.robot)) continue;
      r.poses.emplace(key, graph_.pose(key));
      r.pose_marginals.emplace(key, updated(key, cov));
    } else {
      r.landmark_marginals.emplace(key, updated(key, cov));
    }
  }
  return r;
}

double compute_u_m(const VirtualMap& inter_map, const VirtualMap& local_map) {
  if (!inter_map.spec().same_grid(local_map.spec())) throw Error("virtual maps are on different grids");
  double total = 0.0;
  for (int i = 0; i < local_map.size(); ++i) {
    if (!inter_map.observed(i) || !local_map.observed(i)) continue;
    total += local_map.cell(i).sigma.trace();
  }
  return total;
}

double compute_u_t(Point2 candidate, std::span<const Point2> other_targets, double d_max) {
  double total = 0.0;
  for (const auto& a : other_targets) {
    const double d = distance(candidate, a);
    if (d < d_max) total += 1.0 - d / d_max;
  }
  return total;
}

std::size_t select_target(std::span<const CandidateEvaluation> evaluations) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < evaluations.size(); ++i) {
    const auto& e = evaluations[i];
    if (!e.feasible) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& cur = evaluations[*best];
    if (e.utility < cur.utility || (e.utility == cur.utility && e.u_d < cur.u_d)) best = i;
  }
  if (!best) throw PlanningError("no feasible candidate");
  return *best;
}

const RobotState& PlanningContext::self_state() const {
  for (const auto& r : robots) {
    if (r.id == self) return r;
  }
  throw PlanningError("deciding robot missing from context");
}

std::vector<Point2> PlanningContext::other_targets() const {
  std::vector<Point2> out;
  for (const auto& t : target_history) {
    if (t.robot != self) out.push_back(t.target.position());
  }
  return out;
}

double PlanningContext::explored_ratio() const { return ::emx::explored_ratio(*inter_map); }

std::vector<CandidatePlan> plan_candidates(const PlanningContext& ctx, std::span<const Frontier> frontiers) {
  const Pose2 from = ctx.self_state().estimate;
  std::vector<CandidatePlan> out;
  out.reserve(frontiers.size());
  for (const auto& f : frontiers) {
    CandidatePlan c;
    c.frontier = f;
    c.euclidean = distance(from.position(), f.target.position());
    if (auto path = plan_path(*ctx.grid, from.position(), f.target.position())) {
      c.path = std::move(*path);
      c.reachable = true;
      c.path_length = polyline_length(c.path);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RobotWaypoints> neighbor_predictions(const PlanningContext& ctx, double spacing) {
  std::vector<RobotWaypoints> out;
  for (const auto& r : ctx.robots) {
    if (r.id == ctx.self) continue;
    RobotWaypoints w{r.id, r.current_key.time, {r.estimate}};
    if (r.target) {
      try {
        w.waypoints = generate_virtual_waypoints(r.estimate, *r.target, *ctx.grid, spacing);
      } catch (const PlanningError&) {
        w.waypoints = {r.estimate};
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

EmPlanner::EmPlanner(PlannerWeights weights, PlanningParams params, std::string name)
    : weights_(weights), params_(params), name_(std::move(name)) {}

std::optional<VirtualMap> EmPlanner::predicted_local_map(const PlanningContext& ctx, const CandidatePlan& plan,
                                                         std::span<const RobotWaypoints> neighbors) const {
  if (!plan.reachable) return std::nullopt;
  const RobotState& me = ctx.self_state();
  std::vector<RobotWaypoints> plans(neighbors.begin(), neighbors.end());
  plans.push_back({me.id, me.current_key.time,
                   waypoints_along(plan.path, me.estimate, plan.frontier.target, params_.waypoint_spacing)});

  const auto result = ctx.propagator->propagate(plans, ctx.landmarks, {me.id});
  if (!result.feasible) return std::nullopt;
  const auto poses = result.pose_beliefs(me.id);
  const auto landmarks = result.landmark_beliefs(ctx.landmarks);
  return rebuild(ctx.inter_map->spec(), poses, landmarks, std::set<int>{me.id});
}

std::vector<CandidateEvaluation> EmPlanner::evaluate(const PlanningContext& ctx,
                                                     std::span<const CandidatePlan> candidates) const {
  if (!ctx.propagator) throw PlanningError("EM planner requires an uncertainty propagator");
  const auto neighbors = neighbor_predictions(ctx, params_.waypoint_spacing);
  const auto others = ctx.other_targets();
  const double lambda1 = weights_.effective_lambda1(ctx.explored_ratio());

  std::vector<CandidateEvaluation> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    CandidateEvaluation e;
    e.frontier = c.frontier;
    e.u_d = c.distance(params_.distance_mode);
    e.u_t = compute_u_t(c.frontier.target.position(), others, params_.d_max);
    if (auto local = predicted_local_map(ctx, c, neighbors)) {
      e.u_m = compute_u_m(*ctx.inter_map, *local);
      e.feasible = true;
    }
    e.utility = weights_.lambda0 * e.u_m + lambda1 * e.u_t + weights_.lambda2 * e.u_d;
    if (!e.feasible) e.utility = std::numeric_limits<double>::infinity();
    out.push_back(e);
  }
  return out;
}

Decision decide(const Planner& planner, const PlanningContext& ctx, std::span<const Frontier> frontiers) {
  Decision d;
  const auto candidates = plan_candidates(ctx, frontiers);
  d.evaluations = planner.evaluate(ctx, candidates);
  const bool any = std::any_of(d.evaluations.begin(), d.evaluations.end(),
                               [](const CandidateEvaluation& e) { return e.feasible; });
  if (!any) return d;
  d.selected = select_target(d.evaluations);
  d.path = candidates[*d.selected].path;
  return d;
}

}  // namespace emx
