#include "emx/baseline_planners.hpp"

#include "emx/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <set>

namespace emx {

Eigen::MatrixXd principal_sqrt(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw SingularMatrixError("eigendecomposition failed");
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

double ce_utility(double distance, double u_t, double lambda0, double lambda1) {
  return lambda0 * distance + lambda1 * u_t;
}

double bsp_utility(double distance, std::span<const Cov3> future_covariances, double lambda0, double lambda1) {
  double u = 0.0;
  for (const auto& c : future_covariances) u += principal_sqrt(c).trace();
  return lambda0 * distance + lambda1 * u;
}

CePlanner::CePlanner(PlanningParams params, double lambda0, double lambda1)
    : params_(params), lambda0_(lambda0), lambda1_(lambda1) {}

std::vector<CandidateEvaluation> CePlanner::evaluate(const PlanningContext& ctx,
                                                     std::span<const CandidatePlan> candidates) const {
  const auto others = ctx.other_targets();
  std::vector<CandidateEvaluation> out;
  for (const auto& c : candidates) {
    CandidateEvaluation e;
    e.frontier = c.frontier;
    e.u_d = c.distance(params_.distance_mode);
    e.u_t = compute_u_t(c.frontier.target.position(), others, params_.d_max);
    // Coordinated exploration values frontier cells only; a target inside
    // the explored region carries no information gain.
    e.feasible = c.reachable && c.frontier.kind == FrontierKind::Exploring;
    e.utility = e.feasible ? ce_utility(e.u_d, e.u_t, lambda0_, lambda1_) : std::numeric_limits<double>::infinity();
    out.push_back(e);
  }
  return out;
}

BspPlanner::BspPlanner(PlanningParams params, double lambda0, double lambda1)
    : params_(params), lambda0_(lambda0), lambda1_(lambda1) {}

std::optional<std::vector<Cov3>> BspPlanner::predict_future(const PlanningContext& ctx, const CandidatePlan& plan,
                                                            std::span<const RobotWaypoints> neighbors) const {
  if (!plan.reachable) return std::nullopt;
  const RobotState& me = ctx.self_state();
  std::vector<RobotWaypoints> plans(neighbors.begin(), neighbors.end());
  plans.push_back({me.id, me.current_key.time,
                   waypoints_along(plan.path, me.estimate, plan.frontier.target, params_.waypoint_spacing)});

  const auto& current = ctx.propagator->current_blocks();
  FactorGraph g;
  std::set<VariableKey> existing;
  for (const auto& p : plans) {
    const auto key = VariableKey::pose(p.robot, p.first_time);
    const auto it = current.find(key);
    if (it == current.end()) throw UnknownKeyError("no marginal for " + key.str());
    g.add_variable(key, p.waypoints.front());
    g.add_factor(PriorPoseFactor{key, p.waypoints.front(), it->second});
    existing.insert(key);
  }
  for (const auto& lm : ctx.landmarks) {
    const auto key = VariableKey::point(lm.id);
    g.add_variable(key, lm.position);
    g.add_factor(PriorPointFactor{key, lm.position, Cov2::Identity() * 1e-8});
    existing.insert(key);
  }
  std::vector<VariableKey> future;
  for (const auto& p : plans) {
    for (std::size_t k = 1; k < p.waypoints.size(); ++k) {
      const auto key = VariableKey::pose(p.robot, p.first_time + static_cast<int>(k));
      g.add_variable(key, p.waypoints[k]);
      if (p.robot == me.id) future.push_back(key);
    }
  }
  for (const auto& f : virtual_observe(ctx.landmarks, plans, params_.noise, params_.step_length)) {
    const auto keys = factor_keys(f);
    const bool only_existing =
        std::all_of(keys.begin(), keys.end(), [&](const VariableKey& k) { return existing.count(k) != 0; });
    if (!only_existing) g.add_factor(f);
  }

  try {
    const Marginals m(g);
    std::vector<Cov3> out;
    for (const auto& key : future) out.push_back(m.pose_covariance(key));
    return out;
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  }
}

std::vector<CandidateEvaluation> BspPlanner::evaluate(const PlanningContext& ctx,
                                                      std::span<const CandidatePlan> candidates) const {
  if (!ctx.propagator) throw PlanningError("BSP planner requires current marginals");
  const auto neighbors = neighbor_predictions(ctx, params_.waypoint_spacing);
  std::vector<CandidateEvaluation> out;
  for (const auto& c : candidates) {
    CandidateEvaluation e;
    e.frontier = c.frontier;
    e.u_d = c.distance(params_.distance_mode);
    e.utility = std::numeric_limits<double>::infinity();
    if (auto future = predict_future(ctx, c, neighbors)) {
      e.feasible = true;
      e.u_m = bsp_utility(0.0, *future, 0.0, 1.0);
      e.utility = bsp_utility(e.u_d, *future, lambda0_, lambda1_);
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace emx
