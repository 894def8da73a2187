#pragma once

#include "emx/em_planner.hpp"

#include <Eigen/Core>

#include <span>
#include <string>

namespace emx {

/// Principal square root of a symmetric PSD matrix (negative eigenvalues clamped to zero).
Eigen::MatrixXd principal_sqrt(const Eigen::MatrixXd& m);

/// Coverage-exploration utility lambda0*D + lambda1*U_T.
double ce_utility(double distance, double u_t, double lambda0, double lambda1);

/// Belief-space-planning utility lambda0*D + lambda1*sum(trace(sqrtm(cov))).
double bsp_utility(double distance, std::span<const Cov3> future_covariances, double lambda0, double lambda1);

/// Distance plus task allocation, no uncertainty term. Only exploring
/// frontiers are admissible.
class CePlanner : public Planner {
 public:
  CePlanner(PlanningParams params, double lambda0 = 1.0, double lambda1 = 10.0);
  std::string name() const override { return "ce"; }
  std::vector<CandidateEvaluation> evaluate(const PlanningContext& ctx,
                                            std::span<const CandidatePlan> candidates) const override;

 private:
  PlanningParams params_;
  double lambda0_;
  double lambda1_;
};

/// Distance plus the summed uncertainty of the predicted future poses.
/// Prediction runs on a small graph anchored at the robots' current marginals
/// with landmarks held fixed.
class BspPlanner : public Planner {
 public:
  BspPlanner(PlanningParams params, double lambda0 = 5.0, double lambda1 = 1.0);
  std::string name() const override { return "bsp"; }
  bool needs_propagator() const override { return true; }
  std::vector<CandidateEvaluation> evaluate(const PlanningContext& ctx,
                                            std::span<const CandidatePlan> candidates) const override;

  /// Marginal covariances of the deciding robot's future poses along `plan`.
  std::optional<std::vector<Cov3>> predict_future(const PlanningContext& ctx, const CandidatePlan& plan,
                                                  std::span<const RobotWaypoints> neighbors) const;

 private:
  PlanningParams params_;
  double lambda0_;
  double lambda1_;
};

}  // namespace emx
