#include "emx/factor_graph.hpp"

#include "emx/errors.hpp"
#include "emx/marginals.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace emx {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Whitened linearization of one factor (at most two variables, residual dim <= 3).
struct FactorLinearization {
  int residual_dim = 0;
  int num_vars = 0;
  Eigen::Vector3d error = Eigen::Vector3d::Zero();
  std::array<Eigen::Matrix3d, 2> jacobians{Eigen::Matrix3d::Zero(), Eigen::Matrix3d::Zero()};
};

Eigen::Matrix3d sqrt_information(const Eigen::MatrixXd& cov) {
  if (!is_symmetric_psd(cov)) throw SingularMatrixError("factor covariance must be symmetric PSD");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("factor covariance must be invertible");
  // R^T R = cov^-1 with R = L^-1.
  Eigen::MatrixXd r = llt.matrixL().solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  Eigen::Matrix3d out = Eigen::Matrix3d::Zero();
  out.topLeftCorner(cov.rows(), cov.cols()) = r;
  return out;
}

Eigen::Vector3d between_error(const Pose2& a, const Pose2& b, const Pose2& z) {
  const Pose2 h = between(a, b);
  return {h.x - z.x, h.y - z.y, wrap_angle(h.theta - z.theta)};
}

std::string fmt_cov(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = r; c < m.cols(); ++c) os << ' ' << m(r, c);
  return os.str();
}

}  // namespace

std::string VariableKey::str() const {
  if (is_pose()) return "x" + std::to_string(robot) + "_" + std::to_string(time);
  return "l" + std::to_string(landmark);
}

std::vector<VariableKey> factor_keys(const Factor& factor) {
  return std::visit(Overloaded{
                        [](const PriorPoseFactor& f) { return std::vector<VariableKey>{f.key}; },
                        [](const PriorPointFactor& f) { return std::vector<VariableKey>{f.key}; },
                        [](const OdometryFactor& f) { return std::vector<VariableKey>{f.from, f.to}; },
                        [](const RendezvousFactor& f) { return std::vector<VariableKey>{f.from, f.to}; },
                        [](const LandmarkFactor& f) { return std::vector<VariableKey>{f.pose, f.landmark}; },
                    },
                    factor);
}

bool is_prior(const Factor& factor) {
  return std::holds_alternative<PriorPoseFactor>(factor) || std::holds_alternative<PriorPointFactor>(factor);
}

Pose2 GraphEstimate::pose(const VariableKey& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw UnknownKeyError("no estimate for " + key.str());
  return std::get<Pose2>(it->second);
}

Point2 GraphEstimate::point(const VariableKey& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw UnknownKeyError("no estimate for " + key.str());
  return std::get<Point2>(it->second);
}

void FactorGraph::add_variable(const VariableKey& key, const Value& initial) {
  if (contains(key)) throw DuplicateKeyError("variable already present: " + key.str());
  if (key.is_pose() != std::holds_alternative<Pose2>(initial)) {
    throw Error("value type does not match key kind for " + key.str());
  }
  index_.emplace(key, static_cast<int>(values_.size()));
  values_.push_back({key, initial});
  layout_dirty_ = true;
}

void FactorGraph::add_factor(const Factor& factor) {
  Eigen::Matrix3d r = std::visit(
      [](const auto& f) -> Eigen::Matrix3d { return sqrt_information(f.covariance); }, factor);
  factors_.push_back(factor);
  sqrt_info_.push_back(r);
  layout_dirty_ = true;
}

int FactorGraph::dimension() const {
  refresh_layout();
  return dimension_;
}

const Value& FactorGraph::value(const VariableKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw UnknownKeyError("unknown variable " + key.str());
  return values_[it->second].value;
}

Pose2 FactorGraph::pose(const VariableKey& key) const { return std::get<Pose2>(value(key)); }
Point2 FactorGraph::point(const VariableKey& key) const { return std::get<Point2>(value(key)); }

void FactorGraph::set_value(const VariableKey& key, const Value& v) {
  auto it = index_.find(key);
  if (it == index_.end()) throw UnknownKeyError("unknown variable " + key.str());
  if (key.is_pose() != std::holds_alternative<Pose2>(v)) throw Error("value type mismatch for " + key.str());
  values_[it->second].value = v;
}

std::vector<VariableKey> FactorGraph::keys() const {
  std::vector<VariableKey> out;
  out.reserve(index_.size());
  for (const auto& [key, slot] : index_) out.push_back(key);
  return out;
}

int FactorGraph::offset(const VariableKey& key) const {
  refresh_layout();
  auto it = index_.find(key);
  if (it == index_.end()) throw UnknownKeyError("unknown variable " + key.str());
  return offsets_[it->second];
}

void FactorGraph::check_factor_keys() const {
  for (const auto& f : factors_) {
    for (const auto& key : factor_keys(f)) {
      if (!contains(key)) throw UnknownKeyError("factor references unknown variable " + key.str());
    }
  }
}

void FactorGraph::refresh_layout() const {
  if (!layout_dirty_) return;
  check_factor_keys();
  offsets_.assign(values_.size(), 0);
  int off = 0;
  for (const auto& [key, slot] : index_) {
    offsets_[slot] = off;
    off += key.dim();
  }
  dimension_ = off;
  factor_slots_.resize(factors_.size());
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto keys = factor_keys(factors_[i]);
    factor_slots_[i] = {index_.at(keys[0]), keys.size() > 1 ? index_.at(keys[1]) : -1};
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(factors_.size() * 36 + values_.size() * 9);
  auto add_block = [&](int slot_a, int slot_b) {
    const int oa = offsets_[slot_a];
    const int ob = offsets_[slot_b];
    for (int r = 0; r < values_[slot_a].key.dim(); ++r)
      for (int c = 0; c < values_[slot_b].key.dim(); ++c) triplets.emplace_back(oa + r, ob + c, 0.0);
  };
  for (std::size_t v = 0; v < values_.size(); ++v) add_block(static_cast<int>(v), static_cast<int>(v));
  for (const auto& s : factor_slots_) {
    if (s[1] < 0) continue;
    add_block(s[0], s[1]);
    add_block(s[1], s[0]);
  }
  pattern_.resize(dimension_, dimension_);
  pattern_.setFromTriplets(triplets.begin(), triplets.end());
  pattern_.makeCompressed();

  const int* outer = pattern_.outerIndexPtr();
  const int* inner = pattern_.innerIndexPtr();
  auto locate = [&](int row, int col) {
    const int* first = inner + outer[col];
    const int* last = inner + outer[col + 1];
    return static_cast<int>(std::lower_bound(first, last, row) - inner);
  };
  fill_index_.assign(factors_.size(), {});
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& s = factor_slots_[i];
    const int nv = s[1] >= 0 ? 2 : 1;
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b)
        for (int c = 0; c < values_[s[b]].key.dim(); ++c)
          fill_index_[i][(a * 2 + b) * 3 + c] = locate(offsets_[s[a]], offsets_[s[b]] + c);
  }
  layout_dirty_ = false;
}

namespace {

using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;

FactorLinearization linearize_factor(const Factor& factor, const Value* v0, const Value* v1, bool with_jacobians) {
  FactorLinearization lin;
  std::visit(
      Overloaded{
          [&](const PriorPoseFactor& f) {
            const auto& x = std::get<Pose2>(*v0);
            lin.residual_dim = 3;
            lin.num_vars = 1;
            lin.error = {x.x - f.measured.x, x.y - f.measured.y, wrap_angle(x.theta - f.measured.theta)};
            if (with_jacobians) lin.jacobians[0] = Eigen::Matrix3d::Identity();
          },
          [&](const PriorPointFactor& f) {
            const auto& p = std::get<Point2>(*v0);
            lin.residual_dim = 2;
            lin.num_vars = 1;
            lin.error.head<2>() << p.x - f.measured.x, p.y - f.measured.y;
            if (with_jacobians) lin.jacobians[0].topLeftCorner<2, 2>().setIdentity();
          },
          [&](const auto& f) requires(std::is_same_v<std::decay_t<decltype(f)>, OdometryFactor> ||
                                      std::is_same_v<std::decay_t<decltype(f)>, RendezvousFactor>) {
            const auto& a = std::get<Pose2>(*v0);
            const auto& b = std::get<Pose2>(*v1);
            lin.residual_dim = 3;
            lin.num_vars = 2;
            lin.error = between_error(a, b, f.measured);
            if (with_jacobians) {
              const auto j = jacobian_between(a, b);
              lin.jacobians[0] = j.wrt_a;
              lin.jacobians[1] = j.wrt_b;
            }
          },
          [&](const LandmarkFactor& f) {
            const auto& x = std::get<Pose2>(*v0);
            const auto& l = std::get<Point2>(*v1);
            const RangeBearing z = observe_landmark(x, l);
            lin.residual_dim = 2;
            lin.num_vars = 2;
            lin.error.head<2>() << z.range - f.measured.range, wrap_angle(z.bearing - f.measured.bearing);
            if (with_jacobians) {
              lin.jacobians[0].topLeftCorner<2, 3>() = jacobian_observe_wrt_pose(x, l);
              lin.jacobians[1].topLeftCorner<2, 2>() = jacobian_observe_wrt_landmark(x, l);
            }
          },
      },
      factor);
  return lin;
}

}  // namespace

double FactorGraph::cost_at(const std::vector<Slot>& values) const {
  refresh_layout();
  double cost = 0.0;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& slots = factor_slots_[i];
    const Value* v1 = slots[1] >= 0 ? &values[slots[1]].value : nullptr;
    const auto lin = linearize_factor(factors_[i], &values[slots[0]].value, v1, false);
    const int d = lin.residual_dim;
    SmallVec e;
    e.noalias() = sqrt_info_[i].topLeftCorner(d, d) * lin.error.head(d);
    cost += 0.5 * e.squaredNorm();
  }
  return cost;
}

double FactorGraph::cost() const { return cost_at(values_); }

LinearSystem FactorGraph::linearize() const { return linearize_at(values_); }

LinearSystem FactorGraph::linearize_at(const std::vector<Slot>& values) const {
  refresh_layout();
  const int n = dimension_;
  LinearSystem sys;
  sys.gradient = Eigen::VectorXd::Zero(n);
  sys.information = pattern_;
  double* vals = sys.information.valuePtr();
  std::fill(vals, vals + sys.information.nonZeros(), 0.0);

  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& slots = factor_slots_[i];
    const Value* v1 = slots[1] >= 0 ? &values[slots[1]].value : nullptr;
    auto lin = linearize_factor(factors_[i], &values[slots[0]].value, v1, true);
    const int d = lin.residual_dim;
    const auto r = sqrt_info_[i].topLeftCorner(d, d);
    SmallVec e;
    e.noalias() = r * lin.error.head(d);
    sys.cost += 0.5 * e.squaredNorm();

    std::array<SmallMat, 2> jw;
    std::array<int, 2> dims{0, 0};
    for (int k = 0; k < lin.num_vars; ++k) {
      const int slot = slots[k];
      dims[k] = values[slot].key.dim();
      jw[k].noalias() = r * lin.jacobians[k].topLeftCorner(d, dims[k]);
      sys.gradient.segment(offsets_[slot], dims[k]).noalias() += jw[k].transpose() * e;
    }
    const auto& fill = fill_index_[i];
    for (int a = 0; a < lin.num_vars; ++a) {
      for (int b = 0; b < lin.num_vars; ++b) {
        SmallMat block;
        block.noalias() = jw[a].transpose() * jw[b];
        for (int cc = 0; cc < dims[b]; ++cc) {
          double* col = vals + fill[(a * 2 + b) * 3 + cc];
          for (int rr = 0; rr < dims[a]; ++rr) col[rr] += block(rr, cc);
        }
      }
    }
  }
  return sys;
}

void FactorGraph::check_gauge() const {
  refresh_layout();
  std::vector<int> parent(values_.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  std::vector<char> anchored(values_.size(), 0);
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const auto& s = factor_slots_[i];
    if (s[1] >= 0) parent[find(s[0])] = find(s[1]);
  }
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    if (is_prior(factors_[i])) anchored[find(factor_slots_[i][0])] = 1;
  }
  for (std::size_t v = 0; v < values_.size(); ++v) {
    if (!anchored[find(static_cast<int>(v))]) {
      throw GaugeError("variable " + values_[v].key.str() + " belongs to a component without a prior");
    }
  }
}

GraphEstimate FactorGraph::optimize(const OptimizerOptions& options) {
  check_gauge();
  GraphEstimate est;
  const int n = dimension_;

  double cost = cost_at(values_);
  est.initial_cost = cost;
  double lambda = options.initial_lambda;
  bool converged = false;
  int iter = 0;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> solver;
  bool analyzed = false;

  for (; iter < options.max_iterations && !converged; ++iter) {
    if (cost <= 1e-30) {
      converged = true;
      break;
    }
    LinearSystem sys = linearize_at(values_);
    if (sys.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    if (!analyzed) {
      solver.analyzePattern(sys.information);
      analyzed = true;
    }
    const Eigen::VectorXd diag = sys.information.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (!accepted) {
      if (lambda > options.max_lambda) break;
      Eigen::SparseMatrix<double> damped = sys.information;
      for (int k = 0; k < n; ++k) damped.coeffRef(k, k) += lambda * diag[k];
      solver.factorize(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= options.lambda_factor;
        continue;
      }
      const Eigen::VectorXd dx = -solver.solve(sys.gradient);
      if (!dx.allFinite()) {
        lambda *= options.lambda_factor;
        continue;
      }
      if (dx.norm() < options.step_tolerance) {
        converged = true;
        break;
      }
      std::vector<Slot> trial = values_;
      for (std::size_t s = 0; s < trial.size(); ++s) {
        const int o = offsets_[s];
        std::visit(Overloaded{
                       [&](Pose2& p) { p = Pose2(p.x + dx[o], p.y + dx[o + 1], p.theta + dx[o + 2]); },
                       [&](Point2& p) { p = Point2{p.x + dx[o], p.y + dx[o + 1]}; },
                   },
                   trial[s].value);
      }
      const double new_cost = cost_at(trial);
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        values_ = std::move(trial);
        cost = new_cost;
        lambda = std::max(lambda / options.lambda_factor, 1e-12);
        accepted = true;
        if (rel < options.relative_cost_tolerance) converged = true;
      } else {
        if (new_cost - cost <= options.relative_cost_tolerance * std::max(cost, 1e-300)) {
          converged = true;
          break;
        }
        lambda *= options.lambda_factor;
      }
    }
    if (!accepted && !converged) break;  // damping exhausted without progress
  }

  est.values.clear();
  for (const auto& slot : values_) est.values.emplace(slot.key, slot.value);
  est.final_cost = cost;
  est.iterations = iter;
  est.converged = converged;
  return est;
}

GraphEstimate FactorGraph::snapshot() const {
  GraphEstimate est;
  for (const auto& slot : values_) est.values.emplace(slot.key, slot.value);
  est.initial_cost = est.final_cost = cost();
  est.converged = true;
  return est;
}

void FactorGraph::write_dump(std::ostream& out) const {
  out << "# emx factor graph dump v1\n"
      << "# VAR <key> <x> <y> [<theta>]\n"
      << "# FACTOR <type> <keys...> <measured...> <upper-triangular covariance...>\n";
  out << std::setprecision(17);
  for (const auto& [key, slot] : index_) {
    out << "VAR " << key.str();
    std::visit(Overloaded{
                   [&](const Pose2& p) { out << ' ' << p.x << ' ' << p.y << ' ' << p.theta; },
                   [&](const Point2& p) { out << ' ' << p.x << ' ' << p.y; },
               },
               values_[slot].value);
    out << '\n';
  }
  for (const auto& f : factors_) {
    std::visit(Overloaded{
                   [&](const PriorPoseFactor& x) {
                     out << "FACTOR PriorPose " << x.key.str() << ' ' << x.measured.x << ' ' << x.measured.y
                         << ' ' << x.measured.theta << fmt_cov(x.covariance);
                   },
                   [&](const PriorPointFactor& x) {
                     out << "FACTOR PriorPoint " << x.key.str() << ' ' << x.measured.x << ' ' << x.measured.y
                         << fmt_cov(x.covariance);
                   },
                   [&](const OdometryFactor& x) {
                     out << "FACTOR Odometry " << x.from.str() << ' ' << x.to.str() << ' ' << x.measured.x << ' '
                         << x.measured.y << ' ' << x.measured.theta << fmt_cov(x.covariance);
                   },
                   [&](const RendezvousFactor& x) {
                     out << "FACTOR Rendezvous " << x.from.str() << ' ' << x.to.str() << ' ' << x.measured.x
                         << ' ' << x.measured.y << ' ' << x.measured.theta << fmt_cov(x.covariance);
                   },
                   [&](const LandmarkFactor& x) {
                     out << "FACTOR RangeBearing " << x.pose.str() << ' ' << x.landmark.str() << ' '
                         << x.measured.range << ' ' << x.measured.bearing << fmt_cov(x.covariance);
                   },
               },
               f);
    out << '\n';
  }
}

Eigen::MatrixXd marginal_covariance(const FactorGraph& graph, const VariableKey& key) {
  return Marginals(graph).covariance(key);
}

}  // namespace emx
