#include "emx/virtual_map.hpp"

#include "emx/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <istream>
#include <ostream>
#include <string>

namespace emx {

namespace {

constexpr double kProbClamp = 1e-6;

double logit(double p) { return std::log(p / (1.0 - p)); }

bool positive_definite(const Cov2& m) { return m(0, 0) > 0.0 && m.determinant() > 0.0; }

Cov2 inverse2(const Cov2& m) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  Cov2 inv;
  inv << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
  return inv;
}

// a <= b in the Loewner order.
bool dominated_by(const Cov2& a, const Cov2& b) {
  const Cov2 d = b - a;
  return d(0, 0) >= 0.0 && d(1, 1) >= 0.0 && d(0, 0) * d(1, 1) - d(0, 1) * d(1, 0) >= 0.0;
}

double trace_of_inverse(const Cov2& info) {
  const double det = info(0, 0) * info(1, 1) - info(0, 1) * info(1, 0);
  return (info(0, 0) + info(1, 1)) / det;
}

// Fusion used while rebuilding: degenerate (zero) covariances dominate.
Cov2 fuse(const Cov2& a, const Cov2& b) {
  if (!positive_definite(a) || !positive_definite(b)) return a.trace() <= b.trace() ? a : b;
  return covariance_intersection(a, b);
}

void apply_sigma(VirtualLandmark& cell, const Cov2& sigma) {
  if (!cell.has_sigma) {
    cell.sigma = sigma;
    cell.has_sigma = true;
  } else {
    cell.sigma = fuse(cell.sigma, sigma);
  }
}

}  // namespace

VirtualMapSpec VirtualMapSpec::covering(double width_m, double height_m, double cell, double sensing_range) {
  if (!(cell > 0.0)) throw ConfigError("cell size must be positive");
  VirtualMapSpec spec;
  spec.cell_size = cell;
  spec.width = static_cast<int>(std::ceil(width_m / cell - 1e-9));
  spec.height = static_cast<int>(std::ceil(height_m / cell - 1e-9));
  spec.max_sensing_range = sensing_range;
  return spec;
}

bool VirtualMapSpec::same_grid(const VirtualMapSpec& other) const {
  return origin == other.origin && cell_size == other.cell_size && width == other.width &&
         height == other.height;
}

VirtualMap::VirtualMap(const VirtualMapSpec& spec) : spec_(spec) {
  if (spec.width <= 0 || spec.height <= 0) throw ConfigError("virtual map must have at least one cell");
  cells_.resize(static_cast<std::size_t>(spec.width) * spec.height);
  for (int iy = 0; iy < spec.height; ++iy) {
    for (int ix = 0; ix < spec.width; ++ix) {
      auto& c = cells_[index(ix, iy)];
      c.center = {spec.origin.x + (ix + 0.5) * spec.cell_size, spec.origin.y + (iy + 0.5) * spec.cell_size};
      c.q = spec.q_prior;
    }
  }
}

std::optional<int> VirtualMap::cell_at(Point2 p) const {
  const int cx = static_cast<int>(std::floor((p.x - spec_.origin.x) / spec_.cell_size));
  const int cy = static_cast<int>(std::floor((p.y - spec_.origin.y) / spec_.cell_size));
  if (!in_bounds(cx, cy)) return std::nullopt;
  return index(cx, cy);
}

bool VirtualMap::on_border(int idx) const {
  const int x = ix(idx);
  const int y = iy(idx);
  return x == 0 || y == 0 || x == spec_.width - 1 || y == spec_.height - 1;
}

void VirtualMap::write_snapshot(std::ostream& out) const {
  out << "# emx virtual map v1\n";
  out << std::setprecision(17);
  out << "origin " << spec_.origin.x << ' ' << spec_.origin.y << '\n';
  out << "cell_size " << spec_.cell_size << '\n';
  out << "dims " << spec_.width << ' ' << spec_.height << '\n';
  out << "q_min " << spec_.q_min << '\n';
  for (const auto& c : cells_) {
    out << c.q << ' ' << c.sigma(0, 0) << ' ' << c.sigma(0, 1) << ' ' << c.sigma(1, 1) << '\n';
  }
}

VirtualMap VirtualMap::read_snapshot(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line.rfind("# emx virtual map", 0) != 0) throw Error("not a virtual map snapshot");
  VirtualMapSpec spec;
  std::string tag;
  in >> tag >> spec.origin.x >> spec.origin.y;
  in >> tag >> spec.cell_size;
  in >> tag >> spec.width >> spec.height;
  in >> tag >> spec.q_min;
  if (!in) throw Error("malformed virtual map header");
  VirtualMap map(spec);
  for (auto& c : map.cells_) {
    double sxx, sxy, syy;
    in >> c.q >> sxx >> sxy >> syy;
    if (!in) throw Error("truncated virtual map snapshot");
    c.sigma << sxx, sxy, sxy, syy;
    c.has_sigma = c.sigma.trace() > 0.0;
    c.observed_count = c.q > spec.q_prior ? 1 : 0;
  }
  return map;
}

bool operator==(const VirtualMap& a, const VirtualMap& b) {
  if (!a.spec_.same_grid(b.spec_)) return false;
  for (std::size_t i = 0; i < a.cells_.size(); ++i) {
    const auto& x = a.cells_[i];
    const auto& y = b.cells_[i];
    if (x.q != y.q || x.observed_count != y.observed_count || x.has_sigma != y.has_sigma || x.sigma != y.sigma)
      return false;
  }
  return true;
}

double update_q(double q_old, double p_hit) {
  const double q = std::clamp(q_old, kProbClamp, 1.0 - kProbClamp);
  const double p = std::clamp(p_hit, kProbClamp, 1.0 - kProbClamp);
  const double l = logit(q) + logit(p);
  return 1.0 / (1.0 + std::exp(-l));
}

Cov2 propagate_cell(const Pose2& pose, const Cov3& pose_cov, Point2 cell_center) {
  const Matrix23 h = jacobian_observe_wrt_pose(pose, cell_center);
  Cov2 out = h * pose_cov * h.transpose();
  return 0.5 * (out + out.transpose());
}

double ci_trace(const Cov2& a, const Cov2& b, double omega) {
  const Cov2 info = omega * inverse2(a) + (1.0 - omega) * inverse2(b);
  return trace_of_inverse(info);
}

namespace {

CovarianceIntersection fused_at(const Cov2& ai, const Cov2& bi, double omega) {
  CovarianceIntersection out;
  out.omega = omega;
  out.sigma = inverse2(omega * ai + (1.0 - omega) * bi);
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
  return out;
}

std::optional<CovarianceIntersection> trivial_ci(const Cov2& a, const Cov2& b) {
  if (!positive_definite(a) || !positive_definite(b)) {
    throw SingularMatrixError("covariance intersection needs positive definite inputs");
  }
  // One input inside the other: the trace is monotone in omega.
  if (dominated_by(a, b)) return CovarianceIntersection{0.5 * (a + a.transpose()), 1.0};
  if (dominated_by(b, a)) return CovarianceIntersection{0.5 * (b + b.transpose()), 0.0};
  return std::nullopt;
}

}  // namespace

CovarianceIntersection covariance_intersection_weighted(const Cov2& a, const Cov2& b) {
  if (auto t = trivial_ci(a, b)) return *t;
  const Cov2 ai = inverse2(a);
  const Cov2 bi = inverse2(b);
  const Cov2 diff = ai - bi;
  const double det_a = ai.determinant();
  const double det_b = bi.determinant();
  const double q0 = det_b;
  const double q2 = diff.determinant();
  const double q1 = det_a - det_b - q2;
  const double t0 = bi.trace();
  const double t1 = ai.trace() - t0;
  auto f = [&](double w) { return (t0 + t1 * w) / (q0 + w * (q1 + w * q2)); };

  // d/dw [t/q] = 0  <=>  -t1 q2 w^2 - 2 t0 q2 w + (t1 q0 - t0 q1) = 0
  const double c2 = -t1 * q2;
  const double c1 = -2.0 * t0 * q2;
  const double c0 = t1 * q0 - t0 * q1;
  double best = 1.0;
  double best_f = f(1.0);
  auto consider = [&](double w) {
    if (!(w >= 0.0 && w <= 1.0)) return;
    const double v = f(w);
    if (v < best_f) {
      best_f = v;
      best = w;
    }
  };
  consider(0.0);
  const double scale = std::max({std::abs(c2), std::abs(c1), std::abs(c0)});
  if (std::abs(c2) <= 1e-14 * scale) {
    if (c1 != 0.0) consider(-c0 / c1);
  } else {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      // Numerically stable pair of roots.
      const double qq = -0.5 * (c1 + std::copysign(sq, c1));
      if (qq != 0.0) {
        consider(qq / c2);
        consider(c0 / qq);
      } else {
        consider(0.0);
      }
    }
  }
  return fused_at(ai, bi, best);
}

CovarianceIntersection covariance_intersection_golden(const Cov2& a, const Cov2& b) {
  if (auto t = trivial_ci(a, b)) return *t;
  const Cov2 ai = inverse2(a);
  const Cov2 bi = inverse2(b);
  auto f = [&](double w) { return trace_of_inverse(w * ai + (1.0 - w) * bi); };

  constexpr double inv_phi = 0.6180339887498949;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > 1e-6) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  double omega = 0.5 * (lo + hi);
  // The optimum may sit on an endpoint (one input dominates).
  if (f(0.0) <= f(omega)) omega = 0.0;
  if (f(1.0) <= f(omega)) omega = 1.0;
  return fused_at(ai, bi, omega);
}

Cov2 covariance_intersection(const Cov2& a, const Cov2& b) { return covariance_intersection_weighted(a, b).sigma; }

VirtualMap rebuild(const VirtualMapSpec& spec, std::span<const PoseBelief> poses,
                   std::span<const LandmarkBelief> landmarks, const std::optional<std::set<int>>& robot_filter) {
  VirtualMap map(spec);
  const double range = spec.max_sensing_range;
  const double range2 = range * range;
  const double c = spec.cell_size;

  for (const auto& belief : poses) {
    if (robot_filter && !robot_filter->count(belief.robot)) continue;
    const Pose2& x = belief.pose;
    const int ix0 = std::max(0, static_cast<int>(std::floor((x.x - range - spec.origin.x) / c)));
    const int ix1 = std::min(spec.width - 1, static_cast<int>(std::floor((x.x + range - spec.origin.x) / c)));
    const int iy0 = std::max(0, static_cast<int>(std::floor((x.y - range - spec.origin.y) / c)));
    const int iy1 = std::min(spec.height - 1, static_cast<int>(std::floor((x.y + range - spec.origin.y) / c)));
    for (int iy = iy0; iy <= iy1; ++iy) {
      for (int ix = ix0; ix <= ix1; ++ix) {
        auto& cell = map.cell(map.index(ix, iy));
        const double dx = cell.center.x - x.x;
        const double dy = cell.center.y - x.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > range2) continue;
        ++cell.observed_count;
        if (belief.covariance && d2 > 0.0) apply_sigma(cell, propagate_cell(x, *belief.covariance, cell.center));
      }
    }
  }

  for (const auto& lm : landmarks) {
    const auto idx = map.cell_at(lm.position);
    if (!idx) continue;
    auto& cell = map.cell(*idx);
    ++cell.observed_count;
    if (lm.covariance) apply_sigma(cell, *lm.covariance);
  }

  // Hits are exchangeable in log-odds, so each cell's q follows from its count.
  std::vector<double> q_after;
  for (auto& cell : map.cells_mut()) {
    const int n = cell.observed_count;
    if (n == 0) continue;
    if (static_cast<int>(q_after.size()) <= n) {
      if (q_after.empty()) q_after.push_back(spec.q_prior);
      while (static_cast<int>(q_after.size()) <= n) q_after.push_back(update_q(q_after.back(), spec.p_hit));
    }
    cell.q = q_after[n];
  }
  return map;
}

VirtualMap rebuild(const VirtualMapSpec& spec, const GraphEstimate& estimate,
                   const std::map<VariableKey, Eigen::MatrixXd>& marginals,
                   const std::optional<std::set<int>>& robot_filter) {
  std::vector<PoseBelief> poses;
  std::vector<LandmarkBelief> landmarks;
  for (const auto& [key, value] : estimate.values) {
    auto it = marginals.find(key);
    if (key.is_pose()) {
      PoseBelief b{key.robot, std::get<Pose2>(value), std::nullopt};
      if (it != marginals.end()) b.covariance = Cov3(it->second);
      poses.push_back(b);
    } else {
      LandmarkBelief b{key.landmark, std::get<Point2>(value), std::nullopt};
      if (it != marginals.end()) b.covariance = Cov2(it->second);
      landmarks.push_back(b);
    }
  }
  return rebuild(spec, poses, landmarks, robot_filter);
}

double sum_uncertainty(const VirtualMap& map, const CellMask& mask) {
  double total = 0.0;
  for (int i = 0; i < map.size(); ++i) {
    const auto& cell = map.cell(i);
    if (cell.observed_count == 0) continue;
    if (mask && !mask(i, cell)) continue;
    total += cell.sigma.trace();
  }
  return total;
}

double explored_ratio(const VirtualMap& map) {
  int count = 0;
  for (int i = 0; i < map.size(); ++i) count += map.observed(i) ? 1 : 0;
  return static_cast<double>(count) / map.size();
}

}  // namespace emx
