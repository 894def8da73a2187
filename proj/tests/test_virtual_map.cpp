#include <catch_amalgamated.hpp>

#include "emx/errors.hpp"
#include "emx/virtual_map.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <random>
#include <sstream>

using namespace emx;
using Catch::Matchers::WithinAbs;

namespace {

Cov2 random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix2d a;
  a << u(rng), u(rng), u(rng), u(rng);
  return a * a.transpose() + 0.05 * Cov2::Identity();
}

double grid_scan_omega(const Cov2& a, const Cov2& b) {
  double best = 0.0;
  double best_t = ci_trace(a, b, 0.0);
  for (int i = 1; i <= 10000; ++i) {
    const double w = i * 1e-4;
    const double t = ci_trace(a, b, w);
    if (t < best_t) {
      best_t = t;
      best = w;
    }
  }
  return best;
}

VirtualMapSpec small_spec() { return VirtualMapSpec::covering(40.0, 30.0, 2.0, 7.5); }

}  // namespace

TEST_CASE("log-odds update") {
  CHECK_THAT(update_q(0.5, 0.7), WithinAbs(0.7, 1e-12));
  CHECK_THAT(update_q(0.7, 0.7), WithinAbs(49.0 / 58.0, 1e-12));
  CHECK_THAT(update_q(0.5, 0.5), WithinAbs(0.5, 1e-12));
  const double top = update_q(1.0, 0.8);
  CHECK(top < 1.0);
  CHECK(top > 0.99);
  CHECK(update_q(0.0, 0.8) > 0.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  for (int i = 0; i < 100; ++i) {
    const double a = p(rng);
    const double b = p(rng);
    const double q0 = p(rng);
    const double ab = update_q(update_q(q0, a), b);
    const double ba = update_q(update_q(q0, b), a);
    CHECK_THAT(ab, WithinAbs(ba, 1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    const double odds = q0 / (1 - q0) * a / (1 - a);
    CHECK_THAT(update_q(q0, a), WithinAbs(odds / (1 + odds), 1e-12));
  }
}

TEST_CASE("propagate_cell") {
  const Pose2 x{2, 3, 0.4};
  const Point2 c{6, 5};
  CHECK(propagate_cell(x, Cov3::Zero(), c).isZero(0.0));

  Cov3 s;
  s << 0.04, 0.01, 0.002, 0.01, 0.09, -0.003, 0.002, -0.003, 0.01;
  const Cov2 one = propagate_cell(x, s, c);
  const Cov2 two = propagate_cell(x, 2.0 * s, c);
  CHECK((two - 2.0 * one).norm() <= 1e-12);
  CHECK(is_symmetric_psd(one));
  CHECK_THROWS_AS(propagate_cell(x, s, x.position()), DegenerateGeometryError);

  // Unscented transform through the observation model with a small spread.
  const double sigma = 1e-3;
  const Cov3 iso = Eigen::Vector3d(sigma * sigma, sigma * sigma, 0.0).asDiagonal();
  const Pose2 p{0, 0, 0};
  const Point2 ahead{5, 0};
  const Eigen::Matrix3d l = Eigen::LLT<Eigen::Matrix3d>(iso + 1e-30 * Eigen::Matrix3d::Identity()).matrixL();
  auto g = [&](const Eigen::Vector3d& v) {
    const RangeBearing z = observe_landmark({v[0], v[1], v[2]}, ahead);
    return Eigen::Vector2d(z.range, z.bearing);
  };
  const double k = 3.0;
  std::vector<Eigen::Vector2d> ys;
  std::vector<double> ws;
  ys.push_back(g(p.vec()));
  ws.push_back(0.0);
  for (int i = 0; i < 3; ++i) {
    for (int sgn : {1, -1}) {
      ys.push_back(g(p.vec() + sgn * std::sqrt(k) * l.col(i)));
      ws.push_back(1.0 / (2.0 * k));
    }
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < ys.size(); ++i) mean += ws[i] * ys[i];
  mean += (1.0 - 3.0 / k) * ys[0];
  Cov2 ut = (1.0 - 3.0 / k) * (ys[0] - mean) * (ys[0] - mean).transpose();
  for (std::size_t i = 1; i < ys.size(); ++i) ut += ws[i] * (ys[i] - mean) * (ys[i] - mean).transpose();
  const Cov2 lin = propagate_cell(p, iso, ahead);
  CHECK((lin - ut).norm() <= 1e-4 * lin.norm());
}

TEST_CASE("covariance intersection") {
  const Cov2 a = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  const Cov2 b = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  const CovarianceIntersection ci = covariance_intersection_weighted(a, b);
  CHECK_THAT(ci.omega, WithinAbs(0.5, 1e-6));
  CHECK_THAT(ci.omega, WithinAbs(grid_scan_omega(a, b), 1e-3));
  const Cov2 expected = (0.5 * a.inverse() + 0.5 * b.inverse()).inverse();
  CHECK((ci.sigma - expected).norm() <= 1e-9);

  Cov2 m;
  m << 2.0, 0.3, 0.3, 1.0;
  CHECK((covariance_intersection(m, m) - m).norm() <= 1e-12);
  CHECK_THROWS_AS(covariance_intersection(m, Cov2::Zero()), SingularMatrixError);
  Cov2 singular;
  singular << 1.0, 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(covariance_intersection(singular, m), SingularMatrixError);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 300; ++i) {
    const Cov2 x = random_spd(rng);
    const Cov2 y = random_spd(rng);
    const CovarianceIntersection fast = covariance_intersection_weighted(x, y);
    const CovarianceIntersection golden = covariance_intersection_golden(x, y);
    CHECK_THAT(fast.omega, WithinAbs(golden.omega, 1e-3));
    CHECK_THAT(fast.omega, WithinAbs(grid_scan_omega(x, y), 1e-3));
    CHECK(fast.sigma.trace() <= golden.sigma.trace() + 1e-9);
    CHECK(fast.sigma.trace() <= std::min(x.trace(), y.trace()) + 1e-9);
    CHECK(is_symmetric_psd(fast.sigma));
    const Cov2 residual = fast.sigma.inverse() - fast.omega * x.inverse() - (1.0 - fast.omega) * y.inverse();
    CHECK(residual.norm() <= 1e-9 * std::max(1.0, x.inverse().norm() + y.inverse().norm()));
  }
}

TEST_CASE("rebuild marks exactly the cells within range") {
  const VirtualMapSpec spec = small_spec();
  const VirtualMap empty = rebuild(spec, std::vector<PoseBelief>{}, std::vector<LandmarkBelief>{});
  for (const auto& c : empty.cells()) {
    CHECK(c.q == 0.5);
    CHECK(c.observed_count == 0);
  }
  CHECK(explored_ratio(empty) == 0.0);

  const Pose2 x{20.0, 15.0, 0.3};
  const std::vector<PoseBelief> one{{0, x, std::nullopt}};
  const VirtualMap map = rebuild(spec, one, std::vector<LandmarkBelief>{});
  int marked = 0;
  for (int i = 0; i < map.size(); ++i) {
    const bool inside = distance(map.center(i), x.position()) <= 7.5;
    CHECK(map.observed(i) == inside);
    marked += inside ? 1 : 0;
  }
  CHECK_THAT(explored_ratio(map), WithinAbs(static_cast<double>(marked) / map.size(), 1e-15));

  // A pose outside the grid still marks the in-bounds part of its disc.
  const std::vector<PoseBelief> outside{{0, Pose2{-3.0, 15.0, 0.0}, std::nullopt}};
  const VirtualMap edge = rebuild(spec, outside, std::vector<LandmarkBelief>{});
  CHECK(edge.observed(edge.index(0, 7)));
  CHECK_FALSE(edge.observed(edge.index(5, 7)));
}

TEST_CASE("rebuild fusion, filtering and determinism") {
  const VirtualMapSpec spec = small_spec();
  Cov3 s;
  s << 0.2, 0.05, 0.01, 0.05, 0.1, 0.0, 0.01, 0.0, 0.02;
  const Pose2 x{20.0, 15.0, 0.3};
  const std::vector<PoseBelief> single{{0, x, s}};
  const std::vector<PoseBelief> twice{{0, x, s}, {0, x, s}};
  const VirtualMap a = rebuild(spec, single, std::vector<LandmarkBelief>{});
  const VirtualMap b = rebuild(spec, twice, std::vector<LandmarkBelief>{});
  for (int i = 0; i < a.size(); ++i) {
    if (a.cell(i).observed_count == 0) continue;
    CHECK((a.cell(i).sigma - b.cell(i).sigma).norm() <= 1e-12);
  }

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ux(0.0, 40.0);
  std::uniform_real_distribution<double> uy(0.0, 30.0);
  std::vector<PoseBelief> poses;
  for (int i = 0; i < 60; ++i) {
    Cov3 c = Cov3::Identity() * (0.01 + 0.001 * i);
    c(0, 1) = c(1, 0) = 0.002;
    poses.push_back({i % 3, Pose2{ux(rng), uy(rng), 0.1 * i}, c});
  }
  const std::vector<LandmarkBelief> lms{{0, {10.0, 10.0}, Cov2::Identity() * 0.01}, {1, {30.0, 20.0}, std::nullopt}};
  const VirtualMap m1 = rebuild(spec, poses, lms);
  const VirtualMap m2 = rebuild(spec, poses, lms);
  CHECK(m1 == m2);
  std::ostringstream s1;
  std::ostringstream s2;
  m1.write_snapshot(s1);
  m2.write_snapshot(s2);
  CHECK(s1.str() == s2.str());

  const VirtualMap local = rebuild(spec, poses, lms, std::set<int>{1});
  for (int i = 0; i < local.size(); ++i) {
    if (local.observed(i)) CHECK(m1.observed(i));
    CHECK(local.cell(i).q >= 0.0);
    CHECK(local.cell(i).q <= 1.0);
    if (m1.cell(i).observed_count > 0 && m1.cell(i).has_sigma) CHECK(is_symmetric_psd(m1.cell(i).sigma));
  }
  const auto lm_cell = *m1.cell_at({10.0, 10.0});
  CHECK(m1.observed(lm_cell));

  std::istringstream in(s1.str());
  const VirtualMap back = VirtualMap::read_snapshot(in);
  CHECK(back.width() == m1.width());
  for (int i = 0; i < m1.size(); ++i) {
    CHECK(back.cell(i).q == m1.cell(i).q);
    CHECK(back.cell(i).sigma == m1.cell(i).sigma);
  }
}

TEST_CASE("sum_uncertainty and explored_ratio") {
  VirtualMapSpec spec = VirtualMapSpec::covering(8.0, 8.0, 2.0, 7.5);
  VirtualMap map(spec);
  CHECK(sum_uncertainty(map) == 0.0);
  map.cell(5).observed_count = 1;
  map.cell(5).sigma = Eigen::Vector2d(2.0, 3.0).asDiagonal();
  CHECK(sum_uncertainty(map) == 5.0);
  CHECK(sum_uncertainty(map, [](int i, const VirtualLandmark&) { return i != 5; }) == 0.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double loop = 0.0;
  for (int i = 0; i < map.size(); ++i) {
    map.cell(i).observed_count = u(rng) < 0.5 ? 1 : 0;
    map.cell(i).sigma = Eigen::Vector2d(u(rng), u(rng)).asDiagonal();
    if (map.cell(i).observed_count > 0) loop += map.cell(i).sigma(0, 0) + map.cell(i).sigma(1, 1);
  }
  CHECK_THAT(sum_uncertainty(map), WithinAbs(loop, 1e-12));

  for (int i = 0; i < map.size(); ++i) map.cell(i).q = i < map.size() / 2 ? 0.9 : 0.1;
  CHECK(explored_ratio(map) == 0.5);
  for (int i = 0; i < map.size(); ++i) map.cell(i).q = 0.9;
  CHECK(explored_ratio(map) == 1.0);
}

TEST_CASE("virtual map suite runtime") {
  const auto t0 = std::chrono::steady_clock::now();
  const VirtualMapSpec spec = VirtualMapSpec::covering(100.0, 100.0, 2.0, 7.5);
  std::vector<PoseBelief> poses;
  for (int i = 0; i < 1500; ++i) {
    Cov3 c = Cov3::Identity() * (0.01 + 1e-4 * i);
    poses.push_back({i % 3, Pose2{5.0 + (i % 90), 5.0 + (i / 17) % 90, 0.01 * i}, c});
  }
  const VirtualMap m = rebuild(spec, poses, std::vector<LandmarkBelief>{});
  CHECK(explored_ratio(m) > 0.0);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
}
