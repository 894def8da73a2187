#include <catch_amalgamated.hpp>

#include "emx/errors.hpp"
#include "emx/factor_graph.hpp"
#include "emx/marginals.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <map>
#include <random>
#include <sstream>

using namespace emx;
using Catch::Matchers::WithinAbs;

#include "oracles.hpp"

using namespace emx::testing;


TEST_CASE("variables are registered once") {
  FactorGraph g;
  g.add_variable(VariableKey::pose(0, 0), Pose2{1, 2, 0.5});
  CHECK(g.pose(VariableKey::pose(0, 0)) == Pose2{1, 2, 0.5});
  CHECK_THROWS_AS(g.add_variable(VariableKey::pose(0, 0), Pose2{}), DuplicateKeyError);
  CHECK_THROWS_AS(g.add_variable(VariableKey::point(0), Pose2{}), Error);
  CHECK_THROWS_AS(g.pose(VariableKey::pose(1, 0)), UnknownKeyError);

  FactorGraph big;
  for (int i = 0; i < 1000; ++i) big.add_variable(VariableKey::pose(i % 3, i), Pose2{});
  CHECK(big.num_variables() == 1000);
  CHECK(big.dimension() == 3000);
}

TEST_CASE("key ordering puts poses by robot and time before landmarks") {
  CHECK(VariableKey::pose(0, 5) < VariableKey::pose(1, 0));
  CHECK(VariableKey::pose(2, 9) < VariableKey::point(0));
  CHECK(VariableKey::point(1) < VariableKey::point(2));
  CHECK(VariableKey::pose(1, 3).str() == "x1_3");
  CHECK(VariableKey::point(4).str() == "l4");
}

TEST_CASE("prior-only and chain graphs") {
  FactorGraph g;
  const Pose2 p{3, -1, 0.7};
  g.add_variable(VariableKey::pose(0, 0), Pose2{0, 0, 0});
  g.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), p, Cov3::Identity() * 0.01});
  const GraphEstimate e = g.optimize();
  CHECK_THAT(e.pose(VariableKey::pose(0, 0)).x, WithinAbs(3.0, 1e-6));
  CHECK_THAT(e.pose(VariableKey::pose(0, 0)).theta, WithinAbs(0.7, 1e-6));
  CHECK_THAT(e.final_cost, WithinAbs(0.0, 1e-12));
  CHECK(e.converged);

  FactorGraph c;
  c.add_variable(VariableKey::pose(0, 0), Pose2{});
  c.add_variable(VariableKey::pose(0, 1), Pose2{0.3, -0.2, 0.1});
  c.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), Pose2{}, Cov3::Identity() * 1e-4});
  c.add_factor(OdometryFactor{VariableKey::pose(0, 0), VariableKey::pose(0, 1), Pose2{1, 0, 0}, Cov3::Identity() * 1e-2});
  c.optimize();
  const Pose2 x1 = c.pose(VariableKey::pose(0, 1));
  CHECK_THAT(x1.x, WithinAbs(1.0, 1e-6));
  CHECK_THAT(x1.y, WithinAbs(0.0, 1e-6));
  CHECK_THAT(x1.theta, WithinAbs(0.0, 1e-6));
}

TEST_CASE("structural errors") {
  FactorGraph g;
  g.add_variable(VariableKey::pose(0, 0), Pose2{});
  g.add_variable(VariableKey::pose(0, 1), Pose2{});
  g.add_factor(OdometryFactor{VariableKey::pose(0, 0), VariableKey::pose(0, 1), Pose2{1, 0, 0}, Cov3::Identity()});
  CHECK_THROWS_AS(g.optimize(), GaugeError);

  g.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), Pose2{}, Cov3::Identity()});
  g.add_variable(VariableKey::pose(1, 0), Pose2{});
  CHECK_THROWS_AS(g.optimize(), GaugeError);

  FactorGraph h;
  h.add_variable(VariableKey::pose(0, 0), Pose2{});
  h.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), Pose2{}, Cov3::Identity()});
  h.add_factor(LandmarkFactor{VariableKey::pose(0, 0), VariableKey::point(3), {1, 0}, Cov2::Identity()});
  CHECK_THROWS_AS(h.optimize(), UnknownKeyError);
}

TEST_CASE("noise-free graphs recover ground truth and match the dense solution") {
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Scenario sc = make_scenario(5, 3, 0.0, seed, true);
    const DenseOracle oracle(sc.graph);
    const Eigen::VectorXd dense = oracle.solve(sc.graph, oracle.state(sc.graph));
    const GraphEstimate e = sc.graph.optimize();
    CHECK(e.final_cost <= e.initial_cost);
    CHECK(e.values.size() == sc.graph.num_variables());
    for (const auto& [key, truth] : sc.truth) {
      if (key.is_pose()) {
        const Pose2 est = e.pose(key);
        const Pose2 t = std::get<Pose2>(truth);
        CHECK_THAT(est.x, WithinAbs(t.x, 1e-6));
        CHECK_THAT(est.y, WithinAbs(t.y, 1e-6));
        CHECK_THAT(wrap_angle(est.theta - t.theta), WithinAbs(0.0, 1e-6));
        const Pose2 d = oracle.pose(dense, key);
        CHECK_THAT(est.x, WithinAbs(d.x, 1e-6));
        CHECK_THAT(est.y, WithinAbs(d.y, 1e-6));
        CHECK_THAT(wrap_angle(est.theta - d.theta), WithinAbs(0.0, 1e-6));
      } else {
        const Point2 est = e.point(key);
        const Point2 t = std::get<Point2>(truth);
        CHECK_THAT(est.x, WithinAbs(t.x, 1e-6));
        CHECK_THAT(est.y, WithinAbs(t.y, 1e-6));
      }
    }
  }
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
}

TEST_CASE("noisy graphs reach the dense least-squares optimum") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Scenario sc = make_scenario(8, 4, 1.0, seed, true);
    const DenseOracle oracle(sc.graph);
    const Eigen::VectorXd dense = oracle.solve(sc.graph, oracle.state(sc.graph));
    const GraphEstimate e = sc.graph.optimize();
    CHECK(e.final_cost <= e.initial_cost);
    const Eigen::VectorXd s = oracle.state(sc.graph);
    for (int k = 0; k < s.size(); ++k) {
      CHECK_THAT(std::remainder(s[k] - dense[k], 2.0 * std::numbers::pi), WithinAbs(0.0, 1e-6));
    }
  }
}

TEST_CASE("marginals match the dense inverse on graphs up to 30 variables") {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    const int poses = 6 + static_cast<int>(seed % 4) * 5;
    Scenario sc = make_scenario(poses, 30 - poses > 6 ? 6 : 30 - poses, 1.0, seed, false);
    REQUIRE(sc.graph.num_variables() <= 30);
    sc.graph.optimize();
    const DenseOracle oracle(sc.graph);
    const Eigen::MatrixXd dense = oracle.covariance(sc.graph);
    const Marginals m(sc.graph);
    const auto blocks = m.block_diagonal();
    for (const auto& key : sc.graph.keys()) {
      const int o = oracle.offset.at(key);
      const Eigen::MatrixXd ref = dense.block(o, o, key.dim(), key.dim());
      const double scale = std::max(1e-12, ref.norm());
      CHECK((m.covariance(key) - ref).norm() / scale <= 1e-6);
      CHECK((blocks.at(key) - ref).norm() / scale <= 1e-6);
      CHECK(is_symmetric_psd(blocks.at(key)));
    }
    const std::vector<VariableKey> pick{VariableKey::pose(0, 2), VariableKey::point(1)};
    const Eigen::MatrixXd cols = m.covariance_columns(pick);
    for (const auto& row_key : sc.graph.keys()) {
      int c = 0;
      for (const auto& col_key : pick) {
        const Eigen::MatrixXd ref =
            dense.block(oracle.offset.at(row_key), oracle.offset.at(col_key), row_key.dim(), col_key.dim());
        const Eigen::MatrixXd got = cols.block(m.offset(row_key), c, row_key.dim(), col_key.dim());
        CHECK((got - ref).norm() <= 1e-6 * std::max(1e-12, dense.norm()));
        c += col_key.dim();
      }
    }
  }
}

TEST_CASE("single-prior marginal equals the prior covariance") {
  FactorGraph g;
  Cov3 s;
  s << 0.5, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.2;
  g.add_variable(VariableKey::pose(0, 0), Pose2{1, 1, 0});
  g.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), Pose2{1, 1, 0}, s});
  CHECK((marginal_covariance(g, VariableKey::pose(0, 0)) - s).norm() <= 1e-9);
  CHECK_THROWS_AS(marginal_covariance(g, VariableKey::pose(0, 1)), UnknownKeyError);
}

TEST_CASE("odometry chain marginals grow with every step") {
  FactorGraph g;
  g.add_variable(VariableKey::pose(0, 0), Pose2{});
  g.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), Pose2{}, Cov3::Identity() * 1e-4});
  Pose2 x;
  for (int k = 1; k <= 10; ++k) {
    x = compose(x, Pose2{1, 0, 0.1});
    g.add_variable(VariableKey::pose(0, k), x);
    g.add_factor(OdometryFactor{VariableKey::pose(0, k - 1), VariableKey::pose(0, k), Pose2{1, 0, 0.1},
                                Cov3::Identity() * 1e-3});
  }
  g.optimize();
  const Marginals m(g);
  double prev = 0.0;
  for (int k = 0; k <= 10; ++k) {
    const double t = m.pose_covariance(VariableKey::pose(0, k)).topLeftCorner<2, 2>().trace();
    CHECK(t > prev);
    prev = t;
  }
}

TEST_CASE("adding a factor never increases a marginal trace") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> pick_pose(0, 7);
  std::uniform_int_distribution<int> pick_lm(0, 3);
  Scenario sc = make_scenario(8, 4, 1.0, 42, false);
  sc.graph.optimize();
  for (int trial = 0; trial < 10; ++trial) {
    const DenseOracle before_oracle(sc.graph);
    const Eigen::MatrixXd before = before_oracle.covariance(sc.graph);
    const Marginals mb(sc.graph);
    const int i = pick_pose(rng);
    const int j = pick_lm(rng);
    const auto px = VariableKey::pose(0, i);
    const auto lk = VariableKey::point(j);
    sc.graph.add_factor(LandmarkFactor{px, lk, observe_landmark(sc.graph.pose(px), sc.graph.point(lk)),
                                       Eigen::Vector2d(0.01, 0.001).asDiagonal()});
    const Marginals ma(sc.graph);
    const Eigen::MatrixXd after = DenseOracle(sc.graph).covariance(sc.graph);
    for (const auto& key : sc.graph.keys()) {
      CHECK(ma.covariance(key).trace() <= mb.covariance(key).trace() + 1e-12);
      const int o = before_oracle.offset.at(key);
      CHECK(after.block(o, o, key.dim(), key.dim()).trace() <= before.block(o, o, key.dim(), key.dim()).trace() + 1e-12);
    }
  }
}

TEST_CASE("angular residuals use the wrapped difference") {
  FactorGraph g;
  g.add_variable(VariableKey::pose(0, 0), Pose2{0, 0, std::numbers::pi - 0.01});
  g.add_factor(PriorPoseFactor{VariableKey::pose(0, 0), Pose2{0, 0, -std::numbers::pi + 0.01},
                               Cov3::Identity()});
  CHECK_THAT(g.cost(), WithinAbs(0.5 * 0.02 * 0.02, 1e-12));
  g.optimize();
  CHECK_THAT(wrap_angle(g.pose(VariableKey::pose(0, 0)).theta + std::numbers::pi - 0.01), WithinAbs(0.0, 1e-9));
}

TEST_CASE("graph dump lists every variable and factor") {
  Scenario sc = make_scenario(3, 2, 0.0, 1, false);
  std::ostringstream os;
  sc.graph.write_dump(os);
  const std::string text = os.str();
  CHECK(text.rfind("#", 0) == 0);
  int vars = 0;
  int factors = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VAR", 0) == 0) ++vars;
    if (line.rfind("FACTOR", 0) == 0) ++factors;
  }
  CHECK(vars == static_cast<int>(sc.graph.num_variables()));
  CHECK(factors == static_cast<int>(sc.graph.num_factors()));
}
