#include <catch_amalgamated.hpp>

#include "emx/grid_path.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <random>

using namespace emx;
using Catch::Matchers::WithinAbs;

namespace {

// Plain Dijkstra over the same move set.
double dijkstra(const ObstacleGrid& g, int start, int goal) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(g.size(), inf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  dist[start] = 0.0;
  open.emplace(0.0, start);
  const double c = g.spec().cell_size;
  while (!open.empty()) {
    const auto [d, v] = open.top();
    open.pop();
    if (d > dist[v]) continue;
    const int x = v % g.width();
    const int y = v / g.width();
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        const int nx = x + dx;
        const int ny = y + dy;
        if (!g.in_bounds(nx, ny) || g.blocked(g.index(nx, ny))) continue;
        const bool diag = dx != 0 && dy != 0;
        if (diag && (g.blocked(g.index(nx, y)) || g.blocked(g.index(x, ny)))) continue;
        const double nd = d + (diag ? c * std::sqrt(2.0) : c);
        if (nd < dist[g.index(nx, ny)]) {
          dist[g.index(nx, ny)] = nd;
          open.emplace(nd, g.index(nx, ny));
        }
      }
    }
  }
  return dist[goal];
}

bool adjacent(const ObstacleGrid& g, int a, int b) {
  return std::abs(a % g.width() - b % g.width()) <= 1 && std::abs(a / g.width() - b / g.width()) <= 1 && a != b;
}

}  // namespace

TEST_CASE("A* matches a Dijkstra oracle on random obstacle fields") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  std::uniform_real_distribution<double> r(1.0, 5.0);
  const VirtualMapSpec spec = VirtualMapSpec::covering(60.0, 60.0, 2.0, 7.5);
  int compared = 0;
  int unreachable = 0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Disc> discs;
    for (int k = 0; k < 25; ++k) discs.push_back({{u(rng), u(rng)}, r(rng)});
    const ObstacleGrid g(spec, discs);
    for (int q = 0; q < 10; ++q) {
      const int s = g.clamped_cell({u(rng), u(rng)});
      const int t = g.clamped_cell({u(rng), u(rng)});
      if (g.blocked(s) || g.blocked(t)) continue;
      const double oracle = dijkstra(g, s, t);
      const auto path = astar(g, s, t);
      if (!std::isfinite(oracle)) {
        CHECK_FALSE(path.has_value());
        ++unreachable;
        continue;
      }
      REQUIRE(path.has_value());
      ++compared;
      CHECK_THAT(path->cost, WithinAbs(oracle, 1e-9));
      CHECK(path->cells.front() == s);
      CHECK(path->cells.back() == t);
      double walked = 0.0;
      for (std::size_t i = 1; i < path->cells.size(); ++i) {
        CHECK(adjacent(g, path->cells[i - 1], path->cells[i]));
        CHECK_FALSE(g.blocked(path->cells[i]));
        walked += distance(g.center(path->cells[i - 1]), g.center(path->cells[i]));
      }
      CHECK_THAT(walked, WithinAbs(path->cost, 1e-9));
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("obstacle grid flags") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(20.0, 20.0, 2.0, 7.5);
  const std::vector<Disc> discs{{{10.0, 10.0}, 2.5}};
  const ObstacleGrid g(spec, discs);
  for (int i = 0; i < g.size(); ++i) CHECK(g.blocked(i) == (distance(g.center(i), {10.0, 10.0}) < 2.5));
  CHECK(g.inside_obstacle({11.0, 10.0}));
  CHECK_FALSE(g.inside_obstacle({13.0, 10.0}));
  CHECK(g.clamped_cell({-50.0, -50.0}) == 0);
  CHECK(g.clamped_cell({500.0, 500.0}) == g.size() - 1);
}

TEST_CASE("walled-off goal is unreachable") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(20.0, 20.0, 2.0, 7.5);
  std::vector<Disc> wall;
  for (int k = 0; k < 10; ++k) wall.push_back({{11.0, 1.0 + 2.0 * k}, 1.2});
  const ObstacleGrid g(spec, wall);
  CHECK_FALSE(astar(g, g.clamped_cell({1, 1}), g.clamped_cell({19, 19})).has_value());
  CHECK_FALSE(plan_path(g, {1, 1}, {19, 19}).has_value());
  const auto self = astar(g, 0, 0);
  REQUIRE(self.has_value());
  CHECK(self->cost == 0.0);
}

TEST_CASE("plan_path merges straight runs and keeps endpoints") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(40.0, 20.0, 2.0, 7.5);
  const ObstacleGrid open(spec, std::vector<Disc>{});
  const auto line = plan_path(open, {1.0, 1.0}, {37.0, 1.0});
  REQUIRE(line.has_value());
  CHECK(line->size() == 2);
  CHECK_THAT(polyline_length(*line), WithinAbs(36.0, 1e-9));

  const std::vector<Disc> block{{{20.0, 4.0}, 4.5}};
  const ObstacleGrid g(spec, block);
  const auto around = plan_path(g, {3.2, 3.1}, {36.7, 3.3});
  REQUIRE(around.has_value());
  CHECK(around->front() == Point2{3.2, 3.1});
  CHECK(around->back() == Point2{36.7, 3.3});
  for (const auto& p : *around) CHECK_FALSE(g.inside_obstacle(p));
  CHECK(polyline_length(*around) > distance({3.2, 3.1}, {36.7, 3.3}));
}

TEST_CASE("resample_path spacing") {
  const std::vector<Point2> path{{0, 0}, {3, 0}, {3, 4}};
  CHECK(polyline_length(path) == 7.0);
  const Pose2 from{0, 0, 1.0};
  const Pose2 to{3, 4, 2.0};
  const auto poses = resample_path(path, 1.0, from, to);
  REQUIRE(poses.size() == 8);
  CHECK(poses.front() == from);
  CHECK(poses.back() == to);
  for (std::size_t i = 1; i + 1 < poses.size(); ++i) {
    CHECK_THAT(distance(poses[i - 1].position(), poses[i].position()), WithinAbs(1.0, 1e-9));
  }
  CHECK_THAT(poses[2].theta, WithinAbs(0.0, 1e-12));
  CHECK_THAT(poses[5].theta, WithinAbs(std::numbers::pi / 2, 1e-12));
  CHECK_THAT(poses[5].y, WithinAbs(2.0, 1e-12));

  const auto tiny = resample_path(std::vector<Point2>{{1, 1}, {1, 1}}, 1.0, from, to);
  REQUIRE(tiny.size() == 1);
  CHECK(tiny.front() == to);
}
