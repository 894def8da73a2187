#pragma once

#include "emx/geometry.hpp"
#include "emx/virtual_map.hpp"

#include <optional>
#include <span>
#include <vector>

namespace emx {

struct Disc {
  Point2 center;
  double radius = 0.0;
};

/// Free/blocked flags over the virtual-map grid. A cell is blocked when its
/// center lies inside any obstacle disc.
class ObstacleGrid {
 public:
  ObstacleGrid(const VirtualMapSpec& spec, std::span<const Disc> obstacles);

  const VirtualMapSpec& spec() const { return spec_; }
  int width() const { return spec_.width; }
  int height() const { return spec_.height; }
  int size() const { return spec_.width * spec_.height; }
  int index(int ix, int iy) const { return iy * spec_.width + ix; }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < spec_.width && iy < spec_.height; }
  bool blocked(int index) const { return blocked_[index] != 0; }
  Point2 center(int index) const;
  /// Cell containing `p`, clamped into the grid.
  int clamped_cell(Point2 p) const;
  /// True when `p` lies within any of the obstacle discs.
  bool inside_obstacle(Point2 p) const;

 private:
  VirtualMapSpec spec_;
  std::vector<Disc> obstacles_;
  std::vector<char> blocked_;
};

/// Result of a grid search: cell sequence and its cost in meters.
struct GridPath {
  std::vector<int> cells;
  double cost = 0.0;
};

/// A* over 8-connected cells (no corner cutting past blocked cells). The
/// start cell may be blocked; the goal may not.
std::optional<GridPath> astar(const ObstacleGrid& grid, int start_cell, int goal_cell);

/// Shortest obstacle-avoiding polyline from `from` to `to` through cell
/// centers, collinear vertices merged. Empty optional when unreachable.
std::optional<std::vector<Point2>> plan_path(const ObstacleGrid& grid, Point2 from, Point2 to);

double polyline_length(std::span<const Point2> path);

/// Samples a polyline every `spacing` meters. The first pose is `from`, the last
/// is `to`; interior headings follow the local path tangent.
std::vector<Pose2> resample_path(std::span<const Point2> path, double spacing, const Pose2& from, const Pose2& to);

}  // namespace emx
