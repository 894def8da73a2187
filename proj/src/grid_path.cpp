#include "emx/grid_path.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

namespace emx {

ObstacleGrid::ObstacleGrid(const VirtualMapSpec& spec, std::span<const Disc> obstacles)
    : spec_(spec), obstacles_(obstacles.begin(), obstacles.end()), blocked_(static_cast<std::size_t>(size()), 0) {
  for (int i = 0; i < size(); ++i) blocked_[i] = inside_obstacle(center(i)) ? 1 : 0;
}

Point2 ObstacleGrid::center(int idx) const {
  const int ix = idx % spec_.width;
  const int iy = idx / spec_.width;
  return {spec_.origin.x + (ix + 0.5) * spec_.cell_size, spec_.origin.y + (iy + 0.5) * spec_.cell_size};
}

int ObstacleGrid::clamped_cell(Point2 p) const {
  const int ix = std::clamp(static_cast<int>(std::floor((p.x - spec_.origin.x) / spec_.cell_size)), 0, spec_.width - 1);
  const int iy = std::clamp(static_cast<int>(std::floor((p.y - spec_.origin.y) / spec_.cell_size)), 0, spec_.height - 1);
  return index(ix, iy);
}

bool ObstacleGrid::inside_obstacle(Point2 p) const {
  return std::any_of(obstacles_.begin(), obstacles_.end(),
                     [&](const Disc& d) { return distance(p, d.center) < d.radius; });
}

std::optional<GridPath> astar(const ObstacleGrid& grid, int start, int goal) {
  if (grid.blocked(goal)) return std::nullopt;
  const int n = grid.size();
  const double c = grid.spec().cell_size;
  const int w = grid.width();
  auto heuristic = [&](int idx) {
    const double dx = std::abs(idx % w - goal % w);
    const double dy = std::abs(idx / w - goal / w);
    return c * (std::max(dx, dy) + (std::sqrt(2.0) - 1.0) * std::min(dx, dy));
  };

  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  std::vector<char> closed(n, 0);
  using Entry = std::tuple<double, double, int>;  // f, h, index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  g[start] = 0.0;
  open.emplace(heuristic(start), heuristic(start), start);

  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  while (!open.empty()) {
    const auto [f, h, cur] = open.top();
    open.pop();
    if (closed[cur]) continue;
    closed[cur] = 1;
    if (cur == goal) break;
    const int cx = cur % w;
    const int cy = cur / w;
    for (int k = 0; k < 8; ++k) {
      const int nx = cx + kDx[k];
      const int ny = cy + kDy[k];
      if (!grid.in_bounds(nx, ny)) continue;
      const int nb = grid.index(nx, ny);
      if (grid.blocked(nb) || closed[nb]) continue;
      const bool diagonal = k >= 4;
      if (diagonal && (grid.blocked(grid.index(nx, cy)) || grid.blocked(grid.index(cx, ny)))) continue;
      const double step = diagonal ? c * std::sqrt(2.0) : c;
      const double cand = g[cur] + step;
      if (cand < g[nb]) {
        g[nb] = cand;
        parent[nb] = cur;
        const double hn = heuristic(nb);
        open.emplace(cand + hn, hn, nb);
      }
    }
  }
  if (!std::isfinite(g[goal])) return std::nullopt;
  GridPath path;
  path.cost = g[goal];
  for (int v = goal; v != -1; v = parent[v]) path.cells.push_back(v);
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

std::optional<std::vector<Point2>> plan_path(const ObstacleGrid& grid, Point2 from, Point2 to) {
  const int start = grid.clamped_cell(from);
  const int goal = grid.clamped_cell(to);
  const auto cells = astar(grid, start, goal);
  if (!cells) return std::nullopt;

  std::vector<Point2> pts;
  pts.push_back(from);
  for (std::size_t i = 1; i + 1 < cells->cells.size(); ++i) pts.push_back(grid.center(cells->cells[i]));
  pts.push_back(to);

  // Merge collinear vertices and drop duplicates.
  std::vector<Point2> out;
  for (const auto& p : pts) {
    if (!out.empty() && distance(out.back(), p) < 1e-9) continue;
    if (out.size() >= 2) {
      const Point2 a = out[out.size() - 2];
      const Point2 b = out.back();
      const double cross = (b.x - a.x) * (p.y - b.y) - (b.y - a.y) * (p.x - b.x);
      const double dot = (b.x - a.x) * (p.x - b.x) + (b.y - a.y) * (p.y - b.y);
      if (std::abs(cross) < 1e-9 && dot > 0.0) out.back() = p;
      else out.push_back(p);
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) out.push_back(to);
  return out;
}

double polyline_length(std::span<const Point2> path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += distance(path[i - 1], path[i]);
  return len;
}

std::vector<Pose2> resample_path(std::span<const Point2> path, double spacing, const Pose2& from, const Pose2& to) {
  const double total = polyline_length(path);
  if (path.size() < 2 || total < 1e-9) return {to};

  std::vector<Pose2> out;
  out.push_back(from);
  std::size_t seg = 0;
  double seg_start = 0.0;
  for (int k = 1;; ++k) {
    const double s = k * spacing;
    if (s >= total - 1e-9) break;
    while (seg + 1 < path.size() && seg_start + distance(path[seg], path[seg + 1]) < s) {
      seg_start += distance(path[seg], path[seg + 1]);
      ++seg;
    }
    const Point2 a = path[seg];
    const Point2 b = path[seg + 1];
    const double len = distance(a, b);
    const double t = len > 0.0 ? (s - seg_start) / len : 0.0;
    out.emplace_back(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), std::atan2(b.y - a.y, b.x - a.x));
  }
  out.push_back(to);
  return out;
}

}  // namespace emx
