#include "emx/frontier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace emx {

std::string_view to_string(FrontierKind kind) {
  switch (kind) {
    case FrontierKind::Exploring: return "exploring";
    case FrontierKind::Revisiting: return "revisiting";
    case FrontierKind::Rendezvous: return "rendezvous";
  }
  return "unknown";
}

std::vector<int> boundary_cells(const VirtualMap& map) {
  std::vector<int> out;
  for (int i = 0; i < map.size(); ++i) {
    if (!map.observed(i) || map.on_border(i)) continue;
    const int x = map.ix(i);
    const int y = map.iy(i);
    const int nx[4] = {x + 1, x - 1, x, x};
    const int ny[4] = {y, y, y + 1, y - 1};
    for (int k = 0; k < 4; ++k) {
      if (map.in_bounds(nx[k], ny[k]) && !map.observed(map.index(nx[k], ny[k]))) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

namespace {

bool near_landmark(Point2 p, std::span<const LandmarkBelief> landmarks, double radius) {
  return std::any_of(landmarks.begin(), landmarks.end(),
                     [&](const LandmarkBelief& l) { return distance(p, l.position) < radius; });
}

Pose2 facing(const Pose2& from, Point2 target) {
  const double dx = target.x - from.x;
  const double dy = target.y - from.y;
  const double heading = (dx == 0.0 && dy == 0.0) ? from.theta : std::atan2(dy, dx);
  return {target.x, target.y, heading};
}

}  // namespace

std::vector<Frontier> generate_frontiers(const VirtualMap& map, const Pose2& self_state,
                                         std::span<const LandmarkBelief> landmarks,
                                         std::span<const NeighborTarget> neighbor_targets,
                                         const FrontierOptions& options) {
  const Point2 self = self_state.position();
  std::vector<Frontier> out;

  // Exploring: nearest boundary cells first, greedily thinned by the dedup radius.
  std::vector<std::pair<double, int>> ranked;
  for (int idx : boundary_cells(map)) {
    const Point2 c = map.center(idx);
    if (near_landmark(c, landmarks, options.obstacle_radius)) continue;
    ranked.emplace_back(distance(self, c), idx);
  }
  std::sort(ranked.begin(), ranked.end());
  const double dedup = options.dedup_radius_cells * map.spec().cell_size;
  std::vector<Point2> chosen;
  for (const auto& [d, idx] : ranked) {
    if (static_cast<int>(chosen.size()) >= options.max_exploring) break;
    const Point2 c = map.center(idx);
    const bool crowded =
        std::any_of(chosen.begin(), chosen.end(), [&](Point2 q) { return distance(q, c) < dedup; });
    if (crowded) continue;
    chosen.push_back(c);
    out.push_back({FrontierKind::Exploring, facing(self_state, c), std::nullopt, idx});
  }

  // Revisiting: one per landmark out of sensing range, at the observed cell nearest the stand-off point.
  const double standoff =
      options.revisit_standoff > 0.0 ? options.revisit_standoff : 0.5 * map.spec().max_sensing_range;
  std::vector<std::pair<double, const LandmarkBelief*>> revisit;
  for (const auto& lm : landmarks) {
    const double d = distance(self, lm.position);
    if (d > map.spec().max_sensing_range) revisit.emplace_back(d, &lm);
  }
  std::stable_sort(revisit.begin(), revisit.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  if (static_cast<int>(revisit.size()) > options.max_revisiting) revisit.resize(std::max(0, options.max_revisiting));
  for (const auto& [dist, lmp] : revisit) {
    const LandmarkBelief& lm = *lmp;
    const double ux = (self.x - lm.position.x) / dist;
    const double uy = (self.y - lm.position.y) / dist;
    const Point2 aim{lm.position.x + standoff * ux, lm.position.y + standoff * uy};
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < map.size(); ++i) {
      if (!map.observed(i) || map.on_border(i)) continue;
      const Point2 c = map.center(i);
      if (near_landmark(c, landmarks, options.obstacle_radius)) continue;
      const double d = distance(c, aim);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best >= 0) out.push_back({FrontierKind::Revisiting, facing(self_state, map.center(best)), lm.id, best});
  }

  // Rendezvous: the neighbors' current targets.
  for (const auto& nt : neighbor_targets) {
    const auto idx = map.cell_at(nt.target.position());
    if (!idx || map.on_border(*idx)) continue;
    if (near_landmark(nt.target.position(), landmarks, options.obstacle_radius)) continue;
    out.push_back({FrontierKind::Rendezvous, facing(self_state, nt.target.position()), nt.robot, *idx});
  }

  std::stable_sort(out.begin(), out.end(), [&](const Frontier& a, const Frontier& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    const double da = distance(self, a.target.position());
    const double db = distance(self, b.target.position());
    if (da != db) return da < db;
    return a.cell < b.cell;
  });
  return out;
}

}  // namespace emx
