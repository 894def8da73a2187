#pragma once

#include "emx/geometry.hpp"
#include "emx/virtual_map.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace emx {

enum class FrontierKind { Exploring = 0, Revisiting = 1, Rendezvous = 2 };

std::string_view to_string(FrontierKind kind);

/// Candidate target state.
struct Frontier {
  FrontierKind kind = FrontierKind::Exploring;
  Pose2 target;
  /// Landmark id for revisiting frontiers, robot id for rendezvous frontiers.
  std::optional<int> anchor;
  /// Virtual-map cell the target lies in.
  int cell = -1;
};

struct NeighborTarget {
  int robot = 0;
  Pose2 target;
};

struct FrontierOptions {
  int max_exploring = 10;
  /// Minimum spacing of exploring frontiers, in cells.
  double dedup_radius_cells = 4.0;
  /// Revisiting candidates kept, nearest landmarks first.
  int max_revisiting = 5;
  /// Stand-off of revisiting frontiers from their landmark; <= 0 means half the sensing range.
  double revisit_standoff = -1.0;
  /// Radius around each landmark that targets must avoid.
  double obstacle_radius = 1.5;
};

/// Observed cells 4-adjacent to an unobserved cell, excluding the outer ring of the grid.
std::vector<int> boundary_cells(const VirtualMap& map);

/// Exploring, revisiting and rendezvous candidates, sorted by kind, then
/// distance from `self_state`, then cell index. Empty when there is nothing
/// left to explore, revisit or meet.
std::vector<Frontier> generate_frontiers(const VirtualMap& map, const Pose2& self_state,
                                         std::span<const LandmarkBelief> landmarks,
                                         std::span<const NeighborTarget> neighbor_targets,
                                         const FrontierOptions& options = {});

}  // namespace emx
