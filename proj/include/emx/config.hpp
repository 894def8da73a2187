#pragma once

#include "emx/baseline_planners.hpp"
#include "emx/em_planner.hpp"
#include "emx/frontier.hpp"
#include "emx/sim_world.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace emx {

enum class PlannerKind { Em2, Em3, Ce, Bsp };

std::string_view to_string(PlannerKind kind);
PlannerKind parse_planner(std::string_view name);

struct TrialConfig {
  std::string name = "trial";
  EnvironmentSpec environment;
  /// 95%-confidence noise values; sigmas are these divided by 1.96.
  NoiseSpec noise;
  /// Multiplier applied to every noise sigma.
  double noise_scale = 1.0;
  double cell_size = 2.0;
  PlannerKind planner = PlannerKind::Em3;
  PlanningParams planning;
  PlannerWeights em2 = PlannerWeights::em2();
  PlannerWeights em3 = PlannerWeights::em3();
  double ce_lambda0 = 1.0;
  double ce_lambda1 = 10.0;
  double bsp_lambda0 = 5.0;
  double bsp_lambda1 = 1.0;
  FrontierOptions frontiers;
  ApfParams apf;
  PropagationMode propagation = PropagationMode::ConditionalUpdate;
  std::uint64_t seed = 1;
  int max_steps = 4000;
  double explored_target = 0.95;
  /// Steps without progress toward the target before the robot replans.
  int stall_steps = 30;
  /// Landmark obstacles are inflated by this much (on top of their radius) for path planning.
  double obstacle_margin = 0.5;

  NoiseSpec effective_noise() const { return noise.scaled(noise_scale); }
  double arrival_radius() const { return 0.5 * cell_size; }
  void validate() const;
};

/// Parses a JSON configuration; missing keys keep their defaults. Throws ConfigError.
TrialConfig parse_config(const std::string& json_text);
TrialConfig load_config(const std::filesystem::path& path);
std::string to_json(const TrialConfig& config);

std::unique_ptr<Planner> make_planner(const TrialConfig& config);

}  // namespace emx
