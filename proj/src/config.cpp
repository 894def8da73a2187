#include "emx/config.hpp"

#include "emx/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace emx {

using nlohmann::json;

std::string_view to_string(PlannerKind kind) {
  switch (kind) {
    case PlannerKind::Em2: return "em2";
    case PlannerKind::Em3: return "em3";
    case PlannerKind::Ce: return "ce";
    case PlannerKind::Bsp: return "bsp";
  }
  return "unknown";
}

PlannerKind parse_planner(std::string_view name) {
  if (name == "em2") return PlannerKind::Em2;
  if (name == "em3") return PlannerKind::Em3;
  if (name == "ce") return PlannerKind::Ce;
  if (name == "bsp") return PlannerKind::Bsp;
  throw ConfigError("unknown planner '" + std::string(name) + "'");
}

void TrialConfig::validate() const {
  noise.validate();
  if (!(noise_scale > 0.0)) throw ConfigError("noise scale must be positive");
  if (!(cell_size > 0.0)) throw ConfigError("cell size must be positive");
  if (environment.width <= 2 * cell_size || environment.height <= 2 * cell_size) {
    throw ConfigError("environment must span more than two cells");
  }
  if (max_steps <= 0) throw ConfigError("step budget must be positive");
  if (stall_steps <= 0) throw ConfigError("stall horizon must be positive");
  if (!(planning.waypoint_spacing > 0.0)) throw ConfigError("waypoint spacing must be positive");
  if (!(planning.d_max > 0.0)) throw ConfigError("d_max must be positive");
  if (!(explored_target > 0.0 && explored_target <= 1.0)) throw ConfigError("explored target must be in (0, 1]");
  if (!(apf.speed > 0.0 && apf.max_turn > 0.0)) throw ConfigError("speed and turn limit must be positive");
}

namespace {

void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(section));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_weights(const json& j, PlannerWeights& w) {
  check_keys(j, "em weights", {"lambda0", "lambda1", "lambda2", "lambda1_scaled_by_unexplored"});
  read(j, "lambda0", w.lambda0);
  read(j, "lambda1", w.lambda1);
  read(j, "lambda2", w.lambda2);
  if (j.contains("lambda1_scaled_by_unexplored")) {
    w.lambda1_mode = j.at("lambda1_scaled_by_unexplored").get<bool>() ? Lambda1Mode::ExploredRatioScaled
                                                                       : Lambda1Mode::Fixed;
  }
}

}  // namespace

TrialConfig parse_config(const std::string& json_text) {
  TrialConfig c;
  try {
    const json j = json::parse(json_text);
    check_keys(j, "config",
               {"name", "seed", "planner", "max_steps", "explored_target", "cell_size", "stall_steps",
                "obstacle_margin", "environment", "noise", "planning", "weights", "frontiers", "apf"});
    read(j, "name", c.name);
    read(j, "seed", c.seed);
    if (j.contains("planner")) c.planner = parse_planner(j.at("planner").get<std::string>());
    read(j, "max_steps", c.max_steps);
    read(j, "explored_target", c.explored_target);
    read(j, "cell_size", c.cell_size);
    read(j, "stall_steps", c.stall_steps);
    read(j, "obstacle_margin", c.obstacle_margin);
    c.planning.waypoint_spacing = 2.0 * c.cell_size;

    if (j.contains("environment")) {
      const json& e = j.at("environment");
      check_keys(e, "environment",
                 {"width", "height", "landmarks", "landmark_radius", "min_landmark_separation", "robots",
                  "wall_clearance", "start_region", "start_mutual_range", "start_min_spacing", "start_clearance"});
      auto& env = c.environment;
      read(e, "width", env.width);
      read(e, "height", env.height);
      read(e, "landmarks", env.num_landmarks);
      read(e, "landmark_radius", env.landmark_radius);
      read(e, "min_landmark_separation", env.min_landmark_separation);
      read(e, "robots", env.num_robots);
      read(e, "wall_clearance", env.wall_clearance);
      if (e.contains("start_region")) {
        const auto r = e.at("start_region").get<std::vector<double>>();
        if (r.size() != 4) throw ConfigError("start_region needs [x0, x1, y0, y1]");
        env.start_x0 = r[0];
        env.start_x1 = r[1];
        env.start_y0 = r[2];
        env.start_y1 = r[3];
      }
      read(e, "start_mutual_range", env.start_mutual_range);
      read(e, "start_min_spacing", env.start_min_spacing);
      read(e, "start_clearance", env.start_clearance);
    }

    if (j.contains("noise")) {
      const json& n = j.at("noise");
      check_keys(n, "noise",
                 {"odometry_translation_95_m", "odometry_rotation_95_deg", "range_95_m", "bearing_95_deg",
                  "max_range_m", "scale"});
      double ot = c.noise.odom_trans_sigma * 1.96;
      double orot = rad2deg(c.noise.odom_rot_sigma * 1.96);
      double r = c.noise.range_sigma * 1.96;
      double b = rad2deg(c.noise.bearing_sigma * 1.96);
      double mr = c.noise.max_sensing_range;
      read(n, "odometry_translation_95_m", ot);
      read(n, "odometry_rotation_95_deg", orot);
      read(n, "range_95_m", r);
      read(n, "bearing_95_deg", b);
      read(n, "max_range_m", mr);
      read(n, "scale", c.noise_scale);
      c.noise = NoiseSpec::from_confidence95(ot, deg2rad(orot), r, deg2rad(b), mr);
    }

    if (j.contains("planning")) {
      const json& p = j.at("planning");
      check_keys(p, "planning", {"waypoint_spacing", "d_max", "distance", "propagation"});
      read(p, "waypoint_spacing", c.planning.waypoint_spacing);
      read(p, "d_max", c.planning.d_max);
      if (p.contains("distance")) {
        const auto m = p.at("distance").get<std::string>();
        if (m == "path") c.planning.distance_mode = DistanceMode::PathLength;
        else if (m == "euclidean") c.planning.distance_mode = DistanceMode::Euclidean;
        else throw ConfigError("distance must be 'path' or 'euclidean'");
      }
      if (p.contains("propagation")) {
        const auto m = p.at("propagation").get<std::string>();
        if (m == "conditional") c.propagation = PropagationMode::ConditionalUpdate;
        else if (m == "full") c.propagation = PropagationMode::FullReoptimize;
        else throw ConfigError("propagation must be 'conditional' or 'full'");
      }
    }

    if (j.contains("weights")) {
      const json& w = j.at("weights");
      check_keys(w, "weights", {"em2", "em3", "ce", "bsp"});
      if (w.contains("em2")) read_weights(w.at("em2"), c.em2);
      if (w.contains("em3")) read_weights(w.at("em3"), c.em3);
      if (w.contains("ce")) {
        check_keys(w.at("ce"), "ce weights", {"lambda0", "lambda1"});
        read(w.at("ce"), "lambda0", c.ce_lambda0);
        read(w.at("ce"), "lambda1", c.ce_lambda1);
      }
      if (w.contains("bsp")) {
        check_keys(w.at("bsp"), "bsp weights", {"lambda0", "lambda1"});
        read(w.at("bsp"), "lambda0", c.bsp_lambda0);
        read(w.at("bsp"), "lambda1", c.bsp_lambda1);
      }
    }

    if (j.contains("frontiers")) {
      const json& f = j.at("frontiers");
      check_keys(f, "frontiers", {"max_exploring", "max_revisiting", "dedup_radius_cells", "revisit_standoff"});
      read(f, "max_exploring", c.frontiers.max_exploring);
      read(f, "dedup_radius_cells", c.frontiers.dedup_radius_cells);
      read(f, "max_revisiting", c.frontiers.max_revisiting);
      read(f, "revisit_standoff", c.frontiers.revisit_standoff);
    }

    if (j.contains("apf")) {
      const json& a = j.at("apf");
      check_keys(a, "apf",
                 {"speed", "max_turn_deg", "robot_radius", "influence", "attraction_gain", "repulsion_gain",
                  "rotate_threshold_deg"});
      read(a, "speed", c.apf.speed);
      double turn = rad2deg(c.apf.max_turn);
      read(a, "max_turn_deg", turn);
      c.apf.max_turn = deg2rad(turn);
      read(a, "robot_radius", c.apf.robot_radius);
      read(a, "influence", c.apf.influence);
      read(a, "attraction_gain", c.apf.attraction_gain);
      read(a, "repulsion_gain", c.apf.repulsion_gain);
      double rot = rad2deg(c.apf.rotate_threshold);
      read(a, "rotate_threshold_deg", rot);
      c.apf.rotate_threshold = deg2rad(rot);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  c.validate();
  return c;
}

TrialConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_json(const TrialConfig& c) {
  auto weights = [](const PlannerWeights& w) {
    return json{{"lambda0", w.lambda0},
                {"lambda1", w.lambda1},
                {"lambda2", w.lambda2},
                {"lambda1_scaled_by_unexplored", w.lambda1_mode == Lambda1Mode::ExploredRatioScaled}};
  };
  const auto& e = c.environment;
  json j{
      {"name", c.name},
      {"seed", c.seed},
      {"planner", std::string(to_string(c.planner))},
      {"max_steps", c.max_steps},
      {"explored_target", c.explored_target},
      {"cell_size", c.cell_size},
      {"stall_steps", c.stall_steps},
      {"obstacle_margin", c.obstacle_margin},
      {"environment",
       {{"width", e.width},
        {"height", e.height},
        {"landmarks", e.num_landmarks},
        {"landmark_radius", e.landmark_radius},
        {"min_landmark_separation", e.min_landmark_separation},
        {"robots", e.num_robots},
        {"wall_clearance", e.wall_clearance},
        {"start_region", {e.start_x0, e.start_x1, e.start_y0, e.start_y1}},
        {"start_mutual_range", e.start_mutual_range},
        {"start_min_spacing", e.start_min_spacing},
        {"start_clearance", e.start_clearance}}},
      {"noise",
       {{"odometry_translation_95_m", c.noise.odom_trans_sigma * 1.96},
        {"odometry_rotation_95_deg", rad2deg(c.noise.odom_rot_sigma * 1.96)},
        {"range_95_m", c.noise.range_sigma * 1.96},
        {"bearing_95_deg", rad2deg(c.noise.bearing_sigma * 1.96)},
        {"max_range_m", c.noise.max_sensing_range},
        {"scale", c.noise_scale}}},
      {"planning",
       {{"waypoint_spacing", c.planning.waypoint_spacing},
        {"d_max", c.planning.d_max},
        {"distance", c.planning.distance_mode == DistanceMode::PathLength ? "path" : "euclidean"},
        {"propagation", c.propagation == PropagationMode::ConditionalUpdate ? "conditional" : "full"}}},
      {"weights",
       {{"em2", weights(c.em2)},
        {"em3", weights(c.em3)},
        {"ce", {{"lambda0", c.ce_lambda0}, {"lambda1", c.ce_lambda1}}},
        {"bsp", {{"lambda0", c.bsp_lambda0}, {"lambda1", c.bsp_lambda1}}}}},
      {"frontiers",
       {{"max_exploring", c.frontiers.max_exploring},
        {"max_revisiting", c.frontiers.max_revisiting},
        {"dedup_radius_cells", c.frontiers.dedup_radius_cells},
        {"revisit_standoff", c.frontiers.revisit_standoff}}},
      {"apf",
       {{"speed", c.apf.speed},
        {"max_turn_deg", rad2deg(c.apf.max_turn)},
        {"robot_radius", c.apf.robot_radius},
        {"influence", c.apf.influence},
        {"attraction_gain", c.apf.attraction_gain},
        {"repulsion_gain", c.apf.repulsion_gain},
        {"rotate_threshold_deg", rad2deg(c.apf.rotate_threshold)}}},
  };
  return j.dump(2);
}

std::unique_ptr<Planner> make_planner(const TrialConfig& config) {
  PlanningParams params = config.planning;
  params.noise = config.effective_noise();
  params.step_length = config.apf.speed;
  switch (config.planner) {
    case PlannerKind::Em2: return std::make_unique<EmPlanner>(config.em2, params, "em2");
    case PlannerKind::Em3: return std::make_unique<EmPlanner>(config.em3, params, "em3");
    case PlannerKind::Ce: return std::make_unique<CePlanner>(params, config.ce_lambda0, config.ce_lambda1);
    case PlannerKind::Bsp: return std::make_unique<BspPlanner>(params, config.bsp_lambda0, config.bsp_lambda1);
  }
  throw ConfigError("unknown planner");
}

}  // namespace emx
