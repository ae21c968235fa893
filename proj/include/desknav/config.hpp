#pragma once

#include "desknav/clustering.hpp"
#include "desknav/sim.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace desknav {

/// Scenario files are JSON objects. Only `environment` is required; every
/// other section falls back to the struct defaults. Unknown keys, wrong
/// types and out-of-range values raise ConfigError with a JSON pointer.
///
/// environment:
///   preset        "corridor" | "confined_room" | "empty"
///   waypoint_speed  overrides every waypoint speed (m/s)
///   panels        [{"min": [x,y,z], "max": [x,y,z]}, ...]
///   spawn         [x, y, z]
///   waypoints     [{"position": [x,y,z], "speed": s}, ...]
/// Explicit keys replace the preset's values.
ScenarioConfig scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioConfig& config);

/// Reads and parses a scenario file. Throws IoError when unreadable.
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// A clustering section on its own, or a whole scenario (detected by a
/// top-level "clustering" or "environment" key) whose section is taken.
ClusteringConfig clustering_from_json(const nlohmann::json& doc);
ClusteringConfig load_clustering_config(const std::filesystem::path& path);
nlohmann::json clustering_to_json(const ClusteringConfig& config);

nlohmann::json parse_json_file(const std::filesystem::path& path);

ControllerMode parse_controller_mode(const std::string& name);
std::string to_string(ControllerMode mode);

}  // namespace desknav
