#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pog/ble.hpp"
#include "pog/geometry.hpp"
#include "pog/mapping.hpp"
#include "pog/world.hpp"

namespace pog {

/// Raised for malformed or invalid scenario documents; `key` is the dotted
/// path of the offending field (empty when the document itself is bad).
struct ConfigError : std::runtime_error {
  ConfigError(std::string key, const std::string& message);
  std::string key;
};

struct TrajectorySpec {
  std::vector<Eigen::Vector2d> waypoints;
  double speed = 0.5;      // m/s
  double turn_rate = 0.5;  // rad/s

  void validate() const;
};

struct SensorRates {
  double depth_hz = 9.0;
  double ble_hz = 10.0;
  double odom_hz = 20.0;
};

struct NoiseConfig {
  std::array<double, 4> odometry_alphas{0.02, 0.01, 0.02, 0.005};
  double depth_sigma_rel = 0.01;
  bool depth_quantize_mm = true;
  double bearing_sigma = 0.05;  // rad
  bool bearings = true;
};

struct FilterConfig {
  EkfNoise noise{0.02, 0.01, 0.02, 0.005, 6.63};
  double rssi_sigma_floor = 0.5;      // dBm, lower bound on the assumed shadowing
  double bearing_sigma_floor = 0.01;  // rad
  double initial_sigma_xy = 0.1;
  double initial_sigma_theta = 0.05;
};

enum class SeedSource { Ekf, Truth };

struct MappingConfig {
  bool enabled = true;
  double voxel_size = 0.05;
  SeedSource seed_source = SeedSource::Ekf;
  IcpParams icp;
  bool keep_depth_frames = false;
};

/// Beacon placement: an explicit list, or `count` beacons drawn uniformly
/// over the floor (inset by `margin`) at a fixed height.
struct BeaconLayout {
  int count = 20;
  double height = 2.5;
  double margin = 0.5;
  PathLossParams path_loss;
  std::vector<Beacon> explicit_beacons;
};

struct CameraConfig {
  CameraIntrinsics intrinsics;
  Eigen::Vector3d mount_position{0.2, 0.0, 0.5};
  double mount_pitch_deg = 10.0;

  RigidTransform3d mount() const;
};

/// Perimeter walls placed just outside the floor rectangle.
struct WallConfig {
  bool enabled = true;
  double height = 2.5;
  double thickness = 0.2;
};

struct ScenarioConfig {
  World world;  // interior obstacles; walls and beacons are added by build_world
  WallConfig walls;
  BeaconLayout beacons;
  TrajectorySpec trajectory;
  CameraConfig camera;
  SensorRates rates;
  NoiseConfig noise;
  FilterConfig filter;
  MappingConfig mapping;
  double receiver_height = 0.3;
  std::uint64_t seed = 1;
  double duration = 120.0;

  /// 20 m × 10 m store with perimeter walls, two shelf rows and scattered
  /// products; 20 random beacons; a loop around the shelves.
  static ScenarioConfig default_scenario();

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// A "dotted.key=value" override; the value is parsed as JSON when possible,
/// otherwise taken as a string.
using ConfigOverride = std::pair<std::string, std::string>;
ConfigOverride parse_override(std::string_view text);

/// Parses a JSON scenario document layered over the defaults. Unknown fields
/// are rejected.
ScenarioConfig parse_scenario(std::string_view text, const std::vector<ConfigOverride>& overrides = {});
ScenarioConfig load_scenario(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides = {});
ScenarioConfig default_scenario_with(const std::vector<ConfigOverride>& overrides);

/// Canonical JSON form of a scenario (round-trips through parse_scenario).
std::string dump_scenario(const ScenarioConfig& config);

}  // namespace pog
