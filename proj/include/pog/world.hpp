#pragma once

#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "pog/ble.hpp"
#include "pog/depth.hpp"
#include "pog/geometry.hpp"

namespace pog {

/// Box-world store floor: a floor rectangle at z = 0, axis-aligned obstacles
/// (shelves, walls, products) and BLE beacons.
struct World {
  Eigen::AlignedBox2d floor{Eigen::Vector2d(0, 0), Eigen::Vector2d(20, 10)};
  std::vector<Eigen::AlignedBox3d> obstacles;
  std::vector<Beacon> beacons;

  void validate() const;

  /// Unsigned distance from p to the closest surface (floor rectangle or box face).
  double distance_to_surface(const Eigen::Vector3d& p) const;

  /// Nearest hit along origin + t·direction for t > 0, or nullopt.
  std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) const;
};

/// Slab-method ray/box intersection. Returns the smallest positive t.
std::optional<double> intersect_box(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& inv_direction);

/// Renders optical-axis depth from the camera at world_from_camera.
/// Pixels without a hit within max_depth are invalid.
DepthMap raycast_depth(const World& world, const RigidTransform3d& world_from_camera, const CameraIntrinsics& intr);

}  // namespace pog
