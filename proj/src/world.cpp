#include "pog/world.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace pog {

void World::validate() const {
  if (!(floor.min().array() < floor.max().array()).all()) throw std::invalid_argument("world: empty floor rectangle");
  for (std::size_t i = 0; i < obstacles.size(); ++i)
    if (!(obstacles[i].min().array() < obstacles[i].max().array()).all())
      throw std::invalid_argument("world: obstacle " + std::to_string(i) + " has min >= max");
  std::set<BeaconId> ids;
  for (const auto& b : beacons) {
    b.path_loss.validate();
    if (!ids.insert(b.id).second) throw std::invalid_argument("world: duplicate beacon id " + std::to_string(b.id));
    if (!floor.contains(b.position.head<2>()))
      throw std::invalid_argument("world: beacon " + std::to_string(b.id) + " outside the floor extent");
  }
}

namespace {

double distance_to_box_surface(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& p) {
  if (box.contains(p)) {
    const Eigen::Vector3d to_min = p - box.min();
    const Eigen::Vector3d to_max = box.max() - p;
    return std::min(to_min.minCoeff(), to_max.minCoeff());
  }
  return box.exteriorDistance(p);
}

}  // namespace

double World::distance_to_surface(const Eigen::Vector3d& p) const {
  const Eigen::Vector2d on_floor = p.head<2>().cwiseMax(floor.min()).cwiseMin(floor.max());
  double best = std::hypot((p.head<2>() - on_floor).norm(), p.z());
  for (const auto& box : obstacles) best = std::min(best, distance_to_box_surface(box, p));
  return best;
}

std::optional<double> intersect_box(const Eigen::AlignedBox3d& box, const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& inv_direction) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double inv = inv_direction(axis);
    if (std::isinf(inv)) {
      // Ray parallel to this slab.
      if (origin(axis) < box.min()(axis) || origin(axis) > box.max()(axis)) return std::nullopt;
      continue;
    }
    double t0 = (box.min()(axis) - origin(axis)) * inv;
    double t1 = (box.max()(axis) - origin(axis)) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return std::nullopt;
  }
  if (t_enter > 0) return t_enter;
  if (t_exit > 0) return t_exit;
  return std::nullopt;
}

std::optional<double> World::intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction) const {
  std::optional<double> best;
  if (direction.z() != 0.0) {
    const double t = -origin.z() / direction.z();
    if (t > 0) {
      const Eigen::Vector2d hit = origin.head<2>() + t * direction.head<2>();
      if (floor.contains(hit)) best = t;
    }
  }
  const Eigen::Vector3d inv = direction.cwiseInverse();
  for (const auto& box : obstacles) {
    const auto t = intersect_box(box, origin, inv);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

DepthMap raycast_depth(const World& world, const RigidTransform3d& world_from_camera, const CameraIntrinsics& intr) {
  intr.validate();
  DepthMap depth(intr.width, intr.height);
  const Eigen::Matrix3d& r = world_from_camera.rotation();
  const Eigen::Vector3d& origin = world_from_camera.translation();

  // Boxes that cannot produce a valid hit from this viewpoint are skipped.
  World visible;
  visible.floor = world.floor;
  const RigidTransform3d camera_from_world = world_from_camera.inverse();
  for (const auto& box : world.obstacles) {
    if (box.exteriorDistance(origin) > intr.max_depth) continue;
    bool in_front = false;
    for (int c = 0; c < 8 && !in_front; ++c)
      in_front = (camera_from_world * box.corner(static_cast<Eigen::AlignedBox3d::CornerType>(c))).z() > 0;
    if (in_front || box.contains(origin)) visible.obstacles.push_back(box);
  }

  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      // With a unit z component in the camera frame, the ray parameter is the
      // optical-axis depth.
      const Eigen::Vector3d ray_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      const auto t = visible.intersect(origin, r * ray_cam);
      if (t && *t <= intr.max_depth) depth.set(u, v, *t);
    }
  }
  return depth;
}

}  // namespace pog
