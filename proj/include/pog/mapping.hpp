#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "pog/depth.hpp"
#include "pog/geometry.hpp"
#include "pog/kdtree.hpp"

namespace pog {

struct World;

/// Integer voxel coordinates packed into 64 bits (21 bits per axis), so that
/// ordering by key is lexicographic in (ix, iy, iz).
struct VoxelKey {
  std::uint64_t packed = 0;

  static VoxelKey of(const Eigen::Vector3d& p, double voxel_size);
  Eigen::Vector3i index() const;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t x = k.packed;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

/// One point per occupied voxel (the centroid), sorted by voxel index.
/// Colors, when present, are averaged per voxel.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

struct IcpParams {
  int max_iterations = 50;
  double max_correspondence_m = 0.5;
  double convergence_eps = 1e-4;
  int min_correspondences = 30;

  void validate() const;
};

struct IcpResult {
  RigidTransform3d transform;
  double rmse = 0;
  int iterations = 0;
  bool converged = false;
  int correspondences = 0;
  std::vector<double> rmse_history;  // RMSE measured at the start of each iteration
};

struct CorrespondenceStarvation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed-form least-squares rigid transform mapping src[i] onto dst[i].
RigidTransform3d best_fit_transform(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst);

/// Point-to-point ICP. Returns target_from_source.
IcpResult icp_register(const PointCloud& source, const PointCloud& target, const RigidTransform3d& initial,
                       const IcpParams& params);
IcpResult icp_register(std::span<const Eigen::Vector3d> source, const KdTree3& target,
                       const RigidTransform3d& initial, const IcpParams& params);

/// Voxel-centroid map. Each voxel keeps a running sum and count.
class GlobalMap {
 public:
  struct Voxel {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::uint64_t count = 0;
    Eigen::Vector3d representative() const { return sum / static_cast<double>(count); }
  };

  explicit GlobalMap(double voxel_size = 0.05);

  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

  void add(const Eigen::Vector3d& p, std::uint64_t weight = 1);

  /// Representative points sorted by voxel key.
  std::vector<Eigen::Vector3d> representatives() const;
  std::vector<Eigen::Vector3d> representatives_within(const Eigen::AlignedBox3d& box) const;
  /// Representatives of voxels lying within roughly `radius` of any query
  /// point (a superset of those within radius), sorted by voxel key.
  std::vector<Eigen::Vector3d> representatives_near(std::span<const Eigen::Vector3d> points, double radius) const;

  const std::unordered_map<VoxelKey, Voxel, VoxelKeyHash>& voxels() const { return voxels_; }

 private:
  double voxel_size_;
  std::unordered_map<VoxelKey, Voxel, VoxelKeyHash> voxels_;
};

struct Scan {
  PointCloud cloud;  // sensor frame
  Pose2d seed_pose;
  Covariance3d seed_cov = Covariance3d::Zero();  // uncertainty of seed_pose
  double timestamp = 0;
};

struct InsertResult {
  RigidTransform3d refined;      // world_from_sensor
  std::optional<IcpResult> icp;  // nullopt: inserted at the seed alone
  bool icp_accepted = false;     // false: the ICP pose left the seed gate and was discarded
};

/// Registers the scan against the map (seeded by the planar pose lifted
/// through the mount) and merges its points. The ICP pose is kept only when
/// its planar offset from the seed passes a chi-square gate on seed_cov.
/// Throws std::invalid_argument on an empty scan.
InsertResult insert_scan(GlobalMap& map, const Scan& scan, const RigidTransform3d& mount, const IcpParams& icp);

struct MapErrorStats {
  double mean_abs_m = 0;
  double p95_abs_m = 0;
  double outlier_fraction = 0;
  std::size_t points = 0;
};

MapErrorStats map_error(std::span<const Eigen::Vector3d> points, double voxel_size, const World& world);
MapErrorStats map_error(const GlobalMap& map, const World& world);

}  // namespace pog
