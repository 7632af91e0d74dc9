#include "pog/mapping.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "pog/world.hpp"

namespace pog {

namespace {

constexpr int kKeyBits = 21;
constexpr std::int64_t kKeyBias = std::int64_t{1} << (kKeyBits - 1);
constexpr std::uint64_t kKeyMask = (std::uint64_t{1} << kKeyBits) - 1;

struct VoxelBin {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d color_sum = Eigen::Vector3d::Zero();
  std::uint64_t count = 0;
};

/// ICP runs on an evenly strided subset of at most about this many scan points.
constexpr std::size_t kRegistrationPoints = 8000;

/// 99% quantile of chi-square with 3 degrees of freedom.
constexpr double kSeedGateChi2 = 11.34;

/// Keeps the seed covariance invertible; a zero covariance still admits
/// millimeter-level corrections.
constexpr double kMinSeedVariance = 1e-6;

using BinMap = std::unordered_map<VoxelKey, VoxelBin, VoxelKeyHash>;

std::vector<std::pair<VoxelKey, VoxelBin>> sorted_bins(BinMap&& bins) {
  std::vector<std::pair<VoxelKey, VoxelBin>> out(bins.begin(), bins.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

/// Centroid of a voxel's points, nudged back inside the voxel when rounding
/// puts it on the far side of a boundary.
Eigen::Vector3d pinned_centroid(const Eigen::Vector3d& sum, std::uint64_t count, VoxelKey key, double voxel_size) {
  Eigen::Vector3d c = sum / static_cast<double>(count);
  const Eigen::Vector3i want = key.index();
  for (int axis = 0; axis < 3; ++axis) {
    const double toward = want(axis) * voxel_size + 0.5 * voxel_size;
    for (int guard = 0; guard < 64 && VoxelKey::of(c, voxel_size).index()(axis) != want(axis); ++guard)
      c(axis) = std::nextafter(c(axis), toward);
  }
  return c;
}

bool within_seed_gate(const Pose2d& refined, const Scan& scan) {
  Eigen::Vector3d delta(refined.x() - scan.seed_pose.x(), refined.y() - scan.seed_pose.y(),
                        wrap_angle(refined.theta() - scan.seed_pose.theta()));
  const Eigen::Matrix3d cov = scan.seed_cov + kMinSeedVariance * Eigen::Matrix3d::Identity();
  return delta.dot(cov.ldlt().solve(delta)) <= kSeedGateChi2;
}

}  // namespace

VoxelKey VoxelKey::of(const Eigen::Vector3d& p, double voxel_size) {
  std::uint64_t packed = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const double q = p(axis) / voxel_size;
    if (!(std::abs(q) < static_cast<double>(kKeyBias)))
      throw std::out_of_range("voxel index out of range for coordinate " + std::to_string(p(axis)));
    auto cell = static_cast<std::int64_t>(q);
    if (static_cast<double>(cell) > q) --cell;
    packed = (packed << kKeyBits) | static_cast<std::uint64_t>(cell + kKeyBias);
  }
  return VoxelKey{packed};
}

Eigen::Vector3i VoxelKey::index() const {
  Eigen::Vector3i idx;
  for (int axis = 2; axis >= 0; --axis) {
    const auto shift = static_cast<unsigned>((2 - axis) * kKeyBits);
    idx(axis) = static_cast<int>(static_cast<std::int64_t>((packed >> shift) & kKeyMask) - kKeyBias);
  }
  return idx;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0)) throw std::invalid_argument("voxel_downsample: voxel_size must be positive");
  cloud.validate();
  BinMap bins;
  bins.reserve(cloud.size() / 8 + 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto& bin = bins[VoxelKey::of(cloud.points[i], voxel_size)];
    bin.sum += cloud.points[i];
    if (cloud.has_colors())
      bin.color_sum += Eigen::Vector3d(cloud.colors[i][0], cloud.colors[i][1], cloud.colors[i][2]);
    ++bin.count;
  }
  PointCloud out;
  const auto sorted = sorted_bins(std::move(bins));
  out.points.reserve(sorted.size());
  for (const auto& [key, bin] : sorted) {
    const double n = static_cast<double>(bin.count);
    out.points.push_back(pinned_centroid(bin.sum, bin.count, key, voxel_size));
    if (cloud.has_colors()) {
      const Eigen::Vector3d c = (bin.color_sum / n).array().round();
      out.colors.push_back({static_cast<std::uint8_t>(c(0)), static_cast<std::uint8_t>(c(1)),
                            static_cast<std::uint8_t>(c(2))});
    }
  }
  return out;
}

void IcpParams::validate() const {
  if (max_iterations <= 0 || !(max_correspondence_m > 0) || !(convergence_eps > 0) || min_correspondences <= 0)
    throw std::invalid_argument("IcpParams: all parameters must be positive");
}

RigidTransform3d best_fit_transform(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst) {
  if (src.size() != dst.size() || src.empty())
    throw std::invalid_argument("best_fit_transform: need equally sized, nonempty point sets");
  Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  const double n = static_cast<double>(src.size());
  cs /= n;
  cd /= n;
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) cross += (src[i] - cs) * (dst[i] - cd).transpose();

  // Orthogonal polar factor of the cross-covariance, reflection removed.
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  return RigidTransform3d(r, cd - r * cs);
}

namespace {

struct Correspondences {
  std::vector<Eigen::Vector3d> src;
  std::vector<Eigen::Vector3d> dst;
  double rmse = 0;
};

Correspondences match(std::span<const Eigen::Vector3d> source, const KdTree3& target, const RigidTransform3d& t,
                      const IcpParams& params) {
  Correspondences c;
  c.src.reserve(source.size());
  c.dst.reserve(source.size());
  double sum_sq = 0;
  for (const auto& p : source) {
    const Eigen::Vector3d q = t * p;
    const auto nn = target.nearest(q, params.max_correspondence_m);
    if (!nn) continue;
    c.src.push_back(q);
    c.dst.push_back(target.point(nn->index));
    sum_sq += nn->squared_distance;
  }
  if (c.src.size() < static_cast<std::size_t>(params.min_correspondences))
    throw CorrespondenceStarvation("icp: " + std::to_string(c.src.size()) + " correspondences within " +
                                   std::to_string(params.max_correspondence_m) + " m, need " +
                                   std::to_string(params.min_correspondences));
  c.rmse = std::sqrt(sum_sq / static_cast<double>(c.src.size()));
  return c;
}

}  // namespace

IcpResult icp_register(std::span<const Eigen::Vector3d> source, const KdTree3& target,
                       const RigidTransform3d& initial, const IcpParams& params) {
  params.validate();
  if (source.size() < 3 || target.size() < 3) throw std::invalid_argument("icp_register: need at least 3 points per cloud");

  IcpResult result;
  RigidTransform3d current = initial;
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < params.max_iterations; ++it) {
    const Correspondences c = match(source, target, current, params);
    result.rmse_history.push_back(c.rmse);
    result.rmse = c.rmse;
    result.correspondences = static_cast<int>(c.src.size());
    result.iterations = it + 1;
    if (std::abs(previous - c.rmse) < params.convergence_eps) {
      result.converged = true;
      break;
    }
    previous = c.rmse;
    current = best_fit_transform(c.src, c.dst) * current;
  }
  if (!result.converged) {
    const Correspondences c = match(source, target, current, params);
    result.rmse = c.rmse;
    result.correspondences = static_cast<int>(c.src.size());
  }
  result.transform = current;
  return result;
}

IcpResult icp_register(const PointCloud& source, const PointCloud& target, const RigidTransform3d& initial,
                       const IcpParams& params) {
  if (source.size() < 3 || target.size() < 3) throw std::invalid_argument("icp_register: need at least 3 points per cloud");
  const KdTree3 tree(target.points);
  return icp_register(source.points, tree, initial, params);
}

GlobalMap::GlobalMap(double voxel_size) : voxel_size_(voxel_size) {
  if (!(voxel_size > 0)) throw std::invalid_argument("GlobalMap: voxel_size must be positive");
}

void GlobalMap::add(const Eigen::Vector3d& p, std::uint64_t weight) {
  if (weight == 0) return;
  auto& voxel = voxels_[VoxelKey::of(p, voxel_size_)];
  voxel.sum += p * static_cast<double>(weight);
  voxel.count += weight;
}

std::vector<Eigen::Vector3d> GlobalMap::representatives() const {
  std::vector<std::pair<VoxelKey, Eigen::Vector3d>> items;
  items.reserve(voxels_.size());
  for (const auto& [key, voxel] : voxels_) items.emplace_back(key, voxel.representative());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Vector3d> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.second);
  return out;
}

std::vector<Eigen::Vector3d> GlobalMap::representatives_within(const Eigen::AlignedBox3d& box) const {
  std::vector<std::pair<VoxelKey, Eigen::Vector3d>> items;
  for (const auto& [key, voxel] : voxels_) {
    const Eigen::Vector3d p = voxel.representative();
    if (box.contains(p)) items.emplace_back(key, p);
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Vector3d> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.second);
  return out;
}

std::vector<Eigen::Vector3d> GlobalMap::representatives_near(std::span<const Eigen::Vector3d> points,
                                                              double radius) const {
  if (!(radius > 0)) throw std::invalid_argument("representatives_near: radius must be positive");
  std::unordered_set<VoxelKey, VoxelKeyHash> occupied, cells;
  for (const auto& p : points) occupied.insert(VoxelKey::of(p, radius));
  for (const auto& key : occupied) {
    const Eigen::Vector3i c = key.index();
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz)
          cells.insert(VoxelKey::of((c + Eigen::Vector3i(dx, dy, dz)).cast<double>() * radius +
                                        Eigen::Vector3d::Constant(0.5 * radius),
                                    radius));
  }
  std::vector<std::pair<VoxelKey, Eigen::Vector3d>> items;
  for (const auto& [key, voxel] : voxels_) {
    const Eigen::Vector3d p = voxel.representative();
    if (cells.count(VoxelKey::of(p, radius))) items.emplace_back(key, p);
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Vector3d> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(item.second);
  return out;
}

InsertResult insert_scan(GlobalMap& map, const Scan& scan, const RigidTransform3d& mount, const IcpParams& icp) {
  if (scan.cloud.empty()) throw std::invalid_argument("insert_scan: empty scan");
  icp.validate();
  const RigidTransform3d seed = pose2_to_transform3(scan.seed_pose, mount);

  // Bin the seeded scan on the map's own voxel grid; the centroids, weighted
  // by their counts, are what gets merged.
  BinMap bins;
  bins.reserve(scan.cloud.size() / 4 + 16);
  for (const auto& p : scan.cloud.points) {
    const Eigen::Vector3d w = seed * p;
    auto& bin = bins[VoxelKey::of(w, map.voxel_size())];
    bin.sum += w;
    ++bin.count;
  }
  const auto sorted = sorted_bins(std::move(bins));
  std::vector<Eigen::Vector3d> source;
  source.reserve(sorted.size());
  for (const auto& [key, bin] : sorted) {
    source.push_back(bin.sum / static_cast<double>(bin.count));
  }

  InsertResult result{seed, std::nullopt};
  RigidTransform3d correction;
  if (!map.empty() && source.size() >= 3) {
    const auto target = map.representatives_near(source, icp.max_correspondence_m);
    if (target.size() >= static_cast<std::size_t>(std::max(3, icp.min_correspondences))) {
      try {
        const KdTree3 tree(target);
        std::vector<Eigen::Vector3d> raw;
        const std::size_t stride = std::max<std::size_t>(1, scan.cloud.size() / kRegistrationPoints);
        for (std::size_t i = 0; i < scan.cloud.size(); i += stride) raw.push_back(seed * scan.cloud.points[i]);
        IcpResult r = icp_register(raw, tree, RigidTransform3d::Identity(), icp);
        const RigidTransform3d refined = r.transform * seed;
        result.icp_accepted = within_seed_gate(planar_pose(refined * mount.inverse()), scan);
        if (result.icp_accepted) {
          correction = r.transform;
          result.refined = refined;
        }
        r.transform = refined;
        result.icp = std::move(r);
      } catch (const CorrespondenceStarvation&) {
        correction = RigidTransform3d::Identity();
      }
    }
  }

  for (std::size_t i = 0; i < sorted.size(); ++i) map.add(correction * source[i], sorted[i].second.count);
  return result;
}

MapErrorStats map_error(std::span<const Eigen::Vector3d> points, double voxel_size, const World& world) {
  if (points.empty()) throw std::invalid_argument("map_error: empty map");
  if (world.obstacles.empty() && !(world.floor.volume() > 0))
    throw std::invalid_argument("map_error: empty world");
  std::vector<double> d;
  d.reserve(points.size());
  for (const auto& p : points) d.push_back(world.distance_to_surface(p));
  MapErrorStats s;
  s.points = d.size();
  double sum = 0;
  std::size_t outliers = 0;
  for (double v : d) {
    sum += v;
    if (v > 3.0 * voxel_size) ++outliers;
  }
  s.mean_abs_m = sum / static_cast<double>(d.size());
  s.outlier_fraction = static_cast<double>(outliers) / static_cast<double>(d.size());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(d.size()))) - 1;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rank), d.end());
  s.p95_abs_m = d[rank];
  return s;
}

MapErrorStats map_error(const GlobalMap& map, const World& world) {
  const auto reps = map.representatives();
  return map_error(reps, map.voxel_size(), world);
}

}  // namespace pog
