#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pog/kdtree.hpp"
#include "pog/mapping.hpp"
#include "pog/world.hpp"

using namespace pog;

namespace {

constexpr double kPi = std::numbers::pi;

/// Floor, two walls and a box, sampled on a jittered grid.
std::vector<Eigen::Vector3d> corner_scene(double spacing, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.3 * spacing, 0.3 * spacing);
  std::vector<Eigen::Vector3d> pts;
  for (double a = 0; a <= 4.0; a += spacing)
    for (double b = 0; b <= 4.0; b += spacing) pts.emplace_back(a + jitter(rng), b + jitter(rng), 0.0);
  for (double a = 0; a <= 4.0; a += spacing)
    for (double h = spacing; h <= 2.0; h += spacing) {
      pts.emplace_back(0.0, a + jitter(rng), h + jitter(rng));
      pts.emplace_back(a + jitter(rng), 0.0, h + jitter(rng));
    }
  // Box [1.5, 2.0] × [1.5, 2.5] × [0, 0.8]: the four sides and the top.
  for (double h = spacing; h <= 0.8; h += spacing) {
    for (double a = 1.5; a <= 2.5; a += spacing) {
      pts.emplace_back(1.5, a + jitter(rng), h);
      pts.emplace_back(2.0, a + jitter(rng), h);
    }
    for (double a = 1.5; a <= 2.0; a += spacing) {
      pts.emplace_back(a + jitter(rng), 1.5, h);
      pts.emplace_back(a + jitter(rng), 2.5, h);
    }
  }
  for (double a = 1.5; a <= 2.0; a += spacing)
    for (double b = 1.5; b <= 2.5; b += spacing) pts.emplace_back(a, b, 0.8);
  return pts;
}

PointCloud cloud_of(std::vector<Eigen::Vector3d> pts) {
  PointCloud c;
  c.points = std::move(pts);
  return c;
}

PointCloud apply(const RigidTransform3d& t, const PointCloud& c) { return transformed(c, t); }

double translation_error(const RigidTransform3d& a, const RigidTransform3d& b) {
  return (a.translation() - b.translation()).norm();
}

double rotation_error(const RigidTransform3d& a, const RigidTransform3d& b) {
  return (a.inverse() * b).angle();
}

World corner_world() {
  World w;
  w.floor = Eigen::AlignedBox2d(Eigen::Vector2d(0, 0), Eigen::Vector2d(4, 4));
  w.obstacles.emplace_back(Eigen::Vector3d(-0.2, 0, 0), Eigen::Vector3d(0, 4, 2));
  w.obstacles.emplace_back(Eigen::Vector3d(0, -0.2, 0), Eigen::Vector3d(4, 0, 2));
  w.obstacles.emplace_back(Eigen::Vector3d(1.5, 1.5, 0), Eigen::Vector3d(2.0, 2.5, 0.8));
  return w;
}

}  // namespace

TEST(VoxelKey, FloorsTowardNegativeInfinity) {
  EXPECT_EQ(VoxelKey::of(Eigen::Vector3d(0.01, -0.01, -0.05), 0.05).index(), Eigen::Vector3i(0, -1, -1));
  EXPECT_EQ(VoxelKey::of(Eigen::Vector3d(0.1, 0.0999, -0.1001), 0.05).index(), Eigen::Vector3i(2, 1, -3));
  EXPECT_LT(VoxelKey::of(Eigen::Vector3d(-1, 5, 5), 1.0), VoxelKey::of(Eigen::Vector3d(0, -5, -5), 1.0));
  EXPECT_THROW(VoxelKey::of(Eigen::Vector3d(1e9, 0, 0), 0.05), std::out_of_range);
}

TEST(VoxelDownsample, Examples) {
  const PointCloud two = cloud_of({{0.01, 0.01, 0.01}, {0.03, 0.03, 0.03}});
  const PointCloud one = voxel_downsample(two, 0.05);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LT((one.points[0] - Eigen::Vector3d(0.02, 0.02, 0.02)).norm(), 1e-15);

  const PointCloud apart = voxel_downsample(cloud_of({{0.3, 0, 0}, {0.01, 0, 0}, {0.12, 0, 0}}), 0.05);
  ASSERT_EQ(apart.size(), 3u);
  EXPECT_EQ(apart.points[0].x(), 0.01);
  EXPECT_EQ(apart.points[2].x(), 0.3);

  EXPECT_TRUE(voxel_downsample(PointCloud{}, 0.05).empty());
  EXPECT_THROW(voxel_downsample(two, 0.0), std::invalid_argument);
}

TEST(VoxelDownsample, AveragesColors) {
  PointCloud c = cloud_of({{0.01, 0.01, 0.01}, {0.02, 0.02, 0.02}});
  c.colors = {Rgb{10, 20, 30}, Rgb{20, 41, 30}};
  const PointCloud d = voxel_downsample(c, 0.05);
  ASSERT_TRUE(d.has_colors());
  EXPECT_EQ(d.colors[0], (Rgb{15, 31, 30}));
}

TEST(VoxelDownsample, IdempotentAndOnePerVoxel) {
  const PointCloud c = cloud_of(corner_scene(0.013, 1));
  const PointCloud once = voxel_downsample(c, 0.05);
  const PointCloud twice = voxel_downsample(once, 0.05);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.points[i], twice.points[i]);
  std::vector<VoxelKey> keys;
  for (const auto& p : once.points) keys.push_back(VoxelKey::of(p, 0.05));
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  EXPECT_EQ(std::adjacent_find(keys.begin(), keys.end()), keys.end());
}

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<Eigen::Vector3d> pts(2000);
  for (auto& p : pts) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
  pts.push_back(pts[10]);  // duplicate: ties go to the lower index
  const KdTree3 tree(pts);
  for (int q = 0; q < 500; ++q) {
    const Eigen::Vector3d query(u(rng), u(rng), u(rng));
    const double radius = 0.05 + 0.3 * std::abs(u(rng));
    std::optional<std::size_t> best;
    double best_d2 = radius * radius;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d2 = (pts[i] - query).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    const auto nn = tree.nearest(query, radius);
    ASSERT_EQ(nn.has_value(), best.has_value());
    if (best) {
      EXPECT_EQ(nn->index, *best);
      EXPECT_EQ(nn->squared_distance, best_d2);
    }
  }
  const auto dup = tree.nearest(pts[10], 0.01);
  ASSERT_TRUE(dup);
  EXPECT_EQ(dup->index, 10u);
}

TEST(BestFitTransform, RecoversExactMotion) {
  const auto pts = corner_scene(0.2, 4);
  const auto motion = RigidTransform3d::FromAngleAxis(0.4, Eigen::Vector3d(1, -2, 0.5), Eigen::Vector3d(0.3, -1, 2));
  std::vector<Eigen::Vector3d> moved;
  for (const auto& p : pts) moved.push_back(motion * p);
  const auto fit = best_fit_transform(pts, moved);
  EXPECT_LT(translation_error(fit, motion), 1e-9);
  EXPECT_LT(rotation_error(fit, motion), 1e-9);
}

TEST(Icp, IdenticalCloudsGiveIdentity) {
  const PointCloud c = cloud_of(corner_scene(0.05, 5));
  const IcpResult r = icp_register(c, c, RigidTransform3d::Identity(), IcpParams{});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.rmse, 1e-12);
  EXPECT_LT(translation_error(r.transform, RigidTransform3d::Identity()), 1e-12);
  EXPECT_LT((r.transform.rotation() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LE(r.iterations, 2);
}

TEST(Icp, RecoversKnownMotion) {
  const PointCloud target = cloud_of(corner_scene(0.04, 6));
  const PointCloud source_raw = cloud_of(corner_scene(0.04, 7));
  // source = motion⁻¹ · scene, so target_from_source = motion.
  const auto motion = RigidTransform3d::FromAngleAxis(5.0 * kPi / 180.0, Eigen::Vector3d::UnitZ(),
                                                      Eigen::Vector3d(0.1, 0.0, 0.0));
  const PointCloud source = apply(motion.inverse(), source_raw);
  const IcpResult r = icp_register(source, target, RigidTransform3d::Identity(), IcpParams{});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(translation_error(r.transform, motion), 0.01);
  EXPECT_LT(rotation_error(r.transform, motion), 0.5 * kPi / 180.0);
  EXPECT_TRUE(RigidTransform3d::is_rotation(r.transform.rotation()));
}

TEST(Icp, RmseNonincreasingWithUnboundedMatching) {
  const PointCloud target = cloud_of(corner_scene(0.05, 8));
  const auto motion = RigidTransform3d::FromAngleAxis(0.15, Eigen::Vector3d(0.2, 0.1, 1), Eigen::Vector3d(0.2, -0.15, 0.05));
  const PointCloud source = apply(motion, cloud_of(corner_scene(0.05, 9)));
  IcpParams params;
  params.max_correspondence_m = 100;
  params.convergence_eps = 1e-9;
  const IcpResult r = icp_register(source, target, RigidTransform3d::Identity(), params);
  ASSERT_GE(r.rmse_history.size(), 2u);
  for (std::size_t i = 1; i < r.rmse_history.size(); ++i)
    EXPECT_LE(r.rmse_history[i], r.rmse_history[i - 1] + 1e-12) << "iteration " << i;
}

TEST(Icp, EquivariantUnderCommonMotion) {
  const PointCloud target = cloud_of(corner_scene(0.05, 10));
  const auto motion = RigidTransform3d::FromAngleAxis(0.05, Eigen::Vector3d::UnitZ(), Eigen::Vector3d(0.05, 0.03, 0));
  const PointCloud source = apply(motion.inverse(), cloud_of(corner_scene(0.05, 11)));
  const auto g = RigidTransform3d::FromAngleAxis(1.2, Eigen::Vector3d(0.3, -0.4, 1), Eigen::Vector3d(4, -3, 1));
  const IcpResult plain = icp_register(source, target, RigidTransform3d::Identity(), IcpParams{});
  const IcpResult moved = icp_register(apply(g, source), apply(g, target), RigidTransform3d::Identity(), IcpParams{});
  const RigidTransform3d expected = g * plain.transform * g.inverse();
  EXPECT_LT(translation_error(moved.transform, expected), 1e-4);
  EXPECT_LT(rotation_error(moved.transform, expected), 1e-5);
}

TEST(Icp, StarvationRaised) {
  const PointCloud target = cloud_of(corner_scene(0.1, 12));
  const PointCloud far = apply(RigidTransform3d::Translation(Eigen::Vector3d(50, 0, 0)), target);
  EXPECT_THROW(icp_register(far, target, RigidTransform3d::Identity(), IcpParams{}), CorrespondenceStarvation);
  EXPECT_THROW(icp_register(cloud_of({{0, 0, 0}}), target, RigidTransform3d::Identity(), IcpParams{}),
               std::invalid_argument);
  IcpParams bad;
  bad.max_iterations = 0;
  EXPECT_THROW(icp_register(target, target, RigidTransform3d::Identity(), bad), std::invalid_argument);
}

TEST(GlobalMap, WeightedMerge) {
  GlobalMap map(0.1);
  map.add(Eigen::Vector3d(0.01, 0.01, 0.01), 3);
  map.add(Eigen::Vector3d(0.05, 0.05, 0.05), 1);
  map.add(Eigen::Vector3d(0.5, 0.5, 0.5), 0);
  ASSERT_EQ(map.size(), 1u);
  EXPECT_LT((map.representatives()[0] - Eigen::Vector3d::Constant(0.02)).norm(), 1e-15);
  EXPECT_THROW(GlobalMap(0.0), std::invalid_argument);
}

TEST(GlobalMap, RepresentativesNearIsSuperset) {
  GlobalMap map(0.05);
  for (const auto& p : corner_scene(0.03, 13)) map.add(p);
  const std::vector<Eigen::Vector3d> queries{{1, 1, 0.1}, {0.2, 3, 1.5}};
  const double radius = 0.3;
  const auto near = map.representatives_near(queries, radius);
  std::size_t within = 0;
  for (const auto& r : map.representatives()) {
    bool close = false;
    for (const auto& q : queries) close = close || (r - q).norm() < radius;
    if (!close) continue;
    ++within;
    EXPECT_NE(std::find(near.begin(), near.end(), r), near.end());
  }
  EXPECT_GT(within, 0u);
  EXPECT_LT(near.size(), map.size());
}

TEST(InsertScan, FirstScanUsesSeed) {
  GlobalMap map(0.05);
  const Pose2d pose(1, 0.5, 0.3);
  const auto world_from_sensor = pose2_to_transform3(pose, RigidTransform3d::Identity());
  Scan scan;
  scan.cloud = apply(world_from_sensor.inverse(), cloud_of(corner_scene(0.05, 14)));
  scan.seed_pose = pose;
  const InsertResult r = insert_scan(map, scan, RigidTransform3d::Identity(), IcpParams{});
  EXPECT_FALSE(r.icp.has_value());
  EXPECT_LT(translation_error(r.refined, world_from_sensor), 1e-12);
  EXPECT_GT(map.size(), 0u);
  EXPECT_THROW(insert_scan(map, Scan{}, RigidTransform3d::Identity(), IcpParams{}), std::invalid_argument);
}

TEST(InsertScan, PerturbedSeedRefined) {
  GlobalMap map(0.05);
  const auto mount = forward_camera_mount(Eigen::Vector3d(0.2, 0, 0.5), 0.17);
  const Pose2d truth(2.8, 3.1, -2.2);
  const auto world_from_sensor = pose2_to_transform3(truth, mount);

  Scan first;
  first.cloud = apply(world_from_sensor.inverse(), cloud_of(corner_scene(0.01, 15)));
  first.seed_pose = truth;
  insert_scan(map, first, mount, IcpParams{});

  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> dir(-kPi, kPi);
  for (int trial = 0; trial < 5; ++trial) {
    GlobalMap local = map;
    const double a = dir(rng);
    const Pose2d seed(truth.x() + 0.05 * std::cos(a), truth.y() + 0.05 * std::sin(a), truth.theta() + 0.01);
    Scan second;
    second.cloud = apply(world_from_sensor.inverse(), cloud_of(corner_scene(0.01, 100 + trial)));
    second.seed_pose = seed;
    second.seed_cov.diagonal() << 0.05 * 0.05, 0.05 * 0.05, 0.02 * 0.02;
    const InsertResult r = insert_scan(local, second, mount, IcpParams{});
    ASSERT_TRUE(r.icp.has_value());
    EXPECT_TRUE(r.icp_accepted);
    EXPECT_LT(translation_error(r.refined, world_from_sensor), 0.01) << "trial " << trial;
    EXPECT_LT(translation_error(r.refined, world_from_sensor),
              translation_error(pose2_to_transform3(seed, mount), world_from_sensor));
    EXPECT_LT(rotation_error(r.refined, world_from_sensor), 0.005);
  }
}

TEST(InsertScan, IdenticalScanAtExactSeed) {
  GlobalMap map(0.05);
  const auto mount = forward_camera_mount(Eigen::Vector3d(0.2, 0, 0.5), 0.17);
  const Pose2d pose(2.2, 2.9, 0.7);
  Scan scan;
  scan.cloud = apply(pose2_to_transform3(pose, mount).inverse(), cloud_of(corner_scene(0.01, 19)));
  scan.seed_pose = pose;
  insert_scan(map, scan, mount, IcpParams{});
  const std::size_t before = map.size();
  const InsertResult r = insert_scan(map, scan, mount, IcpParams{});
  ASSERT_TRUE(r.icp.has_value());
  const auto seed = pose2_to_transform3(pose, mount);
  // ICP matches raw scan points to voxel centroids, so perfect overlap pins
  // the pose to within the sub-voxel sampling bias rather than exactly.
  EXPECT_LT(translation_error(r.refined, seed), 1e-3);
  EXPECT_LT(rotation_error(r.refined, seed), 1e-3);
  EXPECT_LT(map.size(), before + before / 20);
}

TEST(InsertScan, StarvedScanInsertedAtSeed) {
  GlobalMap map(0.05);
  Scan first;
  first.cloud = cloud_of(corner_scene(0.05, 17));
  insert_scan(map, first, RigidTransform3d::Identity(), IcpParams{});
  const std::size_t before = map.size();

  Scan remote;
  remote.cloud = first.cloud;
  remote.seed_pose = Pose2d(100, 100, 0);
  const InsertResult r = insert_scan(map, remote, RigidTransform3d::Identity(), IcpParams{});
  EXPECT_FALSE(r.icp.has_value());
  EXPECT_LT(translation_error(r.refined, pose2_to_transform3(remote.seed_pose, RigidTransform3d::Identity())), 1e-12);
  const auto shifted = apply(pose2_to_transform3(remote.seed_pose, RigidTransform3d::Identity()), first.cloud);
  EXPECT_EQ(map.size(), before + voxel_downsample(shifted, 0.05).size());
}

TEST(MapError, Examples) {
  const World world = corner_world();
  const std::vector<Eigen::Vector3d> on{{1, 1, 0}, {0, 2, 1}, {1.75, 2, 0.8}};
  const MapErrorStats exact = map_error(on, 0.05, world);
  EXPECT_EQ(exact.mean_abs_m, 0.0);
  EXPECT_EQ(exact.outlier_fraction, 0.0);
  EXPECT_EQ(exact.points, 3u);

  const std::vector<Eigen::Vector3d> lifted{{1, 1, 0.02}, {3, 3, 0.04}, {3, 3, 1.0}, {3, 1, 0.1}};
  const MapErrorStats s = map_error(lifted, 0.05, world);
  EXPECT_NEAR(s.mean_abs_m, (0.02 + 0.04 + 1.0 + 0.1) / 4, 1e-12);
  EXPECT_NEAR(s.outlier_fraction, 0.25, 1e-12);
  EXPECT_NEAR(s.p95_abs_m, 1.0, 1e-12);
  EXPECT_THROW(map_error(std::vector<Eigen::Vector3d>{}, 0.05, world), std::invalid_argument);
}

TEST(MapError, SampledSceneIsAccurate) {
  GlobalMap map(0.05);
  Scan scan;
  scan.cloud = cloud_of(corner_scene(0.01, 18));
  insert_scan(map, scan, RigidTransform3d::Identity(), IcpParams{});
  const MapErrorStats s = map_error(map, corner_world());
  EXPECT_LT(s.mean_abs_m, 0.01);
  EXPECT_EQ(s.outlier_fraction, 0.0);
}
