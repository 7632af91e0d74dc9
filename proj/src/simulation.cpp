#include "pog/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "pog/io.hpp"

namespace pog {

namespace {

constexpr double kPi = std::numbers::pi;

double heading_of(const Eigen::Vector2d& d) { return std::atan2(d.y(), d.x()); }

}  // namespace

Trajectory::Trajectory(const TrajectorySpec& spec) : speed_(spec.speed) {
  spec.validate();
  const auto& w = spec.waypoints;
  const std::size_t n = w.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    if ((w[i + 1] - w[i]).norm() < 1e-9)
      throw std::invalid_argument("trajectory: coincident consecutive waypoints at index " + std::to_string(i));

  closed_ = n >= 4 && (w.front() - w.back()).norm() < 1e-9;
  const std::size_t segments = n - 1;
  const double radius = spec.speed / spec.turn_rate;

  std::vector<Eigen::Vector2d> dir(segments);
  std::vector<double> len(segments);
  for (std::size_t i = 0; i < segments; ++i) {
    const Eigen::Vector2d d = w[i + 1] - w[i];
    len[i] = d.norm();
    dir[i] = d / len[i];
  }

  // Corner k sits at the end of segment k (and, for loops, corner
  // segments-1 joins the last segment back to the first).
  const std::size_t corners = closed_ ? segments : segments - 1;
  std::vector<double> turn(corners), tangent(corners);
  for (std::size_t k = 0; k < corners; ++k) {
    const auto& a = dir[k];
    const auto& b = dir[(k + 1) % segments];
    const double phi = wrap_angle(heading_of(b) - heading_of(a));
    if (std::abs(phi) > kPi - 1e-6)
      throw std::invalid_argument("trajectory: reversal at waypoint " + std::to_string(k + 1));
    turn[k] = phi;
    tangent[k] = radius * std::tan(std::abs(phi) / 2);
  }

  auto trim_start = [&](std::size_t seg) -> double {
    if (seg == 0) return closed_ ? tangent[corners - 1] : 0.0;
    return tangent[seg - 1];
  };
  auto trim_end = [&](std::size_t seg) -> double { return seg < corners ? tangent[seg] : 0.0; };

  double s = 0;
  for (std::size_t i = 0; i < segments; ++i) {
    const double a = trim_start(i), b = trim_end(i);
    if (a + b > len[i] + 1e-9)
      throw std::invalid_argument("trajectory: segment " + std::to_string(i) +
                                  " is too short for the turn radius speed/turn_rate");
    const double straight = std::max(0.0, len[i] - a - b);
    const double h = heading_of(dir[i]);
    if (straight > 0) {
      pieces_.push_back({w[i] + a * dir[i], h, straight, 0.0, s});
      s += straight;
    }
    if (i < corners && std::abs(turn[i]) > 1e-12) {
      const double curvature = (turn[i] > 0 ? 1.0 : -1.0) / radius;
      const double arc = radius * std::abs(turn[i]);
      pieces_.push_back({w[i + 1] - b * dir[i], h, arc, curvature, s});
      s += arc;
    }
  }
  length_ = s;
}

Pose2d Trajectory::pose_along(double s) const {
  if (pieces_.empty()) throw std::logic_error("trajectory has no pieces");
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                             [](double value, const Piece& p) { return value < p.s0; });
  const Piece& p = it == pieces_.begin() ? pieces_.front() : *(it - 1);
  const double ds = std::clamp(s - p.s0, 0.0, p.length);
  if (p.curvature == 0.0) {
    return Pose2d(p.start.x() + ds * std::cos(p.heading), p.start.y() + ds * std::sin(p.heading), p.heading);
  }
  const double k = p.curvature;
  const double h1 = p.heading + k * ds;
  return Pose2d(p.start.x() + (std::sin(h1) - std::sin(p.heading)) / k,
                p.start.y() - (std::cos(h1) - std::cos(p.heading)) / k, h1);
}

Pose2d Trajectory::pose_at(double t) const {
  double s = speed_ * std::max(0.0, t);
  if (closed_) {
    s = std::fmod(s, length_);
  } else {
    s = std::min(s, length_);
  }
  return pose_along(s);
}

std::vector<TimedPose> sample_trajectory(const TrajectorySpec& spec, double dt) {
  if (!(dt > 0) || !std::isfinite(dt)) throw std::invalid_argument("sample_trajectory: dt must be positive");
  const Trajectory traj(spec);
  std::vector<TimedPose> out;
  const double end = traj.duration();
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t > end + 1e-9) break;
    out.push_back({t, traj.pose_at(std::min(t, end))});
  }
  return out;
}

namespace {

double standard_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

}  // namespace

RssiObservation simulate_rssi(const Pose2d& pose, const Beacon& beacon, double receiver_height, std::mt19937_64& rng,
                              double timestamp) {
  const double g = standard_normal(rng);
  return {beacon.id, expected_rssi(pose, beacon, receiver_height) + beacon.path_loss.sigma_sh * g, timestamp};
}

OdometryDelta odometry_between(const Pose2d& prev, const Pose2d& curr, double timestamp) {
  const Eigen::Vector2d d = curr.translation() - prev.translation();
  OdometryDelta o;
  o.timestamp = timestamp;
  o.d_trans = d.norm();
  o.d_rot1 = o.d_trans < 1e-9 ? 0.0 : wrap_angle(heading_of(d) - prev.theta());
  o.d_rot2 = wrap_angle(curr.theta() - prev.theta() - o.d_rot1);
  return o;
}

OdometryDelta simulate_odometry(const Pose2d& prev, const Pose2d& curr, const std::array<double, 4>& alphas,
                                std::mt19937_64& rng, double timestamp) {
  OdometryDelta o = odometry_between(prev, curr, timestamp);
  const double r1 = o.d_rot1 * o.d_rot1, r2 = o.d_rot2 * o.d_rot2, t2 = o.d_trans * o.d_trans;
  const double s_rot1 = std::sqrt(alphas[0] * r1 + alphas[1] * t2);
  const double s_trans = std::sqrt(alphas[2] * t2 + alphas[3] * (r1 + r2));
  const double s_rot2 = std::sqrt(alphas[0] * r2 + alphas[1] * t2);
  const double n1 = standard_normal(rng), n2 = standard_normal(rng), n3 = standard_normal(rng);
  o.d_rot1 = wrap_angle(o.d_rot1 + s_rot1 * n1);
  o.d_trans += s_trans * n2;
  o.d_rot2 = wrap_angle(o.d_rot2 + s_rot2 * n3);
  return o;
}

BearingObservation simulate_bearing(const Pose2d& pose, const Beacon& beacon, double noise_sigma,
                                    double reported_sigma, std::mt19937_64& rng, double timestamp) {
  const double g = standard_normal(rng);
  BearingObservation b;
  b.beacon_id = beacon.id;
  b.bearing = wrap_angle(expected_bearing(pose, beacon) + noise_sigma * g);
  b.timestamp = timestamp;
  b.sigma = reported_sigma;
  return b;
}

void corrupt_depth(DepthMap& depth, double sigma_rel, bool quantize_mm, double max_depth, std::mt19937_64& rng) {
  if (!(sigma_rel >= 0)) throw std::invalid_argument("corrupt_depth: sigma_rel must be nonnegative");
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (!depth.valid(v, u)) continue;
      double z = depth.values(v, u);
      if (sigma_rel > 0) z *= 1.0 + sigma_rel * standard_normal(rng);
      if (quantize_mm) z = std::round(z * 1000.0) / 1000.0;
      if (z > 0 && z <= max_depth)
        depth.values(v, u) = z;
      else
        depth.invalidate(u, v);
    }
  }
}

std::mt19937_64 channel_rng(std::uint64_t seed, Channel channel) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(channel)};
  return std::mt19937_64(seq);
}

World build_world(const ScenarioConfig& config) {
  World world = config.world;
  const auto lo = world.floor.min(), hi = world.floor.max();
  if (config.walls.enabled) {
    const double t = config.walls.thickness, h = config.walls.height;
    auto box = [](double x0, double y0, double x1, double y1, double z1) {
      return Eigen::AlignedBox3d(Eigen::Vector3d(x0, y0, 0), Eigen::Vector3d(x1, y1, z1));
    };
    world.obstacles.push_back(box(lo.x() - t, lo.y() - t, lo.x(), hi.y() + t, h));
    world.obstacles.push_back(box(hi.x(), lo.y() - t, hi.x() + t, hi.y() + t, h));
    world.obstacles.push_back(box(lo.x(), lo.y() - t, hi.x(), lo.y(), h));
    world.obstacles.push_back(box(lo.x(), hi.y(), hi.x(), hi.y() + t, h));
  }

  // Beacon parameters go through their serialized form so that a replay
  // from the exported beacon file sees exactly the same values.
  auto quantized = [](Beacon b) {
    b.position = b.position.unaryExpr([](double v) { return quantize_serialized(v); });
    b.path_loss.p0_dbm = quantize_serialized(b.path_loss.p0_dbm);
    b.path_loss.n = quantize_serialized(b.path_loss.n);
    b.path_loss.d0 = quantize_serialized(b.path_loss.d0);
    b.path_loss.sigma_sh = quantize_serialized(b.path_loss.sigma_sh);
    return b;
  };
  world.beacons.clear();
  if (!config.beacons.explicit_beacons.empty()) {
    for (const auto& b : config.beacons.explicit_beacons) world.beacons.push_back(quantized(b));
  } else {
    auto rng = channel_rng(config.seed, Channel::Beacons);
    const double m = config.beacons.margin;
    std::uniform_real_distribution<double> ux(lo.x() + m, hi.x() - m), uy(lo.y() + m, hi.y() - m);
    for (int i = 0; i < config.beacons.count; ++i) {
      Beacon b;
      b.id = static_cast<BeaconId>(i + 1);
      b.position.x() = ux(rng);
      b.position.y() = uy(rng);
      b.position.z() = config.beacons.height;
      b.path_loss = config.beacons.path_loss;
      world.beacons.push_back(quantized(b));
    }
  }
  std::sort(world.beacons.begin(), world.beacons.end(), [](const Beacon& a, const Beacon& b) { return a.id < b.id; });
  world.validate();
  return world;
}

double timestamp_of(const Observation& obs) {
  return std::visit([](const auto& o) { return o.timestamp; }, obs);
}

FusionEngine::FusionEngine(BeaconMap beacons, FilterConfig filter, double receiver_height, const Pose2d& initial_pose)
    : beacons_(std::move(beacons)), filter_(filter), receiver_height_(receiver_height) {
  filter_.noise.validate();
  state_.mean = initial_pose;
  state_.cov = Covariance3d::Zero();
  state_.cov.diagonal() << filter_.initial_sigma_xy * filter_.initial_sigma_xy,
      filter_.initial_sigma_xy * filter_.initial_sigma_xy, filter_.initial_sigma_theta * filter_.initial_sigma_theta;
}

void FusionEngine::process(const Observation& obs) {
  const double t = timestamp_of(obs);
  if (!std::isfinite(t) || t < last_time_)
    throw std::invalid_argument("observation at t=" + format_number(t) + " precedes t=" + format_number(last_time_));
  last_time_ = t;
  if (const auto* odo = std::get_if<OdometryDelta>(&obs)) {
    state_ = ekf_predict(state_, *odo, filter_.noise);
  } else if (const auto* rssi = std::get_if<RssiObservation>(&obs)) {
    Beacon b = beacons_.at(rssi->beacon_id);
    b.path_loss.sigma_sh = std::max(b.path_loss.sigma_sh, filter_.rssi_sigma_floor);
    const auto out = ekf_update_rssi(state_, *rssi, b, receiver_height_, filter_.noise);
    ++(out.gated ? rssi_gated : rssi_applied);
    state_ = out.state;
  } else {
    BearingObservation bearing = std::get<BearingObservation>(obs);
    const Beacon& b = beacons_.at(bearing.beacon_id);
    bearing.sigma = std::max(bearing.sigma, filter_.bearing_sigma_floor);
    const auto out = ekf_update_bearing(state_, bearing, b, filter_.noise);
    ++(out.gated ? bearing_gated : bearing_applied);
    state_ = out.state;
  }
}

std::vector<EstimateRow> fuse_observations(std::span<const Observation> observations, const BeaconMap& beacons,
                                           const FilterConfig& filter, double receiver_height,
                                           const Pose2d& initial_pose) {
  FusionEngine engine(beacons, filter, receiver_height, initial_pose);
  std::vector<EstimateRow> rows{engine.row(0.0)};
  std::size_t i = 0;
  while (i < observations.size()) {
    const double t = timestamp_of(observations[i]);
    bool odometry = false;
    for (; i < observations.size() && timestamp_of(observations[i]) == t; ++i) {
      engine.process(observations[i]);
      odometry = odometry || std::holds_alternative<OdometryDelta>(observations[i]);
    }
    if (odometry) rows.push_back(engine.row(t));
  }
  return rows;
}

PoseErrorStats pose_rmse(std::span<const TimedPose> estimated, std::span<const TimedPose> truth) {
  std::vector<TimedPose> sorted(truth.begin(), truth.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const TimedPose& a, const TimedPose& b) { return a.t < b.t; });
  PoseErrorStats s;
  double sum_xy = 0, sum_th = 0;
  for (const auto& e : estimated) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), e.t - 1e-9,
                               [](const TimedPose& p, double t) { return p.t < t; });
    if (it == sorted.end() || std::abs(it->t - e.t) > 1e-9) continue;
    const double dxy2 = (e.pose.translation() - it->pose.translation()).squaredNorm();
    const double dth = wrap_angle(e.pose.theta() - it->pose.theta());
    sum_xy += dxy2;
    sum_th += dth * dth;
    s.max_xy_m = std::max(s.max_xy_m, std::sqrt(dxy2));
    ++s.matched;
  }
  if (s.matched == 0) throw std::invalid_argument("pose_rmse: no matching timestamps");
  s.rmse_xy_m = std::sqrt(sum_xy / static_cast<double>(s.matched));
  s.rmse_theta_rad = std::sqrt(sum_th / static_cast<double>(s.matched));
  return s;
}

std::vector<double> tick_times(double rate_hz, double duration) {
  if (!(rate_hz > 0)) throw std::invalid_argument("tick_times: rate must be positive");
  std::vector<double> out;
  const double slack = 1e-9 * std::max(1.0, duration);
  for (std::uint64_t k = 1;; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    if (t > duration + slack) break;
    out.push_back(std::min(quantize_serialized(t), duration));
  }
  return out;
}

namespace {

enum class EventKind { Odometry = 0, Rssi = 1, Bearing = 2, Depth = 3 };

struct Event {
  double t;
  EventKind kind;
  BeaconId beacon;
};

std::vector<Event> schedule(const ScenarioConfig& config, const World& world) {
  std::vector<Event> events;
  for (double t : tick_times(config.rates.odom_hz, config.duration)) events.push_back({t, EventKind::Odometry, 0});
  for (double t : tick_times(config.rates.ble_hz, config.duration)) {
    for (const auto& b : world.beacons) events.push_back({t, EventKind::Rssi, b.id});
    if (config.noise.bearings)
      for (const auto& b : world.beacons) events.push_back({t, EventKind::Bearing, b.id});
  }
  if (config.mapping.enabled)
    for (double t : tick_times(config.rates.depth_hz, config.duration)) events.push_back({t, EventKind::Depth, 0});
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.beacon < b.beacon;
  });
  return events;
}

}  // namespace

SimLog run_scenario(const ScenarioConfig& config) {
  config.validate();
  SimLog log;
  log.world = build_world(config);
  log.map = GlobalMap(config.mapping.voxel_size);

  const Trajectory trajectory(config.trajectory);
  const BeaconMap beacons(log.world.beacons);
  const RigidTransform3d mount = config.camera.mount();
  const auto& intr = config.camera.intrinsics;

  auto odo_rng = channel_rng(config.seed, Channel::Odometry);
  auto rssi_rng = channel_rng(config.seed, Channel::Rssi);
  auto bearing_rng = channel_rng(config.seed, Channel::Bearing);
  auto depth_rng = channel_rng(config.seed, Channel::Depth);
  auto q = quantize_serialized;

  const Pose2d start = trajectory.pose_at(0.0);
  FusionEngine engine(beacons, config.filter, config.receiver_height, start);
  Pose2d dead_reckoning = start;
  Pose2d last_odom_truth = start;
  log.trajectory.push_back({0.0, start, engine.state().mean, engine.state().cov.trace(), start});

  const auto events = schedule(config, log.world);
  std::size_t i = 0;
  while (i < events.size()) {
    const double t = events[i].t;
    const Pose2d truth = trajectory.pose_at(t);
    bool odometry = false;
    for (; i < events.size() && events[i].t == t; ++i) {
      const Event& ev = events[i];
      switch (ev.kind) {
        case EventKind::Odometry: {
          OdometryDelta o = simulate_odometry(last_odom_truth, truth, config.noise.odometry_alphas, odo_rng, t);
          o.d_rot1 = q(o.d_rot1);
          o.d_trans = q(o.d_trans);
          o.d_rot2 = q(o.d_rot2);
          last_odom_truth = truth;
          dead_reckoning = apply_odometry(dead_reckoning, o);
          log.observations.emplace_back(o);
          engine.process(log.observations.back());
          odometry = true;
          break;
        }
        case EventKind::Rssi: {
          RssiObservation o = simulate_rssi(truth, beacons.at(ev.beacon), config.receiver_height, rssi_rng, t);
          o.rssi = q(o.rssi);
          log.observations.emplace_back(o);
          engine.process(log.observations.back());
          break;
        }
        case EventKind::Bearing: {
          BearingObservation o = simulate_bearing(truth, beacons.at(ev.beacon), config.noise.bearing_sigma,
                                                  config.noise.bearing_sigma, bearing_rng, t);
          o.bearing = q(o.bearing);
          o.sigma = q(o.sigma);
          log.observations.emplace_back(o);
          engine.process(log.observations.back());
          break;
        }
        case EventKind::Depth: {
          const RigidTransform3d world_from_camera = pose2_to_transform3(truth, mount);
          DepthMap depth = raycast_depth(log.world, world_from_camera, intr);
          corrupt_depth(depth, config.noise.depth_sigma_rel, config.noise.depth_quantize_mm, intr.max_depth,
                        depth_rng);
          const PointCloud cloud = voxel_downsample(back_project(depth, intr), config.mapping.voxel_size);
          if (config.mapping.keep_depth_frames) log.depth_frames.push_back(std::move(depth));
          ++log.metrics.depth_frames;
          if (cloud.empty()) break;
          Scan scan;
          scan.cloud = std::move(cloud);
          scan.seed_pose = config.mapping.seed_source == SeedSource::Truth ? truth : engine.state().mean;
          if (config.mapping.seed_source == SeedSource::Ekf) scan.seed_cov = engine.state().cov;
          scan.timestamp = t;
          const InsertResult r = insert_scan(log.map, scan, mount, config.mapping.icp);
          MapPoseRow row;
          row.t = t;
          row.pose = planar_pose(r.refined * mount.inverse());
          row.registered = r.icp_accepted;
          row.converged = r.icp_accepted && r.icp->converged;
          row.rmse = r.icp_accepted ? r.icp->rmse : 0.0;
          log.map_poses.push_back(row);
          break;
        }
      }
    }
    if (odometry)
      log.trajectory.push_back({t, truth, engine.state().mean, engine.state().cov.trace(), dead_reckoning});
  }

  std::vector<TimedPose> truth_poses, estimates, dr;
  for (const auto& r : log.trajectory) {
    truth_poses.push_back({r.t, r.truth});
    estimates.push_back({r.t, r.estimate});
    dr.push_back({r.t, r.dead_reckoning});
  }
  auto& m = log.metrics;
  m.fusion = pose_rmse(estimates, truth_poses);
  m.dead_reckoning = pose_rmse(dr, truth_poses);
  m.rssi_applied = engine.rssi_applied;
  m.rssi_gated = engine.rssi_gated;
  m.bearing_applied = engine.bearing_applied;
  m.bearing_gated = engine.bearing_gated;
  m.map_voxels = log.map.size();
  if (!log.map.empty()) m.map = map_error(log.map, log.world);
  return log;
}

}  // namespace pog
