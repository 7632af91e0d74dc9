#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "pog/ble.hpp"
#include "pog/depth.hpp"
#include "pog/mapping.hpp"
#include "pog/scenario_config.hpp"
#include "pog/world.hpp"

namespace pog {

struct TimedPose {
  double t = 0;
  Pose2d pose;
};

/// Constant-speed path through the waypoints. Corners are rounded with arcs
/// of radius speed/turn_rate, so heading never changes faster than
/// turn_rate. A path whose last waypoint equals its first is a closed loop:
/// it starts just after the first corner and repeats with period duration().
class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec);

  double duration() const { return length_ / speed_; }
  double length() const { return length_; }
  bool closed() const { return closed_; }

  /// Closed loops wrap around; open paths hold their final pose.
  Pose2d pose_at(double t) const;

 private:
  struct Piece {
    Eigen::Vector2d start;
    double heading;
    double length;
    double curvature;  // signed, 0 for straight pieces
    double s0;         // arc length at the start of the piece
  };
  Pose2d pose_along(double s) const;

  std::vector<Piece> pieces_;
  double length_ = 0;
  double speed_ = 1;
  bool closed_ = false;
};

/// Poses at t = 0, dt, 2·dt, ... over one pass of the trajectory.
std::vector<TimedPose> sample_trajectory(const TrajectorySpec& spec, double dt);

RssiObservation simulate_rssi(const Pose2d& pose, const Beacon& beacon, double receiver_height, std::mt19937_64& rng,
                              double timestamp = 0);

OdometryDelta simulate_odometry(const Pose2d& prev, const Pose2d& curr, const std::array<double, 4>& alphas,
                                std::mt19937_64& rng, double timestamp = 0);

/// Noise-free decomposition of the relative motion into rot-trans-rot form.
OdometryDelta odometry_between(const Pose2d& prev, const Pose2d& curr, double timestamp = 0);

BearingObservation simulate_bearing(const Pose2d& pose, const Beacon& beacon, double noise_sigma,
                                    double reported_sigma, std::mt19937_64& rng, double timestamp = 0);

/// Multiplicative Gaussian depth noise with optional millimeter quantization.
void corrupt_depth(DepthMap& depth, double sigma_rel, bool quantize_mm, double max_depth, std::mt19937_64& rng);

/// Independent random stream per sensor channel.
enum class Channel : std::uint64_t { Beacons = 1, Odometry = 2, Rssi = 3, Bearing = 4, Depth = 5 };
std::mt19937_64 channel_rng(std::uint64_t seed, Channel channel);

/// World with beacons resolved from the layout (explicit or seeded random).
World build_world(const ScenarioConfig& config);

using Observation = std::variant<OdometryDelta, RssiObservation, BearingObservation>;
double timestamp_of(const Observation& obs);

struct EstimateRow {
  double t = 0;
  Pose2d estimate;
  double cov_trace = 0;
};

/// EKF fed by an ordered observation stream. Shared by closed-loop
/// scenarios and offline replay so both produce identical estimates.
class FusionEngine {
 public:
  FusionEngine(BeaconMap beacons, FilterConfig filter, double receiver_height, const Pose2d& initial_pose);

  /// Throws std::invalid_argument on timestamp regression and UnknownBeacon
  /// for ids missing from the map.
  void process(const Observation& obs);

  const EkfState& state() const { return state_; }
  EstimateRow row(double t) const { return {t, state_.mean, state_.cov.trace()}; }

  std::size_t rssi_applied = 0;
  std::size_t rssi_gated = 0;
  std::size_t bearing_applied = 0;
  std::size_t bearing_gated = 0;

 private:
  BeaconMap beacons_;
  FilterConfig filter_;
  double receiver_height_;
  EkfState state_;
  double last_time_ = 0;
};

/// Replays observations in order, emitting the initial state at t = 0 and
/// one row after every timestamp group that contains odometry.
std::vector<EstimateRow> fuse_observations(std::span<const Observation> observations, const BeaconMap& beacons,
                                           const FilterConfig& filter, double receiver_height,
                                           const Pose2d& initial_pose);

struct TrajectoryRow {
  double t = 0;
  Pose2d truth;
  Pose2d estimate;
  double cov_trace = 0;
  Pose2d dead_reckoning;
};

struct MapPoseRow {
  double t = 0;
  Pose2d pose;  // refined planar pose of the robot body
  bool registered = false;
  bool converged = false;
  double rmse = 0;
};

struct PoseErrorStats {
  double rmse_xy_m = 0;
  double rmse_theta_rad = 0;
  double max_xy_m = 0;
  std::size_t matched = 0;
};

/// Pairs estimates with truth at equal timestamps (within 1e-9 s).
/// Throws std::invalid_argument when nothing matches.
PoseErrorStats pose_rmse(std::span<const TimedPose> estimated, std::span<const TimedPose> truth);

struct ScenarioMetrics {
  PoseErrorStats fusion;
  PoseErrorStats dead_reckoning;
  std::size_t rssi_applied = 0;
  std::size_t rssi_gated = 0;
  std::size_t bearing_applied = 0;
  std::size_t bearing_gated = 0;
  std::size_t depth_frames = 0;
  std::size_t map_voxels = 0;
  std::optional<MapErrorStats> map;
};

struct SimLog {
  World world;
  std::vector<TrajectoryRow> trajectory;
  std::vector<Observation> observations;  // processing order
  std::vector<MapPoseRow> map_poses;
  GlobalMap map;
  std::vector<DepthMap> depth_frames;  // only with mapping.keep_depth_frames
  ScenarioMetrics metrics;
};

/// Runs the closed-loop scenario on one logical timeline. Deterministic for a
/// given config (including seed).
SimLog run_scenario(const ScenarioConfig& config);

/// Event timestamps k/rate for k = 1.. up to duration, rounded to their
/// serialized (9 significant digit) value.
std::vector<double> tick_times(double rate_hz, double duration);

}  // namespace pog
