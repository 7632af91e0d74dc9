#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "pog/geometry.hpp"

namespace pog {

/// Log-distance path loss with log-normal shadowing.
struct PathLossParams {
  double p0_dbm = -59.0;  // RSSI at the reference distance
  double n = 2.0;         // path-loss exponent
  double d0 = 1.0;        // reference distance, m
  double sigma_sh = 2.0;  // shadowing std-dev, dBm

  void validate() const;
};

/// Receiver-to-beacon distances below this are clamped in expected_rssi.
inline constexpr double kMinBeaconDistance = 0.1;

using BeaconId = std::uint32_t;

struct Beacon {
  BeaconId id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  PathLossParams path_loss;
};

struct UnknownBeacon : std::out_of_range {
  explicit UnknownBeacon(BeaconId id);
  BeaconId id;
};

/// Beacons keyed by unique id.
class BeaconMap {
 public:
  BeaconMap() = default;
  explicit BeaconMap(std::span<const Beacon> beacons);

  void add(const Beacon& b);
  const Beacon& at(BeaconId id) const;
  bool contains(BeaconId id) const { return beacons_.count(id) != 0; }
  std::size_t size() const { return beacons_.size(); }
  std::vector<Beacon> list() const;  // sorted by id

 private:
  std::map<BeaconId, Beacon> beacons_;
};

struct RssiObservation {
  BeaconId beacon_id = 0;
  double rssi = 0;
  double timestamp = 0;
};

struct BearingObservation {
  BeaconId beacon_id = 0;
  double bearing = 0;  // robot frame, wrapped
  double timestamp = 0;
  double sigma = 0.05;
};

/// Rotate-translate-rotate odometry increment.
struct OdometryDelta {
  double d_rot1 = 0;
  double d_trans = 0;
  double d_rot2 = 0;
  double timestamp = 0;
};

struct EkfState {
  Pose2d mean;
  Covariance3d cov = Covariance3d::Zero();
  double last_update = 0;
};

struct EkfNoise {
  double alpha1 = 0.01;
  double alpha2 = 0.01;
  double alpha3 = 0.01;
  double alpha4 = 0.01;
  double gate_chi2 = 6.63;  // 99% for one degree of freedom

  void validate() const;
};

struct UpdateOutcome {
  EkfState state;
  bool gated = false;
  double innovation = 0;
  double innovation_variance = 0;
};

double rssi_to_distance(double rssi, const PathLossParams& pl);

/// Measurement model h(pose): RSSI at the receiver point (x, y, receiver_height).
double expected_rssi(const Pose2d& pose, const Beacon& beacon, double receiver_height);

/// Odometry motion model with alpha noise; throws std::invalid_argument when
/// odo.timestamp < state.last_update.
EkfState ekf_predict(const EkfState& state, const OdometryDelta& odo, const EkfNoise& noise);

/// Noise-free application of an odometry increment to a pose.
Pose2d apply_odometry(const Pose2d& pose, const OdometryDelta& odo);

UpdateOutcome ekf_update_rssi(const EkfState& state, const RssiObservation& obs, const Beacon& beacon,
                              double receiver_height, const EkfNoise& noise);

UpdateOutcome ekf_update_bearing(const EkfState& state, const BearingObservation& obs, const Beacon& beacon,
                                 const EkfNoise& noise);

/// Predicted bearing of the beacon in the robot frame.
double expected_bearing(const Pose2d& pose, const Beacon& beacon);

struct GridSpec {
  double x_min = 0;
  double x_max = 0;
  double y_min = 0;
  double y_max = 0;
  double cell_m = 0.02;

  /// Grid nodes sit at x_min + i·cell_m, i = 0..nx-1.
  int nx() const;
  int ny() const;
  double x(int i) const { return x_min + i * cell_m; }
  double y(int j) const { return y_min + j * cell_m; }
};

struct TrilaterationResult {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double residual = 0;
};

/// Exhaustive grid search minimising Σ (rssi − expected_rssi)² over the
/// observations. Ties resolve to the lowest (j, i) node.
TrilaterationResult trilaterate_grid(std::span<const RssiObservation> observations, const BeaconMap& beacons,
                                     double receiver_height, const GridSpec& grid);

}  // namespace pog
