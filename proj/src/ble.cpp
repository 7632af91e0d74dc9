#include "pog/ble.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

namespace pog {

void PathLossParams::validate() const {
  if (!std::isfinite(p0_dbm) || !(n > 0) || !(d0 > 0) || !(sigma_sh >= 0) || !std::isfinite(n) ||
      !std::isfinite(d0) || !std::isfinite(sigma_sh))
    throw std::invalid_argument("PathLossParams: require n > 0, d0 > 0, sigma_sh >= 0");
}

void EkfNoise::validate() const {
  for (double a : {alpha1, alpha2, alpha3, alpha4})
    if (!(a >= 0) || !std::isfinite(a)) throw std::invalid_argument("EkfNoise: alphas must be finite and >= 0");
  if (!(gate_chi2 > 0)) throw std::invalid_argument("EkfNoise: gate_chi2 must be positive");
}

UnknownBeacon::UnknownBeacon(BeaconId beacon_id)
    : std::out_of_range("unknown beacon id " + std::to_string(beacon_id)), id(beacon_id) {}

BeaconMap::BeaconMap(std::span<const Beacon> beacons) {
  for (const auto& b : beacons) add(b);
}

void BeaconMap::add(const Beacon& b) {
  b.path_loss.validate();
  if (!b.position.allFinite()) throw std::invalid_argument("beacon " + std::to_string(b.id) + ": bad position");
  if (!beacons_.emplace(b.id, b).second)
    throw std::invalid_argument("duplicate beacon id " + std::to_string(b.id));
}

const Beacon& BeaconMap::at(BeaconId id) const {
  const auto it = beacons_.find(id);
  if (it == beacons_.end()) throw UnknownBeacon(id);
  return it->second;
}

std::vector<Beacon> BeaconMap::list() const {
  std::vector<Beacon> out;
  out.reserve(beacons_.size());
  for (const auto& [id, b] : beacons_) out.push_back(b);
  return out;
}

double rssi_to_distance(double rssi, const PathLossParams& pl) {
  if (!std::isfinite(rssi)) throw std::domain_error("rssi_to_distance: non-finite rssi");
  return pl.d0 * std::pow(10.0, (pl.p0_dbm - rssi) / (10.0 * pl.n));
}

namespace {

struct RangeGeometry {
  Eigen::Vector3d delta;  // receiver − beacon
  double distance;
  bool clamped;
};

RangeGeometry range_geometry(const Pose2d& pose, const Beacon& beacon, double receiver_height) {
  RangeGeometry g;
  g.delta = Eigen::Vector3d(pose.x(), pose.y(), receiver_height) - beacon.position;
  g.distance = g.delta.norm();
  g.clamped = g.distance < kMinBeaconDistance;
  if (g.clamped) g.distance = kMinBeaconDistance;
  return g;
}

double rssi_at_distance(double d, const PathLossParams& pl) { return pl.p0_dbm - 10.0 * pl.n * std::log10(d / pl.d0); }

/// Scalar-measurement EKF correction with chi-square gating and Joseph-form
/// covariance update.
UpdateOutcome scalar_update(const EkfState& state, double innovation, const Eigen::RowVector3d& h, double r,
                            double timestamp, double gate_chi2) {
  UpdateOutcome out;
  out.state = state;
  out.innovation = innovation;
  const double s = (h * state.cov * h.transpose())(0, 0) + r;
  out.innovation_variance = s;
  if (!(s > 1e-12) || !std::isfinite(innovation) || innovation * innovation / s > gate_chi2) {
    out.gated = true;
    return out;
  }
  const Eigen::Vector3d k = state.cov * h.transpose() / s;
  const Eigen::Vector3d dx = k * innovation;
  out.state.mean = Pose2d(state.mean.x() + dx(0), state.mean.y() + dx(1), state.mean.theta() + dx(2));
  const Eigen::Matrix3d ikh = Eigen::Matrix3d::Identity() - k * h;
  out.state.cov = symmetrized(ikh * state.cov * ikh.transpose() + k * r * k.transpose());
  out.state.last_update = std::max(state.last_update, timestamp);
  return out;
}

}  // namespace

double expected_rssi(const Pose2d& pose, const Beacon& beacon, double receiver_height) {
  return rssi_at_distance(range_geometry(pose, beacon, receiver_height).distance, beacon.path_loss);
}

Pose2d apply_odometry(const Pose2d& pose, const OdometryDelta& odo) {
  const double heading = pose.theta() + odo.d_rot1;
  return Pose2d(pose.x() + odo.d_trans * std::cos(heading), pose.y() + odo.d_trans * std::sin(heading),
                heading + odo.d_rot2);
}

EkfState ekf_predict(const EkfState& state, const OdometryDelta& odo, const EkfNoise& noise) {
  if (odo.timestamp < state.last_update)
    throw std::invalid_argument("ekf_predict: odometry timestamp " + std::to_string(odo.timestamp) +
                                " precedes last update " + std::to_string(state.last_update));
  const double heading = state.mean.theta() + odo.d_rot1;
  const double c = std::cos(heading), s = std::sin(heading);

  Eigen::Matrix3d g = Eigen::Matrix3d::Identity();
  g(0, 2) = -odo.d_trans * s;
  g(1, 2) = odo.d_trans * c;

  // Columns: d_rot1, d_trans, d_rot2.
  Eigen::Matrix3d v;
  v << -odo.d_trans * s, c, 0,
        odo.d_trans * c, s, 0,
        1, 0, 1;

  const double r1 = odo.d_rot1 * odo.d_rot1, r2 = odo.d_rot2 * odo.d_rot2, t2 = odo.d_trans * odo.d_trans;
  const Eigen::Vector3d m(noise.alpha1 * r1 + noise.alpha2 * t2,
                          noise.alpha3 * t2 + noise.alpha4 * (r1 + r2),
                          noise.alpha1 * r2 + noise.alpha2 * t2);

  EkfState out;
  out.mean = apply_odometry(state.mean, odo);
  out.cov = symmetrized(g * state.cov * g.transpose() + v * m.asDiagonal() * v.transpose());
  out.last_update = odo.timestamp;
  return out;
}

UpdateOutcome ekf_update_rssi(const EkfState& state, const RssiObservation& obs, const Beacon& beacon,
                              double receiver_height, const EkfNoise& noise) {
  if (obs.beacon_id != beacon.id) throw UnknownBeacon(obs.beacon_id);
  const auto geom = range_geometry(state.mean, beacon, receiver_height);
  const double predicted = rssi_at_distance(geom.distance, beacon.path_loss);

  Eigen::RowVector3d h = Eigen::RowVector3d::Zero();
  if (!geom.clamped) {
    const double scale = -10.0 * beacon.path_loss.n / (std::numbers::ln10 * geom.distance * geom.distance);
    h(0) = scale * geom.delta.x();
    h(1) = scale * geom.delta.y();
  }
  const double r = beacon.path_loss.sigma_sh * beacon.path_loss.sigma_sh;
  return scalar_update(state, obs.rssi - predicted, h, r, obs.timestamp, noise.gate_chi2);
}

double expected_bearing(const Pose2d& pose, const Beacon& beacon) {
  return wrap_angle(std::atan2(beacon.position.y() - pose.y(), beacon.position.x() - pose.x()) - pose.theta());
}

UpdateOutcome ekf_update_bearing(const EkfState& state, const BearingObservation& obs, const Beacon& beacon,
                                 const EkfNoise& noise) {
  if (obs.beacon_id != beacon.id) throw UnknownBeacon(obs.beacon_id);
  if (!(obs.sigma > 0)) throw std::invalid_argument("bearing observation sigma must be positive");
  const double qx = beacon.position.x() - state.mean.x();
  const double qy = beacon.position.y() - state.mean.y();
  const double q = qx * qx + qy * qy;
  if (std::sqrt(q) < 1e-6) {
    UpdateOutcome skipped;
    skipped.state = state;
    skipped.gated = true;
    return skipped;
  }
  const Eigen::RowVector3d h(qy / q, -qx / q, -1.0);
  const double innovation = wrap_angle(obs.bearing - expected_bearing(state.mean, beacon));
  return scalar_update(state, innovation, h, obs.sigma * obs.sigma, obs.timestamp, noise.gate_chi2);
}

int GridSpec::nx() const { return static_cast<int>(std::floor((x_max - x_min) / cell_m + 1e-9)) + 1; }
int GridSpec::ny() const { return static_cast<int>(std::floor((y_max - y_min) / cell_m + 1e-9)) + 1; }

TrilaterationResult trilaterate_grid(std::span<const RssiObservation> observations, const BeaconMap& beacons,
                                     double receiver_height, const GridSpec& grid) {
  if (!(grid.cell_m > 0) || !(grid.x_max >= grid.x_min) || !(grid.y_max >= grid.y_min))
    throw std::invalid_argument("trilaterate_grid: invalid grid");

  // Σ_i (r_i − h_b)² regrouped per beacon as n_b (mean_b − h_b)² + Σ_i (r_i − mean_b)²,
  // so each grid node costs one model evaluation per beacon.
  struct Group {
    const Beacon* beacon;
    double count = 0;
    double mean = 0;
    double scatter = 0;
  };
  std::map<BeaconId, std::vector<double>> by_beacon;
  for (const auto& o : observations) by_beacon[o.beacon_id].push_back(o.rssi);
  if (by_beacon.size() < 3)
    throw std::invalid_argument("trilaterate_grid: need observations of at least 3 distinct beacons, got " +
                                std::to_string(by_beacon.size()));

  std::vector<Group> groups;
  double constant = 0;
  for (const auto& [id, values] : by_beacon) {
    Group g{&beacons.at(id)};
    g.count = static_cast<double>(values.size());
    for (double v : values) g.mean += v;
    g.mean /= g.count;
    for (double v : values) g.scatter += (v - g.mean) * (v - g.mean);
    constant += g.scatter;
    groups.push_back(g);
  }

  TrilaterationResult best;
  best.residual = std::numeric_limits<double>::infinity();
  const int nx = grid.nx(), ny = grid.ny();
  for (int j = 0; j < ny; ++j) {
    const double y = grid.y(j);
    for (int i = 0; i < nx; ++i) {
      const double x = grid.x(i);
      const Pose2d node(x, y, 0.0);
      double residual = constant;
      for (const auto& g : groups) {
        const double e = g.mean - expected_rssi(node, *g.beacon, receiver_height);
        residual += g.count * e * e;
        if (residual >= best.residual) break;
      }
      if (residual < best.residual) {
        best.residual = residual;
        best.position = Eigen::Vector2d(x, y);
      }
    }
  }
  return best;
}

}  // namespace pog
