#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pog/ble.hpp"
#include "pog/depth.hpp"
#include "pog/simulation.hpp"

namespace pog {

/// Numbers in every text output use 9 significant digits.
std::string format_number(double v);

/// Value after a round trip through format_number.
double quantize_serialized(double v);

struct ParseError : std::runtime_error {
  ParseError(std::string file, std::size_t line, const std::string& message);
  std::string file;
  std::size_t line;
};

// --- depth images -------------------------------------------------------
// 16-bit binary PGM (P5, big-endian), one unit per millimeter, 0 = invalid.
// Intrinsics live in a sidecar text file: "fx fy cx cy width height max_depth".

void write_depth_pgm(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth_pgm(const std::filesystem::path& path, double max_depth);

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& intr);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);

/// Heights stored as round(h·1000) + 32768 in a 16-bit PGM; 0 marks invalid.
void write_height_pgm(const std::filesystem::path& path, const HeightMap& heights);

/// 8-bit binary PPM (P6).
ColorImage read_color_ppm(const std::filesystem::path& path);
void write_color_ppm(const std::filesystem::path& path, const ColorImage& image);

// --- point clouds -------------------------------------------------------

void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
void write_ply(std::ostream& out, const PointCloud& cloud);
/// Reads ASCII PLY files with x y z [red green blue] vertex properties.
PointCloud read_ply(const std::filesystem::path& path);

// --- BLE ----------------------------------------------------------------

/// Header: id,x,y,z,p0_dbm,n,d0,sigma_sh
void write_beacons_csv(const std::filesystem::path& path, const std::vector<Beacon>& beacons);
BeaconMap read_beacons_csv(const std::filesystem::path& path);

/// Header: timestamp,type,beacon_id,p1,p2,p3
///   odom:    p1 = d_rot1, p2 = d_trans, p3 = d_rot2
///   rssi:    p1 = rssi (dBm)
///   bearing: p1 = bearing (rad), p2 = sigma (rad)
void write_observations_csv(const std::filesystem::path& path, const std::vector<Observation>& observations);
/// Throws ParseError (with the line number) on malformed rows or decreasing timestamps.
std::vector<Observation> read_observations_csv(const std::filesystem::path& path);

// --- trajectories and metrics -------------------------------------------

/// Header: t,truth_x,truth_y,truth_theta,est_x,est_y,est_theta,cov_trace
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);

/// Header: t,x,y,theta,cov_trace
void write_estimates_csv(const std::filesystem::path& path, const std::vector<EstimateRow>& rows);

/// Header: timestamp,x,y,theta,converged,rmse
void write_map_poses_csv(const std::filesystem::path& path, const std::vector<MapPoseRow>& rows);

/// Reads timestamped poses from a CSV with a t/timestamp column and
/// x/y/theta columns. `prefix` selects e.g. "truth_" or "est_" columns;
/// unprefixed names are the fallback.
std::vector<TimedPose> read_poses_csv(const std::filesystem::path& path, const std::string& prefix = "");

std::string metrics_json(const ScenarioMetrics& metrics);

}  // namespace pog
