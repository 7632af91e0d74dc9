#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pog/io.hpp"
#include "pog/scenario_config.hpp"

using namespace pog;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory named after the running test.
fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "pog_tests" / (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error_key(const std::string& doc, const std::vector<ConfigOverride>& ov = {}) {
  try {
    parse_scenario(doc, ov);
  } catch (const ConfigError& e) {
    return e.key;
  }
  return "<no error>";
}

}  // namespace

TEST(FormatNumber, NineSignificantDigits) {
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(1.0 / 9.0), "0.111111111");
  EXPECT_EQ(format_number(-59.0), "-59");
  EXPECT_EQ(format_number(123456789012.0), "1.23456789e+11");
  EXPECT_EQ(quantize_serialized(1.0 / 3.0), 0.333333333);
}

TEST(Scenario, DefaultRoundTrip) {
  const ScenarioConfig d = ScenarioConfig::default_scenario();
  EXPECT_NO_THROW(d.validate());
  const std::string text = dump_scenario(d);
  EXPECT_EQ(dump_scenario(parse_scenario(text)), text);
  EXPECT_EQ(dump_scenario(parse_scenario("{}")), text);
}

TEST(Scenario, ShippedDefaultMatchesBuiltIn) {
  const ScenarioConfig shipped = load_scenario(fs::path(POG_SOURCE_DIR) / "scenarios" / "default.json");
  EXPECT_EQ(dump_scenario(shipped), dump_scenario(ScenarioConfig::default_scenario()));
}

TEST(Scenario, PartialDocumentLayersOverDefaults) {
  const ScenarioConfig c = parse_scenario(R"({"seed": 9, "rates": {"ble_hz": 5}, "noise": {"bearings": false}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.rates.ble_hz, 5.0);
  EXPECT_EQ(c.rates.odom_hz, 20.0);
  EXPECT_FALSE(c.noise.bearings);
}

TEST(Scenario, ExplicitBeacons) {
  const ScenarioConfig c = parse_scenario(
      R"({"world": {"beacons": {"list": [{"id": 4, "position": [1, 2, 2.5]}, {"id": 2, "position": [3, 4, 2.5], "n": 3}]}}})");
  ASSERT_EQ(c.beacons.explicit_beacons.size(), 2u);
  EXPECT_EQ(c.beacons.explicit_beacons[1].path_loss.n, 3.0);
  EXPECT_EQ(c.beacons.explicit_beacons[0].path_loss.n, c.beacons.path_loss.n);
  EXPECT_EQ(dump_scenario(parse_scenario(dump_scenario(c))), dump_scenario(c));
}

TEST(Scenario, ErrorsNameTheKey) {
  EXPECT_EQ(config_error_key(R"({"rates": {"ble_hz": 0}})"), "rates.ble_hz");
  EXPECT_EQ(config_error_key(R"({"rates": {"bel_hz": 10}})"), "rates.bel_hz");
  EXPECT_EQ(config_error_key(R"({"duration": "long"})"), "duration");
  EXPECT_EQ(config_error_key(R"({"noise": {"odometry_alphas": [0.1, 0.1]}})"), "noise.odometry_alphas");
  EXPECT_EQ(config_error_key(R"({"mapping": {"seed_source": "gps"}})"), "mapping.seed_source");
  EXPECT_EQ(config_error_key(R"({"trajectory": {"waypoints": [[1, 1]]}})"), "trajectory.waypoints");
  EXPECT_EQ(config_error_key(R"({"world": {"beacons": {"list": [{"id": 1, "position": [1, 1, 1]},
                                                                  {"id": 1, "position": [2, 2, 1]}]}}})"),
            "world.beacons.list[1].id");
  EXPECT_EQ(config_error_key("{not json"), "");
  EXPECT_EQ(config_error_key("[]"), "");
}

TEST(Scenario, Overrides) {
  const ScenarioConfig c = default_scenario_with({parse_override("rates.ble_hz=10"), parse_override("seed=42"),
                                                   parse_override("mapping.seed_source=truth")});
  EXPECT_EQ(c.rates.ble_hz, 10.0);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.mapping.seed_source, SeedSource::Truth);
  EXPECT_EQ(dump_scenario(default_scenario_with({parse_override("rates.ble_hz=10")})),
            dump_scenario(ScenarioConfig::default_scenario()));
  EXPECT_EQ(config_error_key("{}", {parse_override("rates.nope=1")}), "rates.nope");
  EXPECT_EQ(config_error_key("{}", {parse_override("camera.mount_pitch_deg=95")}), "camera.mount_pitch_deg");
  EXPECT_THROW(parse_override("no-equals"), ConfigError);
}

TEST(DepthPgm, RoundTripMillimeters) {
  const fs::path dir = scratch_dir();
  DepthMap d(4, 3);
  d.set(0, 0, 1.2344);
  d.set(3, 2, 9.9996);
  d.set(1, 1, 0.15);
  write_depth_pgm(dir / "d.pgm", d);
  const DepthMap r = read_depth_pgm(dir / "d.pgm", 10.0);
  ASSERT_EQ(r.width(), 4);
  ASSERT_EQ(r.height(), 3);
  EXPECT_DOUBLE_EQ(r.values(0, 0), 1.234);
  EXPECT_DOUBLE_EQ(r.values(2, 3), 10.0);
  EXPECT_DOUBLE_EQ(r.values(1, 1), 0.15);
  EXPECT_EQ(r.valid.count(), 3);
  // Depths beyond max_depth read back as invalid.
  EXPECT_EQ(read_depth_pgm(dir / "d.pgm", 5.0).valid.count(), 2);
}

TEST(DepthPgm, RejectsOtherFormats) {
  const fs::path dir = scratch_dir();
  write_text(dir / "p2.pgm", "P2\n2 2\n65535\n1 2 3 4\n");
  EXPECT_THROW(read_depth_pgm(dir / "p2.pgm", 10), ParseError);
  write_text(dir / "eight.pgm", std::string("P5\n2 1\n255\n") + "\x01\x02");
  EXPECT_THROW(read_depth_pgm(dir / "eight.pgm", 10), ParseError);
  write_text(dir / "short.pgm", std::string("P5\n2 2\n65535\n") + "\x01\x02");
  EXPECT_THROW(read_depth_pgm(dir / "short.pgm", 10), ParseError);
  EXPECT_THROW(read_depth_pgm(dir / "missing.pgm", 10), std::runtime_error);
}

TEST(Intrinsics, RoundTrip) {
  const fs::path dir = scratch_dir();
  CameraIntrinsics intr;
  intr.fx = 512.25;
  write_intrinsics(dir / "cam.intrinsics", intr);
  const CameraIntrinsics r = read_intrinsics(dir / "cam.intrinsics");
  EXPECT_EQ(r.fx, 512.25);
  EXPECT_EQ(r.width, intr.width);
  EXPECT_EQ(r.max_depth, intr.max_depth);
  write_text(dir / "bad.intrinsics", "500 500 320\n");
  EXPECT_THROW(read_intrinsics(dir / "bad.intrinsics"), ParseError);
}

TEST(HeightPgm, Encoding) {
  const fs::path dir = scratch_dir();
  HeightMap h;
  h.heights = DepthImage::Zero(1, 3);
  h.valid = ValidMask::Constant(1, 3, true);
  h.heights << 0.0, 0.25, -0.1;
  h.valid(0, 2) = false;
  write_height_pgm(dir / "h.pgm", h);
  const std::string bytes = read_text(dir / "h.pgm");
  const std::string header = "P5\n3 1\n65535\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  auto px = [&](int i) {
    return static_cast<unsigned char>(bytes[header.size() + 2 * i]) * 256 +
           static_cast<unsigned char>(bytes[header.size() + 2 * i + 1]);
  };
  EXPECT_EQ(px(0), 32768);
  EXPECT_EQ(px(1), 33018);
  EXPECT_EQ(px(2), 0);
}

TEST(ColorPpm, RoundTrip) {
  const fs::path dir = scratch_dir();
  ColorImage img(2, 2, {1, 2, 3});
  img.rgb[3] = {250, 128, 0};
  write_color_ppm(dir / "c.ppm", img);
  const ColorImage r = read_color_ppm(dir / "c.ppm");
  EXPECT_EQ(r.width, 2);
  EXPECT_EQ(r.rgb, img.rgb);
}

TEST(Ply, RoundTripWithColors) {
  const fs::path dir = scratch_dir();
  PointCloud c;
  c.points = {{0.1, -2, 3.25}, {1e-3, 0, 7}};
  c.colors = {Rgb{1, 2, 3}, Rgb{255, 0, 9}};
  write_ply(dir / "c.ply", c);
  const PointCloud r = read_ply(dir / "c.ply");
  EXPECT_EQ(r.points, c.points);
  EXPECT_EQ(r.colors, c.colors);

  PointCloud plain;
  plain.points = {{1, 2, 3}};
  std::ostringstream os;
  write_ply(os, plain);
  EXPECT_EQ(os.str(),
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\n"
            "end_header\n1 2 3\n");
}

TEST(Ply, ForeignHeaders) {
  const fs::path dir = scratch_dir();
  write_text(dir / "f.ply",
             "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\nproperty float x\nproperty float y\n"
             "property float z\nproperty float nx\nelement face 0\nproperty list uchar int vertex_indices\n"
             "end_header\n1 2 3 0\n4 5 6 1\n");
  const PointCloud r = read_ply(dir / "f.ply");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.points[1], Eigen::Vector3d(4, 5, 6));
  EXPECT_FALSE(r.has_colors());

  write_text(dir / "bin.ply", "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n");
  EXPECT_THROW(read_ply(dir / "bin.ply"), ParseError);
  write_text(dir / "short.ply",
             "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\n"
             "end_header\n1 2 3\n");
  EXPECT_THROW(read_ply(dir / "short.ply"), ParseError);
}

TEST(BeaconsCsv, RoundTripAndDuplicates) {
  const fs::path dir = scratch_dir();
  Beacon a;
  a.id = 7;
  a.position = Eigen::Vector3d(1.5, 2.25, 2.5);
  a.path_loss.n = 2.7;
  Beacon b = a;
  b.id = 3;
  write_beacons_csv(dir / "b.csv", {a, b});
  const BeaconMap m = read_beacons_csv(dir / "b.csv");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.at(7).position, a.position);
  EXPECT_EQ(m.at(7).path_loss.n, 2.7);
  write_text(dir / "dup.csv", "id,x,y,z,p0_dbm,n,d0,sigma_sh\n1,0,0,2,-59,2,1,2\n1,1,1,2,-59,2,1,2\n");
  try {
    read_beacons_csv(dir / "dup.csv");
    FAIL() << "duplicate id accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
  }
}

TEST(ObservationsCsv, RoundTrip) {
  const fs::path dir = scratch_dir();
  const std::vector<Observation> obs{OdometryDelta{0.01, 0.025, -0.02, 0.05}, RssiObservation{4, -71.25, 0.1},
                                     BearingObservation{4, 1.5, 0.1, 0.05}};
  write_observations_csv(dir / "o.csv", obs);
  EXPECT_EQ(read_text(dir / "o.csv"),
            "timestamp,type,beacon_id,p1,p2,p3\n0.05,odom,,0.01,0.025,-0.02\n0.1,rssi,4,-71.25,,\n"
            "0.1,bearing,4,1.5,0.05,\n");
  const auto r = read_observations_csv(dir / "o.csv");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(std::get<RssiObservation>(r[1]).rssi, -71.25);
  EXPECT_EQ(std::get<BearingObservation>(r[2]).sigma, 0.05);
  EXPECT_EQ(std::get<OdometryDelta>(r[0]).d_rot2, -0.02);
}

TEST(ObservationsCsv, Errors) {
  const fs::path dir = scratch_dir();
  write_text(dir / "empty.csv", "timestamp,type,beacon_id,p1,p2,p3\n");
  EXPECT_TRUE(read_observations_csv(dir / "empty.csv").empty());

  write_text(dir / "order.csv", "timestamp,type,beacon_id,p1,p2,p3\n0.2,rssi,1,-60,,\n0.1,rssi,1,-60,,\n");
  try {
    read_observations_csv(dir / "order.csv");
    FAIL() << "out-of-order timestamps accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
    EXPECT_NE(std::string(e.what()).find("order.csv:3"), std::string::npos);
  }
  write_text(dir / "type.csv", "timestamp,type,beacon_id,p1,p2,p3\n0.2,wifi,1,-60,,\n");
  EXPECT_THROW(read_observations_csv(dir / "type.csv"), ParseError);
  write_text(dir / "num.csv", "timestamp,type,beacon_id,p1,p2,p3\n0.2,rssi,1,loud,,\n");
  EXPECT_THROW(read_observations_csv(dir / "num.csv"), ParseError);
}

TEST(PosesCsv, PrefixedColumns) {
  const fs::path dir = scratch_dir();
  TrajectoryRow row;
  row.t = 0.5;
  row.truth = Pose2d(1, 2, 0.5);
  row.estimate = Pose2d(1.1, 2.1, 0.4);
  write_trajectory_csv(dir / "traj.csv", {row});
  const auto truth = read_poses_csv(dir / "traj.csv", "truth_");
  const auto est = read_poses_csv(dir / "traj.csv", "est_");
  ASSERT_EQ(truth.size(), 1u);
  EXPECT_EQ(truth[0].t, 0.5);
  EXPECT_EQ(truth[0].pose, row.truth);
  EXPECT_EQ(est[0].pose, row.estimate);

  write_estimates_csv(dir / "est.csv", {EstimateRow{0.5, Pose2d(3, 4, 0), 0.01}});
  EXPECT_EQ(read_poses_csv(dir / "est.csv", "est_")[0].pose, Pose2d(3, 4, 0));
  // Unprefixed columns are the fallback.
  EXPECT_EQ(read_poses_csv(dir / "est.csv", "nope_")[0].pose, Pose2d(3, 4, 0));
  write_text(dir / "odd.csv", "t,a,b\n1,2,3\n");
  EXPECT_THROW(read_poses_csv(dir / "odd.csv", "est_"), ParseError);
}

TEST(MetricsJson, Layout) {
  ScenarioMetrics m;
  m.fusion.rmse_xy_m = 1.0 / 3.0;
  m.fusion.matched = 5;
  const std::string text = metrics_json(m);
  EXPECT_NE(text.find("\"rmse_xy_m\": 0.333333333"), std::string::npos);
  EXPECT_NE(text.find("\"map_error\": null"), std::string::npos);
  m.map = MapErrorStats{0.01, 0.02, 0.0, 10};
  EXPECT_NE(metrics_json(m).find("\"points\": 10"), std::string::npos);
}
