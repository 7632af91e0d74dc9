#include "pog/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pog/depth.hpp"
#include "pog/io.hpp"
#include "pog/mapping.hpp"
#include "pog/scenario_config.hpp"
#include "pog/simulation.hpp"

namespace pog {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;

  void attach(CLI::App* app, bool needs_out) {
    app->add_option("--config", config, "Scenario JSON document")->check(CLI::ExistingFile);
    auto* o = app->add_option("--out", out, "Output directory");
    if (needs_out) o->required();
    app->add_option("--seed", seed, "Master random seed");
    app->add_option("--set", sets, "Override a config field, e.g. --set rates.ble_hz=10")->allow_extra_args(false);
  }

  ScenarioConfig scenario() const {
    std::vector<ConfigOverride> overrides;
    for (const auto& s : sets) overrides.push_back(parse_override(s));
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    return config.empty() ? default_scenario_with(overrides) : load_scenario(config, overrides);
  }

  fs::path out_dir() const {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
  }
};

int cmd_simulate(const Common& c, std::ostream& out) {
  const ScenarioConfig config = c.scenario();
  const SimLog log = run_scenario(config);
  const fs::path dir = c.out_dir();
  write_trajectory_csv(dir / "trajectory.csv", log.trajectory);
  write_observations_csv(dir / "observations.csv", log.observations);
  write_ply(dir / "map.ply", [&] {
    PointCloud cloud;
    cloud.points = log.map.representatives();
    return cloud;
  }());
  {
    std::ofstream m(dir / "metrics.json");
    m << metrics_json(log.metrics);
  }
  write_beacons_csv(dir / "beacons.csv", log.world.beacons);
  write_map_poses_csv(dir / "map_poses.csv", log.map_poses);
  out << "fusion rmse_xy_m " << format_number(log.metrics.fusion.rmse_xy_m) << "\n"
      << "dead_reckoning rmse_xy_m " << format_number(log.metrics.dead_reckoning.rmse_xy_m) << "\n"
      << "map_voxels " << log.metrics.map_voxels << "\n";
  return kExitOk;
}

struct Depth2CloudArgs {
  std::string depth;
  std::string intrinsics;
  std::string color;
  bool heightmap = false;
};

int cmd_depth2cloud(const Common& c, const Depth2CloudArgs& a, std::ostream& out) {
  const fs::path depth_path(a.depth);
  const fs::path intr_path = a.intrinsics.empty() ? fs::path(depth_path).replace_extension(".intrinsics")
                                                  : fs::path(a.intrinsics);
  if (!fs::exists(intr_path)) throw UsageError("intrinsics file not found: " + intr_path.string());
  const CameraIntrinsics intr = read_intrinsics(intr_path);
  const DepthMap depth = read_depth_pgm(depth_path, intr.max_depth);
  std::optional<ColorImage> color;
  if (!a.color.empty()) color = read_color_ppm(a.color);

  const PointCloud cloud = back_project(depth, intr, color);
  if (cloud.empty()) throw std::runtime_error("empty cloud: depth image has no valid pixels");
  const fs::path dir = c.out_dir();
  write_ply(dir / "cloud.ply", cloud);
  out << "points " << cloud.size() << "\n";
  if (a.heightmap) {
    std::mt19937_64 rng(c.seed.value_or(1));
    const Plane floor = fit_floor_plane(cloud, FloorFitParams{}, rng);
    write_height_pgm(dir / "heightmap.pgm", height_map(depth, intr, floor));
    out << "normal " << format_number(floor.normal.x()) << " " << format_number(floor.normal.y()) << " "
        << format_number(floor.normal.z()) << "\n"
        << "offset " << format_number(floor.offset) << "\n";
  }
  return kExitOk;
}

struct FuseArgs {
  std::string observations;
  std::string beacons;
};

int cmd_fuse(const Common& c, const FuseArgs& a, std::ostream& out) {
  const ScenarioConfig config = c.scenario();
  const BeaconMap beacons = read_beacons_csv(a.beacons);
  const auto observations = read_observations_csv(a.observations);
  const Pose2d start = Trajectory(config.trajectory).pose_at(0.0);
  const auto rows = fuse_observations(observations, beacons, config.filter, config.receiver_height, start);
  const fs::path dir = c.out_dir();
  write_estimates_csv(dir / "estimates.csv", rows);
  out << "observations " << observations.size() << "\nrows " << rows.size() << "\n";
  return kExitOk;
}

struct RegisterArgs {
  std::string source;
  std::string target;
  IcpParams icp;
};

int cmd_register(const Common& c, const RegisterArgs& a, std::ostream& out) {
  const PointCloud source = read_ply(a.source);
  const PointCloud target = read_ply(a.target);
  const IcpResult r = icp_register(source, target, RigidTransform3d::Identity(), a.icp);
  const fs::path dir = c.out_dir();
  write_ply(dir / "registered.ply", transformed(source, r.transform));

  const Eigen::Matrix4d m = r.transform.matrix();
  out << "transform";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) out << " " << format_number(m(i, j));
  out << "\nrmse " << format_number(r.rmse) << "\niterations " << r.iterations << "\nconverged "
      << (r.converged ? "true" : "false") << "\ncorrespondences " << r.correspondences << "\n";
  return kExitOk;
}

struct MetricsArgs {
  std::string estimated;
  std::string truth;
  std::string map;
  bool json = false;
};

void print_metrics(std::ostream& out, const json& j, bool as_json) {
  if (as_json) {
    out << j.dump(2) << "\n";
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    out << it.key() << " ";
    if (it->is_number_float())
      out << format_number(it->get<double>());
    else
      out << it->dump();
    out << "\n";
  }
}

int cmd_metrics(const Common& c, const MetricsArgs& a, std::ostream& out) {
  const auto q = quantize_serialized;
  if (!a.map.empty()) {
    if (c.config.empty()) throw UsageError("--map requires --config describing the world");
    const ScenarioConfig config = c.scenario();
    const World world = build_world(config);
    const PointCloud cloud = read_ply(a.map);
    const MapErrorStats s = map_error(cloud.points, config.mapping.voxel_size, world);
    print_metrics(out,
                  json{{"mean_abs_m", q(s.mean_abs_m)},
                       {"p95_abs_m", q(s.p95_abs_m)},
                       {"outlier_fraction", q(s.outlier_fraction)},
                       {"points", s.points}},
                  a.json);
    return kExitOk;
  }
  if (a.estimated.empty() || a.truth.empty())
    throw UsageError("metrics needs --estimated and --truth, or --map with --config");
  const auto estimated = read_poses_csv(a.estimated, "est_");
  const auto truth = read_poses_csv(a.truth, "truth_");
  const PoseErrorStats s = pose_rmse(estimated, truth);
  if (s.matched != estimated.size())
    throw std::runtime_error("timestamp mismatch: " + std::to_string(estimated.size() - s.matched) +
                             " estimated poses have no truth at the same time");
  print_metrics(out,
                json{{"rmse_xy_m", q(s.rmse_xy_m)},
                     {"rmse_theta_rad", q(s.rmse_theta_rad)},
                     {"max_xy_m", q(s.max_xy_m)},
                     {"matched", s.matched}},
                a.json);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Perception, BLE localization and mapping toolkit"};
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "Run a closed-loop scenario and export its logs");
  Common sim_common;
  sim_common.attach(simulate, true);

  auto* d2c = app.add_subcommand("depth2cloud", "Convert a 16-bit depth PGM into a PLY point cloud");
  Common d2c_common;
  d2c_common.attach(d2c, true);
  Depth2CloudArgs d2c_args;
  d2c->add_option("--depth", d2c_args.depth, "Depth image (16-bit PGM, millimeters)")->required()->check(CLI::ExistingFile);
  d2c->add_option("--intrinsics", d2c_args.intrinsics, "Intrinsics sidecar (default: <depth>.intrinsics)")
      ->check(CLI::ExistingFile);
  d2c->add_option("--color", d2c_args.color, "Color image (binary PPM)")->check(CLI::ExistingFile);
  d2c->add_flag("--heightmap", d2c_args.heightmap, "Fit the floor and write heightmap.pgm");

  auto* fuse = app.add_subcommand("fuse", "Replay an observation log through the EKF");
  Common fuse_common;
  fuse_common.attach(fuse, true);
  FuseArgs fuse_args;
  fuse->add_option("--observations", fuse_args.observations, "Observation CSV")->required()->check(CLI::ExistingFile);
  fuse->add_option("--beacons", fuse_args.beacons, "Beacon CSV")->required()->check(CLI::ExistingFile);

  auto* reg = app.add_subcommand("register", "Align a source PLY onto a target PLY with ICP");
  Common reg_common;
  reg_common.attach(reg, true);
  RegisterArgs reg_args;
  reg->add_option("--source", reg_args.source, "Source cloud (PLY)")->required()->check(CLI::ExistingFile);
  reg->add_option("--target", reg_args.target, "Target cloud (PLY)")->required()->check(CLI::ExistingFile);
  reg->add_option("--max-iterations", reg_args.icp.max_iterations, "ICP iteration cap");
  reg->add_option("--max-correspondence", reg_args.icp.max_correspondence_m, "Correspondence distance, m");
  reg->add_option("--convergence-eps", reg_args.icp.convergence_eps, "RMSE change threshold, m");
  reg->add_option("--min-correspondences", reg_args.icp.min_correspondences, "Starvation threshold");

  auto* metrics = app.add_subcommand("metrics", "Score a trajectory or a map");
  Common metrics_common;
  metrics_common.attach(metrics, false);
  MetricsArgs metrics_args;
  metrics->add_option("--estimated", metrics_args.estimated, "Estimated poses CSV")->check(CLI::ExistingFile);
  metrics->add_option("--truth", metrics_args.truth, "Ground-truth poses CSV")->check(CLI::ExistingFile);
  metrics->add_option("--map", metrics_args.map, "Map PLY, scored against the --config world")
      ->check(CLI::ExistingFile);
  metrics->add_flag("--json", metrics_args.json, "Print JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim_common, out);
    if (*d2c) return cmd_depth2cloud(d2c_common, d2c_args, out);
    if (*fuse) return cmd_fuse(fuse_common, fuse_args, out);
    if (*reg) return cmd_register(reg_common, reg_args, out);
    if (*metrics) return cmd_metrics(metrics_common, metrics_args, out);
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnknownBeacon& e) {
    err << "error: unknown beacon id " << e.id << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace pog
