#include "pog/scenario_config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace pog {

using json = nlohmann::ordered_json;

ConfigError::ConfigError(std::string k, const std::string& message)
    : std::runtime_error(k.empty() ? message : k + ": " + message), key(std::move(k)) {}

void TrajectorySpec::validate() const {
  if (waypoints.size() < 2) throw ConfigError("trajectory.waypoints", "at least 2 waypoints required");
  for (const auto& w : waypoints)
    if (!w.allFinite()) throw ConfigError("trajectory.waypoints", "waypoints must be finite");
  if (!(speed > 0) || !std::isfinite(speed)) throw ConfigError("trajectory.speed", "must be positive");
  if (!(turn_rate > 0) || !std::isfinite(turn_rate)) throw ConfigError("trajectory.turn_rate", "must be positive");
}

RigidTransform3d CameraConfig::mount() const {
  return forward_camera_mount(mount_position, mount_pitch_deg * std::numbers::pi / 180.0);
}

ScenarioConfig ScenarioConfig::default_scenario() {
  ScenarioConfig c;
  c.world.floor = Eigen::AlignedBox2d(Eigen::Vector2d(0, 0), Eigen::Vector2d(20, 10));
  auto box = [](double x0, double y0, double z0, double x1, double y1, double z1) {
    return Eigen::AlignedBox3d(Eigen::Vector3d(x0, y0, z0), Eigen::Vector3d(x1, y1, z1));
  };
  c.world.obstacles = {
      box(5.0, 4.2, 0.0, 9.0, 5.8, 1.8),     // shelf row
      box(11.0, 4.2, 0.0, 15.0, 5.8, 1.8),   // shelf row
      box(9.6, 4.6, 0.0, 10.4, 5.4, 0.9),    // display between the shelves
      box(1.0, 0.4, 0.0, 1.6, 1.0, 0.5),     // products near the corners
      box(18.4, 0.5, 0.0, 19.2, 1.1, 0.8),
      box(18.5, 8.8, 0.0, 19.3, 9.5, 0.6),
      box(0.6, 8.9, 0.0, 1.4, 9.5, 1.0),
  };
  c.trajectory.waypoints = {{3, 2}, {17, 2}, {17, 8}, {3, 8}, {3, 2}};
  return c;
}

namespace {

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

void require_finite_nonneg(double v, const std::string& key) {
  require(std::isfinite(v) && v >= 0, key, "must be finite and nonnegative");
}

void require_positive(double v, const std::string& key) {
  require(std::isfinite(v) && v > 0, key, "must be positive");
}

}  // namespace

void ScenarioConfig::validate() const {
  require(world.floor.min().allFinite() && world.floor.max().allFinite() &&
              (world.floor.min().array() < world.floor.max().array()).all(),
          "world.floor_min", "floor rectangle must have floor_min < floor_max");
  for (std::size_t i = 0; i < world.obstacles.size(); ++i) {
    const auto& b = world.obstacles[i];
    require(b.min().allFinite() && b.max().allFinite() && (b.min().array() < b.max().array()).all(),
            "world.obstacles[" + std::to_string(i) + "]", "box needs min < max on every axis");
  }
  require_positive(walls.height, "world.walls.height");
  require_positive(walls.thickness, "world.walls.thickness");

  require(beacons.count >= 0, "world.beacons.count", "must be nonnegative");
  require(std::isfinite(beacons.height), "world.beacons.height", "must be finite");
  require_finite_nonneg(beacons.margin, "world.beacons.margin");
  require(2 * beacons.margin < world.floor.sizes().minCoeff(), "world.beacons.margin", "leaves no room on the floor");
  try {
    beacons.path_loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("world.beacons", e.what());
  }
  std::set<BeaconId> ids;
  for (std::size_t i = 0; i < beacons.explicit_beacons.size(); ++i) {
    const auto& b = beacons.explicit_beacons[i];
    const std::string key = "world.beacons.list[" + std::to_string(i) + "]";
    require(ids.insert(b.id).second, key + ".id", "duplicate beacon id");
    require(b.position.allFinite(), key + ".position", "must be finite");
    require(world.floor.contains(Eigen::Vector2d(b.position.head<2>())), key + ".position",
            "beacon lies outside the floor");
    try {
      b.path_loss.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  }

  trajectory.validate();

  require(camera.intrinsics.valid(), "camera", "invalid intrinsics");
  require(camera.mount_position.allFinite(), "camera.mount_position", "must be finite");
  require(std::isfinite(camera.mount_pitch_deg) && std::abs(camera.mount_pitch_deg) < 90, "camera.mount_pitch_deg",
          "must be within (-90, 90)");

  require_positive(rates.depth_hz, "rates.depth_hz");
  require_positive(rates.ble_hz, "rates.ble_hz");
  require_positive(rates.odom_hz, "rates.odom_hz");

  for (double a : noise.odometry_alphas) require_finite_nonneg(a, "noise.odometry_alphas");
  require_finite_nonneg(noise.depth_sigma_rel, "noise.depth_sigma_rel");
  require_finite_nonneg(noise.bearing_sigma, "noise.bearing_sigma");

  try {
    filter.noise.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("filter", e.what());
  }
  require_finite_nonneg(filter.rssi_sigma_floor, "filter.rssi_sigma_floor");
  require_positive(filter.bearing_sigma_floor, "filter.bearing_sigma_floor");
  require_positive(filter.initial_sigma_xy, "filter.initial_sigma_xy");
  require_positive(filter.initial_sigma_theta, "filter.initial_sigma_theta");

  require_positive(mapping.voxel_size, "mapping.voxel_size");
  try {
    mapping.icp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("mapping", e.what());
  }

  require(std::isfinite(receiver_height), "receiver_height", "must be finite");
  require(std::isfinite(duration) && duration >= 0, "duration", "must be finite and nonnegative");
}

ConfigOverride parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("", "override must look like key=value");
  return {std::string(text.substr(0, eq)), std::string(text.substr(eq + 1))};
}

namespace {

/// Typed, strict access to one JSON object; every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(key(it.key()), "unknown field");
  }

  const json* find(const std::string& name) {
    used_.insert(name);
    auto it = j_.find(name);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  void number(const std::string& name, double& out) {
    if (auto* v = find(name)) out = as_number(*v, key(name));
  }
  void integer(const std::string& name, int& out) {
    if (auto* v = find(name)) {
      if (!v->is_number_integer()) throw ConfigError(key(name), "expected an integer");
      out = v->get<int>();
    }
  }
  void boolean(const std::string& name, bool& out) {
    if (auto* v = find(name)) {
      if (!v->is_boolean()) throw ConfigError(key(name), "expected true or false");
      out = v->get<bool>();
    }
  }
  template <int N>
  void vector(const std::string& name, Eigen::Matrix<double, N, 1>& out) {
    if (auto* v = find(name)) out = as_vector<N>(*v, key(name));
  }

  static double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "expected a number");
    return v.get<double>();
  }

  template <int N>
  static Eigen::Matrix<double, N, 1> as_vector(const json& v, const std::string& key) {
    if (!v.is_array() || v.size() != N) throw ConfigError(key, "expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) out[i] = as_number(v[i], key);
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_path_loss(Section& s, PathLossParams& pl) {
  s.number("p0_dbm", pl.p0_dbm);
  s.number("n", pl.n);
  s.number("d0", pl.d0);
  s.number("sigma_sh", pl.sigma_sh);
}

void read_world(Section& s, ScenarioConfig& c) {
  Eigen::Vector2d lo = c.world.floor.min(), hi = c.world.floor.max();
  s.vector<2>("floor_min", lo);
  s.vector<2>("floor_max", hi);
  c.world.floor = Eigen::AlignedBox2d(lo, hi);
  if (auto* obs = s.find("obstacles")) {
    const std::string key = s.key("obstacles");
    if (!obs->is_array()) throw ConfigError(key, "expected an array");
    c.world.obstacles.clear();
    for (std::size_t i = 0; i < obs->size(); ++i) {
      Section b((*obs)[i], key + "[" + std::to_string(i) + "]");
      Eigen::Vector3d mn = Eigen::Vector3d::Zero(), mx = Eigen::Vector3d::Zero();
      if (!b.find("min") || !b.find("max")) throw ConfigError(b.key("min"), "box needs min and max");
      b.vector<3>("min", mn);
      b.vector<3>("max", mx);
      c.world.obstacles.emplace_back(mn, mx);
    }
  }
  if (auto* w = s.find("walls")) {
    Section ws(*w, s.key("walls"));
    ws.boolean("enabled", c.walls.enabled);
    ws.number("height", c.walls.height);
    ws.number("thickness", c.walls.thickness);
  }
  if (auto* b = s.find("beacons")) {
    Section bs(*b, s.key("beacons"));
    bs.integer("count", c.beacons.count);
    bs.number("height", c.beacons.height);
    bs.number("margin", c.beacons.margin);
    read_path_loss(bs, c.beacons.path_loss);
    if (auto* list = bs.find("list")) {
      const std::string key = bs.key("list");
      if (!list->is_array()) throw ConfigError(key, "expected an array");
      c.beacons.explicit_beacons.clear();
      for (std::size_t i = 0; i < list->size(); ++i) {
        Section e((*list)[i], key + "[" + std::to_string(i) + "]");
        Beacon beacon;
        beacon.path_loss = c.beacons.path_loss;
        auto* id = e.find("id");
        if (!id || !id->is_number_unsigned() || id->get<std::uint64_t>() > 0xffffffffULL)
          throw ConfigError(e.key("id"), "expected a nonnegative integer id");
        beacon.id = id->get<BeaconId>();
        if (!e.find("position")) throw ConfigError(e.key("position"), "missing");
        e.vector<3>("position", beacon.position);
        read_path_loss(e, beacon.path_loss);
        c.beacons.explicit_beacons.push_back(beacon);
      }
    }
  }
}

void read_config(const json& doc, ScenarioConfig& c) {
  Section root(doc, "");
  if (auto* seed = root.find("seed")) {
    if (!seed->is_number_unsigned()) throw ConfigError("seed", "expected a nonnegative integer");
    c.seed = seed->get<std::uint64_t>();
  }
  root.number("duration", c.duration);
  root.number("receiver_height", c.receiver_height);

  if (auto* w = root.find("world")) {
    Section s(*w, "world");
    read_world(s, c);
  }
  if (auto* t = root.find("trajectory")) {
    Section s(*t, "trajectory");
    if (auto* wp = s.find("waypoints")) {
      if (!wp->is_array()) throw ConfigError("trajectory.waypoints", "expected an array of [x, y] pairs");
      c.trajectory.waypoints.clear();
      for (const auto& p : *wp) c.trajectory.waypoints.push_back(Section::as_vector<2>(p, "trajectory.waypoints"));
    }
    s.number("speed", c.trajectory.speed);
    s.number("turn_rate", c.trajectory.turn_rate);
  }
  if (auto* cam = root.find("camera")) {
    Section s(*cam, "camera");
    auto& in = c.camera.intrinsics;
    s.number("fx", in.fx);
    s.number("fy", in.fy);
    s.number("cx", in.cx);
    s.number("cy", in.cy);
    s.integer("width", in.width);
    s.integer("height", in.height);
    s.number("max_depth", in.max_depth);
    s.vector<3>("mount_position", c.camera.mount_position);
    s.number("mount_pitch_deg", c.camera.mount_pitch_deg);
  }
  if (auto* r = root.find("rates")) {
    Section s(*r, "rates");
    s.number("depth_hz", c.rates.depth_hz);
    s.number("ble_hz", c.rates.ble_hz);
    s.number("odom_hz", c.rates.odom_hz);
  }
  if (auto* n = root.find("noise")) {
    Section s(*n, "noise");
    if (auto* a = s.find("odometry_alphas")) {
      const auto v = Section::as_vector<4>(*a, "noise.odometry_alphas");
      for (int i = 0; i < 4; ++i) c.noise.odometry_alphas[i] = v[i];
    }
    s.number("depth_sigma_rel", c.noise.depth_sigma_rel);
    s.boolean("depth_quantize_mm", c.noise.depth_quantize_mm);
    s.number("bearing_sigma", c.noise.bearing_sigma);
    s.boolean("bearings", c.noise.bearings);
  }
  if (auto* f = root.find("filter")) {
    Section s(*f, "filter");
    if (auto* a = s.find("alphas")) {
      const auto v = Section::as_vector<4>(*a, "filter.alphas");
      c.filter.noise.alpha1 = v[0];
      c.filter.noise.alpha2 = v[1];
      c.filter.noise.alpha3 = v[2];
      c.filter.noise.alpha4 = v[3];
    }
    s.number("gate_chi2", c.filter.noise.gate_chi2);
    s.number("rssi_sigma_floor", c.filter.rssi_sigma_floor);
    s.number("bearing_sigma_floor", c.filter.bearing_sigma_floor);
    s.number("initial_sigma_xy", c.filter.initial_sigma_xy);
    s.number("initial_sigma_theta", c.filter.initial_sigma_theta);
  }
  if (auto* m = root.find("mapping")) {
    Section s(*m, "mapping");
    s.boolean("enabled", c.mapping.enabled);
    s.number("voxel_size", c.mapping.voxel_size);
    if (auto* src = s.find("seed_source")) {
      if (*src == "ekf")
        c.mapping.seed_source = SeedSource::Ekf;
      else if (*src == "truth")
        c.mapping.seed_source = SeedSource::Truth;
      else
        throw ConfigError("mapping.seed_source", "expected \"ekf\" or \"truth\"");
    }
    s.integer("max_iterations", c.mapping.icp.max_iterations);
    s.number("max_correspondence_m", c.mapping.icp.max_correspondence_m);
    s.number("convergence_eps", c.mapping.icp.convergence_eps);
    s.integer("min_correspondences", c.mapping.icp.min_correspondences);
    s.boolean("keep_depth_frames", c.mapping.keep_depth_frames);
  }
}

void apply_override(json& doc, const ConfigOverride& ov) {
  json value;
  try {
    value = json::parse(ov.second);
  } catch (const json::parse_error&) {
    value = ov.second;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = ov.first.find('.', start);
    const std::string part = ov.first.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(ov.first, "malformed override key");
    if (!node->is_object()) throw ConfigError(ov.first, "override path crosses a non-object field");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ScenarioConfig build(json doc, const std::vector<ConfigOverride>& overrides) {
  if (!doc.is_object()) throw ConfigError("", "scenario document must be a JSON object");
  for (const auto& ov : overrides) apply_override(doc, ov);
  ScenarioConfig c = ScenarioConfig::default_scenario();
  try {
    read_config(doc, c);
  } catch (const json::exception& e) {
    throw ConfigError("", e.what());
  }
  c.validate();
  return c;
}

}  // namespace

ScenarioConfig parse_scenario(std::string_view text, const std::vector<ConfigOverride>& overrides) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  return build(std::move(doc), overrides);
}

ScenarioConfig load_scenario(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), overrides);
}

ScenarioConfig default_scenario_with(const std::vector<ConfigOverride>& overrides) {
  return build(json::object(), overrides);
}

std::string dump_scenario(const ScenarioConfig& c) {
  auto vec = [](const auto& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  auto path_loss = [](json& j, const PathLossParams& pl) {
    j["p0_dbm"] = pl.p0_dbm;
    j["n"] = pl.n;
    j["d0"] = pl.d0;
    j["sigma_sh"] = pl.sigma_sh;
  };

  json doc;
  doc["seed"] = c.seed;
  doc["duration"] = c.duration;
  doc["receiver_height"] = c.receiver_height;

  json world;
  world["floor_min"] = vec(c.world.floor.min());
  world["floor_max"] = vec(c.world.floor.max());
  world["obstacles"] = json::array();
  for (const auto& b : c.world.obstacles) world["obstacles"].push_back({{"min", vec(b.min())}, {"max", vec(b.max())}});
  world["walls"] = {{"enabled", c.walls.enabled}, {"height", c.walls.height}, {"thickness", c.walls.thickness}};
  json beacons;
  beacons["count"] = c.beacons.count;
  beacons["height"] = c.beacons.height;
  beacons["margin"] = c.beacons.margin;
  path_loss(beacons, c.beacons.path_loss);
  beacons["list"] = json::array();
  for (const auto& b : c.beacons.explicit_beacons) {
    json e{{"id", b.id}, {"position", vec(b.position)}};
    path_loss(e, b.path_loss);
    beacons["list"].push_back(e);
  }
  world["beacons"] = beacons;
  doc["world"] = world;

  json traj;
  traj["waypoints"] = json::array();
  for (const auto& w : c.trajectory.waypoints) traj["waypoints"].push_back(vec(w));
  traj["speed"] = c.trajectory.speed;
  traj["turn_rate"] = c.trajectory.turn_rate;
  doc["trajectory"] = traj;

  const auto& in = c.camera.intrinsics;
  doc["camera"] = {{"fx", in.fx},
                   {"fy", in.fy},
                   {"cx", in.cx},
                   {"cy", in.cy},
                   {"width", in.width},
                   {"height", in.height},
                   {"max_depth", in.max_depth},
                   {"mount_position", vec(c.camera.mount_position)},
                   {"mount_pitch_deg", c.camera.mount_pitch_deg}};
  doc["rates"] = {{"depth_hz", c.rates.depth_hz}, {"ble_hz", c.rates.ble_hz}, {"odom_hz", c.rates.odom_hz}};
  doc["noise"] = {{"odometry_alphas", c.noise.odometry_alphas},
                  {"depth_sigma_rel", c.noise.depth_sigma_rel},
                  {"depth_quantize_mm", c.noise.depth_quantize_mm},
                  {"bearing_sigma", c.noise.bearing_sigma},
                  {"bearings", c.noise.bearings}};
  const auto& fn = c.filter.noise;
  doc["filter"] = {{"alphas", {fn.alpha1, fn.alpha2, fn.alpha3, fn.alpha4}},
                   {"gate_chi2", fn.gate_chi2},
                   {"rssi_sigma_floor", c.filter.rssi_sigma_floor},
                   {"bearing_sigma_floor", c.filter.bearing_sigma_floor},
                   {"initial_sigma_xy", c.filter.initial_sigma_xy},
                   {"initial_sigma_theta", c.filter.initial_sigma_theta}};
  doc["mapping"] = {{"enabled", c.mapping.enabled},
                    {"voxel_size", c.mapping.voxel_size},
                    {"seed_source", c.mapping.seed_source == SeedSource::Truth ? "truth" : "ekf"},
                    {"max_iterations", c.mapping.icp.max_iterations},
                    {"max_correspondence_m", c.mapping.icp.max_correspondence_m},
                    {"convergence_eps", c.mapping.icp.convergence_eps},
                    {"min_correspondences", c.mapping.icp.min_correspondences},
                    {"keep_depth_frames", c.mapping.keep_depth_frames}};
  return doc.dump(2) + "\n";
}

}  // namespace pog
