#include "pog/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pog {

namespace fs = std::filesystem;

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double quantize_serialized(double v) { return std::strtod(format_number(v).c_str(), nullptr); }

ParseError::ParseError(std::string f, std::size_t l, const std::string& message)
    : std::runtime_error(f + ":" + std::to_string(l) + ": " + message), file(std::move(f)), line(l) {}

namespace {

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& file, std::size_t line, const std::string& what) {
  if (s.empty()) throw ParseError(file, line, "missing " + what);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
    throw ParseError(file, line, "bad " + what + " '" + s + "'");
  return v;
}

BeaconId parse_id(const std::string& s, const std::string& file, std::size_t line) {
  if (s.empty()) throw ParseError(file, line, "missing beacon id");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || s.front() == '-' || v > 0xffffffffULL)
    throw ParseError(file, line, "bad beacon id '" + s + "'");
  return static_cast<BeaconId>(v);
}

/// Reads the next whitespace-separated PNM header token, skipping comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const fs::path& path) {
  PnmHeader h;
  h.magic = pnm_token(in);
  try {
    h.width = std::stoi(pnm_token(in));
    h.height = std::stoi(pnm_token(in));
    h.maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw ParseError(path.string(), 1, "malformed PNM header");
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535)
    throw ParseError(path.string(), 1, "invalid PNM dimensions or maxval");
  return h;
}

void write_u16_pgm(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& data) {
  auto out = open_out(path, true);
  out << "P5\n" << width << " " << height << "\n65535\n";
  for (auto v : data) {
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
    out.write(bytes, 2);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

void write_depth_pgm(const fs::path& path, const DepthMap& depth) {
  std::vector<std::uint16_t> data(static_cast<std::size_t>(depth.width()) * depth.height(), 0);
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (!depth.valid(v, u)) continue;
      const double mm = std::round(depth.values(v, u) * 1000.0);
      if (mm < 1 || mm > 65535) throw std::out_of_range("depth outside the 16-bit millimeter range");
      data[static_cast<std::size_t>(v) * depth.width() + u] = static_cast<std::uint16_t>(mm);
    }
  }
  write_u16_pgm(path, depth.width(), depth.height(), data);
}

DepthMap read_depth_pgm(const fs::path& path, double max_depth) {
  auto in = open_in(path, true);
  const auto h = read_pnm_header(in, path);
  if (h.magic != "P5") throw ParseError(path.string(), 1, "expected binary PGM (P5)");
  if (h.maxval < 256) throw ParseError(path.string(), 1, "expected a 16-bit PGM");
  DepthMap depth(h.width, h.height);
  for (int v = 0; v < h.height; ++v) {
    for (int u = 0; u < h.width; ++u) {
      unsigned char b[2];
      if (!in.read(reinterpret_cast<char*>(b), 2)) throw ParseError(path.string(), 1, "truncated pixel data");
      const int mm = (b[0] << 8) | b[1];
      const double z = mm / 1000.0;
      if (mm > 0 && z <= max_depth) depth.set(u, v, z);
    }
  }
  return depth;
}

void write_intrinsics(const fs::path& path, const CameraIntrinsics& intr) {
  auto out = open_out(path);
  out << format_number(intr.fx) << " " << format_number(intr.fy) << " " << format_number(intr.cx) << " "
      << format_number(intr.cy) << " " << intr.width << " " << intr.height << " " << format_number(intr.max_depth)
      << "\n";
}

CameraIntrinsics read_intrinsics(const fs::path& path) {
  auto in = open_in(path);
  CameraIntrinsics intr;
  if (!(in >> intr.fx >> intr.fy >> intr.cx >> intr.cy >> intr.width >> intr.height >> intr.max_depth))
    throw ParseError(path.string(), 1, "expected 'fx fy cx cy width height max_depth'");
  if (!intr.valid()) throw ParseError(path.string(), 1, "invalid camera intrinsics");
  return intr;
}

void write_height_pgm(const fs::path& path, const HeightMap& heights) {
  std::vector<std::uint16_t> data(static_cast<std::size_t>(heights.width()) * heights.height(), 0);
  for (int v = 0; v < heights.height(); ++v) {
    for (int u = 0; u < heights.width(); ++u) {
      if (!heights.valid(v, u)) continue;
      const double code = std::clamp(std::round(heights.heights(v, u) * 1000.0) + 32768.0, 1.0, 65535.0);
      data[static_cast<std::size_t>(v) * heights.width() + u] = static_cast<std::uint16_t>(code);
    }
  }
  write_u16_pgm(path, heights.width(), heights.height(), data);
}

ColorImage read_color_ppm(const fs::path& path) {
  auto in = open_in(path, true);
  const auto h = read_pnm_header(in, path);
  if (h.magic != "P6" || h.maxval > 255) throw ParseError(path.string(), 1, "expected 8-bit binary PPM (P6)");
  ColorImage img(h.width, h.height);
  for (auto& px : img.rgb)
    if (!in.read(reinterpret_cast<char*>(px.data()), 3)) throw ParseError(path.string(), 1, "truncated pixel data");
  return img;
}

void write_color_ppm(const fs::path& path, const ColorImage& image) {
  auto out = open_out(path, true);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (const auto& px : image.rgb) out.write(reinterpret_cast<const char*>(px.data()), 3);
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
  cloud.validate();
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << format_number(p.x()) << " " << format_number(p.y()) << " " << format_number(p.z());
    if (cloud.has_colors())
      out << " " << int(cloud.colors[i][0]) << " " << int(cloud.colors[i][1]) << " " << int(cloud.colors[i][2]);
    out << "\n";
  }
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_ply(out, cloud);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

PointCloud read_ply(const fs::path& path) {
  auto in = open_in(path);
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") throw ParseError(file, 1, "not a PLY file");

  std::size_t vertices = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<std::string> props;
  while (true) {
    if (!next()) throw ParseError(file, line_no, "missing end_header");
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") throw ParseError(file, line_no, "only ASCII PLY is supported");
    } else if (kw == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) {
        if (seen_vertex) throw ParseError(file, line_no, "duplicate vertex element");
        vertices = count;
        seen_vertex = true;
      } else if (!seen_vertex) {
        throw ParseError(file, line_no, "vertex element must come first");
      }
    } else if (kw == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      if (type == "list") throw ParseError(file, line_no, "list properties on vertices are not supported");
      props.push_back(name);
    }
  }
  auto index_of = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(file, line_no, "vertex element lacks x/y/z");
  const int ir = index_of("red"), ig = index_of("green"), ib = index_of("blue");
  const bool colors = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  cloud.points.reserve(vertices);
  std::vector<double> values(props.size());
  for (std::size_t k = 0; k < vertices; ++k) {
    if (!next()) throw ParseError(file, line_no, "expected " + std::to_string(vertices) + " vertices");
    std::istringstream ss(line);
    for (auto& v : values)
      if (!(ss >> v)) throw ParseError(file, line_no, "malformed vertex");
    cloud.points.emplace_back(values[ix], values[iy], values[iz]);
    if (colors)
      cloud.colors.push_back({static_cast<std::uint8_t>(values[ir]), static_cast<std::uint8_t>(values[ig]),
                              static_cast<std::uint8_t>(values[ib])});
  }
  cloud.validate();
  return cloud;
}

void write_beacons_csv(const fs::path& path, const std::vector<Beacon>& beacons) {
  auto out = open_out(path);
  out << "id,x,y,z,p0_dbm,n,d0,sigma_sh\n";
  for (const auto& b : beacons) {
    out << b.id << "," << format_number(b.position.x()) << "," << format_number(b.position.y()) << ","
        << format_number(b.position.z()) << "," << format_number(b.path_loss.p0_dbm) << ","
        << format_number(b.path_loss.n) << "," << format_number(b.path_loss.d0) << ","
        << format_number(b.path_loss.sigma_sh) << "\n";
  }
}

BeaconMap read_beacons_csv(const fs::path& path) {
  auto in = open_in(path);
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(file, 1, "missing header");
  ++line_no;
  BeaconMap map;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw ParseError(file, line_no, "expected 8 columns");
    Beacon b;
    b.id = parse_id(cells[0], file, line_no);
    b.position = Eigen::Vector3d(parse_double(cells[1], file, line_no, "x"), parse_double(cells[2], file, line_no, "y"),
                                 parse_double(cells[3], file, line_no, "z"));
    b.path_loss.p0_dbm = parse_double(cells[4], file, line_no, "p0_dbm");
    b.path_loss.n = parse_double(cells[5], file, line_no, "n");
    b.path_loss.d0 = parse_double(cells[6], file, line_no, "d0");
    b.path_loss.sigma_sh = parse_double(cells[7], file, line_no, "sigma_sh");
    try {
      map.add(b);
    } catch (const std::invalid_argument& e) {
      throw ParseError(file, line_no, e.what());
    }
  }
  return map;
}

void write_observations_csv(const fs::path& path, const std::vector<Observation>& observations) {
  auto out = open_out(path);
  out << "timestamp,type,beacon_id,p1,p2,p3\n";
  for (const auto& obs : observations) {
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, OdometryDelta>) {
            out << format_number(o.timestamp) << ",odom,," << format_number(o.d_rot1) << ","
                << format_number(o.d_trans) << "," << format_number(o.d_rot2) << "\n";
          } else if constexpr (std::is_same_v<T, RssiObservation>) {
            out << format_number(o.timestamp) << ",rssi," << o.beacon_id << "," << format_number(o.rssi) << ",,\n";
          } else {
            out << format_number(o.timestamp) << ",bearing," << o.beacon_id << "," << format_number(o.bearing) << ","
                << format_number(o.sigma) << ",\n";
          }
        },
        obs);
  }
}

std::vector<Observation> read_observations_csv(const fs::path& path) {
  auto in = open_in(path);
  const std::string file = path.string();
  std::string line;
  std::size_t line_no = 0;
  std::vector<Observation> out;
  if (!std::getline(in, line)) return out;
  ++line_no;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    cells.resize(std::max<std::size_t>(cells.size(), 6));
    const double t = parse_double(cells[0], file, line_no, "timestamp");
    if (t < last_t)
      throw ParseError(file, line_no,
                       "timestamp " + cells[0] + " is earlier than the previous " + format_number(last_t));
    last_t = t;
    const std::string& type = cells[1];
    if (type == "odom") {
      OdometryDelta o;
      o.timestamp = t;
      o.d_rot1 = parse_double(cells[3], file, line_no, "d_rot1");
      o.d_trans = parse_double(cells[4], file, line_no, "d_trans");
      o.d_rot2 = parse_double(cells[5], file, line_no, "d_rot2");
      out.emplace_back(o);
    } else if (type == "rssi") {
      RssiObservation o;
      o.timestamp = t;
      o.beacon_id = parse_id(cells[2], file, line_no);
      o.rssi = parse_double(cells[3], file, line_no, "rssi");
      out.emplace_back(o);
    } else if (type == "bearing") {
      BearingObservation o;
      o.timestamp = t;
      o.beacon_id = parse_id(cells[2], file, line_no);
      o.bearing = parse_double(cells[3], file, line_no, "bearing");
      o.sigma = parse_double(cells[4], file, line_no, "sigma");
      if (!(o.sigma > 0)) throw ParseError(file, line_no, "bearing sigma must be positive");
      out.emplace_back(o);
    } else {
      throw ParseError(file, line_no, "unknown observation type '" + type + "'");
    }
  }
  return out;
}

void write_trajectory_csv(const fs::path& path, const std::vector<TrajectoryRow>& rows) {
  auto out = open_out(path);
  out << "t,truth_x,truth_y,truth_theta,est_x,est_y,est_theta,cov_trace\n";
  for (const auto& r : rows) {
    out << format_number(r.t) << "," << format_number(r.truth.x()) << "," << format_number(r.truth.y()) << ","
        << format_number(r.truth.theta()) << "," << format_number(r.estimate.x()) << ","
        << format_number(r.estimate.y()) << "," << format_number(r.estimate.theta()) << ","
        << format_number(r.cov_trace) << "\n";
  }
}

void write_estimates_csv(const fs::path& path, const std::vector<EstimateRow>& rows) {
  auto out = open_out(path);
  out << "t,x,y,theta,cov_trace\n";
  for (const auto& r : rows) {
    out << format_number(r.t) << "," << format_number(r.estimate.x()) << "," << format_number(r.estimate.y()) << ","
        << format_number(r.estimate.theta()) << "," << format_number(r.cov_trace) << "\n";
  }
}

void write_map_poses_csv(const fs::path& path, const std::vector<MapPoseRow>& rows) {
  auto out = open_out(path);
  out << "timestamp,x,y,theta,converged,rmse\n";
  for (const auto& r : rows) {
    out << format_number(r.t) << "," << format_number(r.pose.x()) << "," << format_number(r.pose.y()) << ","
        << format_number(r.pose.theta()) << "," << (r.converged ? 1 : 0) << ","
        << (r.registered ? format_number(r.rmse) : std::string()) << "\n";
  }
}

std::vector<TimedPose> read_poses_csv(const fs::path& path, const std::string& prefix) {
  auto in = open_in(path);
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(file, 1, "missing header");
  const auto header = split_csv(line);
  auto column = [&](const std::vector<std::string>& names) -> std::size_t {
    for (const auto& n : names)
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == n) return i;
    throw ParseError(file, 1, "no column named '" + names.front() + "'");
  };
  const auto ct = column({"t", "timestamp"});
  const auto cx = column({prefix + "x", "x"});
  const auto cy = column({prefix + "y", "y"});
  const auto cth = column({prefix + "theta", "theta"});

  std::vector<TimedPose> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    const auto need = std::max({ct, cx, cy, cth});
    if (cells.size() <= need) throw ParseError(file, line_no, "too few columns");
    out.push_back({parse_double(cells[ct], file, line_no, "t"),
                   Pose2d(parse_double(cells[cx], file, line_no, "x"), parse_double(cells[cy], file, line_no, "y"),
                          parse_double(cells[cth], file, line_no, "theta"))});
  }
  return out;
}

std::string metrics_json(const ScenarioMetrics& m) {
  using json = nlohmann::ordered_json;
  auto q = quantize_serialized;
  auto pose_stats = [&](const PoseErrorStats& s) {
    return json{{"rmse_xy_m", q(s.rmse_xy_m)},
                {"rmse_theta_rad", q(s.rmse_theta_rad)},
                {"max_xy_m", q(s.max_xy_m)},
                {"matched", s.matched}};
  };
  json j;
  j["fusion"] = pose_stats(m.fusion);
  j["dead_reckoning"] = pose_stats(m.dead_reckoning);
  j["updates"] = json{{"rssi_applied", m.rssi_applied},
                      {"rssi_gated", m.rssi_gated},
                      {"bearing_applied", m.bearing_applied},
                      {"bearing_gated", m.bearing_gated}};
  j["depth_frames"] = m.depth_frames;
  j["map_voxels"] = m.map_voxels;
  if (m.map) {
    j["map_error"] = json{{"mean_abs_m", q(m.map->mean_abs_m)},
                          {"p95_abs_m", q(m.map->p95_abs_m)},
                          {"outlier_fraction", q(m.map->outlier_fraction)},
                          {"points", m.map->points}};
  } else {
    j["map_error"] = nullptr;
  }
  return j.dump(2) + "\n";
}

}  // namespace pog
