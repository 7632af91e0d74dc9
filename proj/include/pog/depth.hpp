#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "pog/geometry.hpp"

namespace pog {

using DepthImage = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ValidMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rgb = std::array<std::uint8_t, 3>;

/// Per-pixel depth in meters along the optical axis. values(v, u) is row v,
/// column u. Invalid pixels hold 0 and are masked out.
struct DepthMap {
  DepthImage values;
  ValidMask valid;

  DepthMap() = default;
  DepthMap(int width, int height) : values(DepthImage::Zero(height, width)), valid(ValidMask::Constant(height, width, false)) {}

  /// Every pixel valid with the given depth.
  static DepthMap constant(int width, int height, double depth);

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }

  void set(int u, int v, double depth) {
    values(v, u) = depth;
    valid(v, u) = true;
  }
  void invalidate(int u, int v) {
    values(v, u) = 0.0;
    valid(v, u) = false;
  }

  /// Throws std::invalid_argument when the mask/values shapes disagree or a
  /// valid pixel is outside (0, max_depth].
  void validate(double max_depth) const;
};

struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> rgb;  // row-major

  ColorImage() = default;
  ColorImage(int w, int h, Rgb fill = {0, 0, 0}) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h, fill) {}
  const Rgb& at(int u, int v) const { return rgb[static_cast<std::size_t>(v) * width + u]; }
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Rgb> colors;  // empty, or parallel to points

  // Source pixel of each point, filled by back_project; empty for clouds
  // without an image origin.
  std::vector<Eigen::Vector2i> pixels;
  int image_height = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_pixels() const { return !pixels.empty() && image_height > 0; }

  void validate() const;
};

PointCloud transformed(const PointCloud& cloud, const RigidTransform3d& t);

/// Plane {p : normal·p + offset = 0} with a unit normal.
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;

  double signed_distance(const Eigen::Vector3d& p) const { return normal.dot(p) + offset; }
};

struct HeightMap {
  DepthImage heights;
  ValidMask valid;

  int width() const { return static_cast<int>(heights.cols()); }
  int height() const { return static_cast<int>(heights.rows()); }
};

/// Inverse pinhole model for one pixel.
inline Eigen::Vector3d unproject(double u, double v, double z, const CameraIntrinsics& intr) {
  return Eigen::Vector3d((u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z);
}

PointCloud back_project(const DepthMap& depth, const CameraIntrinsics& intr,
                        const std::optional<ColorImage>& color = std::nullopt);

struct Projection {
  double u = 0;
  double v = 0;
  double z = 0;
  bool in_frame = false;
};

/// Pinhole projection. Throws std::domain_error for z <= 0.
Projection project(const Eigen::Vector3d& point, const CameraIntrinsics& intr);

struct FloorFitParams {
  int iterations = 200;
  double inlier_threshold_m = 0.02;
  double bottom_fraction = 1.0 / 3.0;
  int min_inliers = 50;
  // The returned normal points to the side of the plane containing this point.
  Eigen::Vector3d viewpoint = Eigen::Vector3d::Zero();
  // Used to rank points of pixel-less clouds by height.
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
};

struct NoFloorFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// RANSAC plane fit restricted to the bottom of the image (or the lowest
/// points of a pixel-less cloud), refined by least squares over inliers.
Plane fit_floor_plane(const PointCloud& cloud, const FloorFitParams& params, std::mt19937_64& rng);

/// Least-squares plane through the given points (smallest principal axis).
Plane fit_plane_least_squares(const std::vector<Eigen::Vector3d>& points);

HeightMap height_map(const DepthMap& depth, const CameraIntrinsics& intr, const Plane& floor);

}  // namespace pog
