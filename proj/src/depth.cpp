#include "pog/depth.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pog {

DepthMap DepthMap::constant(int width, int height, double depth) {
  DepthMap d;
  d.values = DepthImage::Constant(height, width, depth);
  d.valid = ValidMask::Constant(height, width, true);
  return d;
}

void DepthMap::validate(double max_depth) const {
  if (values.rows() != valid.rows() || values.cols() != valid.cols())
    throw std::invalid_argument("DepthMap: values and mask shapes differ");
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!valid(i)) continue;
    const double z = values(i);
    if (!(z > 0.0) || z > max_depth) throw std::invalid_argument("DepthMap: valid pixel outside (0, max_depth]");
  }
}

void PointCloud::validate() const {
  if (!colors.empty() && colors.size() != points.size())
    throw std::invalid_argument("PointCloud: colors length differs from points");
  if (!pixels.empty() && pixels.size() != points.size())
    throw std::invalid_argument("PointCloud: pixels length differs from points");
  for (const auto& p : points)
    if (!p.allFinite()) throw std::invalid_argument("PointCloud: non-finite coordinate");
}

PointCloud transformed(const PointCloud& cloud, const RigidTransform3d& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t * p;
  return out;
}

namespace {

void require_same_shape(const DepthMap& depth, const CameraIntrinsics& intr) {
  if (depth.width() != intr.width || depth.height() != intr.height)
    throw std::invalid_argument("depth map is " + std::to_string(depth.width()) + "x" +
                                std::to_string(depth.height()) + " but intrinsics expect " +
                                std::to_string(intr.width) + "x" + std::to_string(intr.height));
  if (depth.valid.rows() != depth.values.rows() || depth.valid.cols() != depth.values.cols())
    throw std::invalid_argument("depth map mask shape differs from values");
}

}  // namespace

PointCloud back_project(const DepthMap& depth, const CameraIntrinsics& intr, const std::optional<ColorImage>& color) {
  intr.validate();
  require_same_shape(depth, intr);
  if (color && (color->width != depth.width() || color->height != depth.height()))
    throw std::invalid_argument("color image dimensions differ from depth map");

  const int w = depth.width(), h = depth.height();
  std::vector<double> x_scale(w);
  for (int u = 0; u < w; ++u) x_scale[u] = (u - intr.cx) / intr.fx;

  const auto n = static_cast<std::size_t>(depth.valid.count());
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.pixels.reserve(n);
  if (color) cloud.colors.reserve(n);
  cloud.image_height = h;

  for (int v = 0; v < h; ++v) {
    const double y_scale = (v - intr.cy) / intr.fy;
    for (int u = 0; u < w; ++u) {
      if (!depth.valid(v, u)) continue;
      const double z = depth.values(v, u);
      cloud.points.emplace_back(x_scale[u] * z, y_scale * z, z);
      cloud.pixels.emplace_back(u, v);
      if (color) cloud.colors.push_back(color->at(u, v));
    }
  }
  return cloud;
}

Projection project(const Eigen::Vector3d& point, const CameraIntrinsics& intr) {
  if (!(point.z() > 0.0)) throw std::domain_error("project: point is not in front of the camera");
  Projection p;
  p.z = point.z();
  p.u = intr.fx * point.x() / point.z() + intr.cx;
  p.v = intr.fy * point.y() / point.z() + intr.cy;
  p.in_frame = p.u >= -0.5 && p.u < intr.width - 0.5 && p.v >= -0.5 && p.v < intr.height - 0.5;
  return p;
}

Plane fit_plane_least_squares(const std::vector<Eigen::Vector3d>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_plane_least_squares: need at least 3 points");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d = p - centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
  Plane plane;
  plane.normal = es.eigenvectors().col(0).normalized();
  plane.offset = -plane.normal.dot(centroid);
  return plane;
}

namespace {

std::vector<std::size_t> floor_candidates(const PointCloud& cloud, double bottom_fraction, const Eigen::Vector3d& up) {
  std::vector<std::size_t> idx;
  if (cloud.has_pixels()) {
    const double first_row = cloud.image_height * (1.0 - bottom_fraction);
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (cloud.pixels[i].y() >= first_row) idx.push_back(i);
    return idx;
  }
  idx.resize(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto keep = static_cast<std::size_t>(std::ceil(bottom_fraction * static_cast<double>(cloud.size())));
  const Eigen::Vector3d dir = up.normalized();
  auto lower = [&](std::size_t a, std::size_t b) {
    const double ha = dir.dot(cloud.points[a]), hb = dir.dot(cloud.points[b]);
    return ha < hb || (ha == hb && a < b);
  };
  if (keep < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), lower);
    idx.resize(keep);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Plane fit_floor_plane(const PointCloud& cloud, const FloorFitParams& params, std::mt19937_64& rng) {
  if (params.iterations <= 0 || !(params.inlier_threshold_m > 0) || !(params.bottom_fraction > 0) ||
      params.bottom_fraction > 1 || params.min_inliers < 3)
    throw std::invalid_argument("fit_floor_plane: invalid parameters");
  if (cloud.size() < 3) throw NoFloorFound("no floor found: fewer than 3 points");

  const auto candidates = floor_candidates(cloud, params.bottom_fraction, params.up);
  if (candidates.size() < 3) throw NoFloorFound("no floor found: fewer than 3 candidate points");

  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::size_t best_count = 0;
  Plane best;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    const Eigen::Vector3d& pa = cloud.points[candidates[a]];
    const Eigen::Vector3d n = (cloud.points[candidates[b]] - pa).cross(cloud.points[candidates[c]] - pa);
    const double norm = n.norm();
    if (norm < 1e-12) continue;
    Plane trial{n / norm, -n.dot(pa) / norm};
    std::size_t count = 0;
    for (auto i : candidates)
      if (std::abs(trial.signed_distance(cloud.points[i])) <= params.inlier_threshold_m) ++count;
    if (count > best_count) {
      best_count = count;
      best = trial;
    }
  }
  if (best_count < 3) throw NoFloorFound("no floor found: degenerate candidate set");

  // Refit over every point of the cloud that supports the winning hypothesis,
  // so the far floor (higher in the image) constrains the normal too.
  std::vector<Eigen::Vector3d> inliers;
  for (const auto& p : cloud.points)
    if (std::abs(best.signed_distance(p)) <= params.inlier_threshold_m) inliers.push_back(p);
  if (inliers.size() < static_cast<std::size_t>(params.min_inliers))
    throw NoFloorFound("no floor found: " + std::to_string(inliers.size()) + " inliers, need " +
                       std::to_string(params.min_inliers));

  Plane plane = fit_plane_least_squares(inliers);
  if (plane.signed_distance(params.viewpoint) < 0) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
  return plane;
}

HeightMap height_map(const DepthMap& depth, const CameraIntrinsics& intr, const Plane& floor) {
  intr.validate();
  require_same_shape(depth, intr);
  HeightMap hm;
  hm.heights = DepthImage::Zero(depth.height(), depth.width());
  hm.valid = depth.valid;
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (!depth.valid(v, u)) continue;
      hm.heights(v, u) = floor.signed_distance(unproject(u, v, depth.values(v, u), intr));
    }
  }
  return hm;
}

}  // namespace pog
