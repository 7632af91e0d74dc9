#include "pog/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pog {

namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
}  // namespace

KdTree3::KdTree3(std::span<const Eigen::Vector3d> points, int leaf_size) {
  if (leaf_size < 1) throw std::invalid_argument("KdTree3: leaf_size must be positive");
  if (points.size() >= std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("KdTree3: too many points");
  if (points.empty()) return;
  std::vector<Item> items(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) items[i] = {points[i], static_cast<std::uint32_t>(i)};
  nodes_.reserve(2 * points.size() / static_cast<std::size_t>(leaf_size) + 1);
  build(items, 0, static_cast<std::uint32_t>(items.size()), leaf_size);

  points_.resize(items.size());
  original_.resize(items.size());
  position_of_.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    points_[i] = items[i].p;
    original_[i] = items[i].index;
    position_of_[items[i].index] = i;
  }
}

std::int32_t KdTree3::build(std::vector<Item>& items, std::uint32_t begin, std::uint32_t end, int leaf_size) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= static_cast<std::uint32_t>(leaf_size)) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  Eigen::Vector3d lo = items[begin].p, hi = items[begin].p;
  for (auto i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(items[i].p);
    hi = hi.cwiseMax(items[i].p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(items.begin() + begin, items.begin() + mid, items.begin() + end,
                   [axis](const Item& a, const Item& b) {
                     const double pa = a.p(axis), pb = b.p(axis);
                     return pa < pb || (pa == pb && a.index < b.index);
                   });
  const double split = items[mid].p(axis);

  const auto left = build(items, begin, mid, leaf_size);
  const auto right = build(items, mid, end, leaf_size);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

void KdTree3::search(std::int32_t node_id, const Eigen::Vector3d& q, double& best_d2, std::size_t& best) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      const double d2 = (points_[i] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && best != kNone && original_[i] < best)) {
        best_d2 = d2;
        best = original_[i];
      }
    }
    return;
  }
  const double diff = q(node.axis) - node.split;
  const auto near = diff < 0 ? node.left : node.right;
  const auto far = diff < 0 ? node.right : node.left;
  search(near, q, best_d2, best);
  if (diff * diff <= best_d2) search(far, q, best_d2, best);
}

std::optional<KdTree3::Match> KdTree3::nearest(const Eigen::Vector3d& query, double max_distance) const {
  if (points_.empty()) return std::nullopt;
  double best_d2 = max_distance * max_distance;
  std::size_t best = kNone;
  search(0, query, best_d2, best);
  if (best == kNone) return std::nullopt;
  return Match{best, best_d2};
}

}  // namespace pog
