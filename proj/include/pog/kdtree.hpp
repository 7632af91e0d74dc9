#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace pog {

/// Static 3D k-d tree for radius-bounded nearest-neighbour queries.
class KdTree3 {
 public:
  struct Match {
    std::size_t index;  // into the points passed at construction
    double squared_distance;
  };

  KdTree3() = default;
  explicit KdTree3(std::span<const Eigen::Vector3d> points, int leaf_size = 8);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// Nearest point strictly closer than max_distance; ties go to the lowest index.
  std::optional<Match> nearest(const Eigen::Vector3d& query, double max_distance) const;

  const Eigen::Vector3d& point(std::size_t original_index) const { return points_[position_of_[original_index]]; }

 private:
  struct Node {
    std::int32_t left = -1;   // child node ids, -1 for leaves
    std::int32_t right = -1;
    std::uint32_t begin = 0;  // point range for leaves
    std::uint32_t end = 0;
    int axis = 0;
    double split = 0;
  };

  struct Item {
    Eigen::Vector3d p;
    std::uint32_t index;
  };

  std::int32_t build(std::vector<Item>& items, std::uint32_t begin, std::uint32_t end, int leaf_size);
  void search(std::int32_t node, const Eigen::Vector3d& q, double& best_d2, std::size_t& best) const;

  std::vector<Eigen::Vector3d> points_;  // reordered copy
  std::vector<std::size_t> original_;    // reordered position -> original index
  std::vector<std::size_t> position_of_;
  std::vector<Node> nodes_;
};

}  // namespace pog
