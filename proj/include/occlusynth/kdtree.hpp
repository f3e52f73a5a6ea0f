// Balanced k-d tree over a point cloud.
//
// Results are exact: nearest-neighbor answers are identical to an
// exhaustive scan, with ties broken by the lower point id. Queries are
// const and safe to run from many threads at once.

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "occlusynth/geom.hpp"

namespace occl {

/// (point id, Euclidean distance) pair returned by queries.
struct Neighbor {
  std::size_t id;
  double distance;
};

class KdIndex {
 public:
  /// Builds the index. Throws occl::error("empty input") on an empty cloud.
  explicit KdIndex(const PointCloud& cloud);

  std::size_t size() const { return points_.size(); }
  const Point3& point(std::size_t id) const { return points_[id]; }

  /// k nearest points to `query`, ascending by (distance, id).
  /// Throws if k < 1 or k > size().
  std::vector<Neighbor> nearest_k(const Point3& query, std::size_t k) const;

  /// Single nearest neighbor (k = 1 shortcut).
  Neighbor nearest(const Point3& query) const;

  /// All points with distance <= radius, ascending by (distance, id).
  std::vector<Neighbor> radius(const Point3& query, double radius) const;

 private:
  struct Node {
    // Internal node: split axis/value and child offsets.
    // Leaf: axis = -1, [begin, end) range into order_.
    int axis = -1;
    double split = 0.0;
    std::int32_t left = -1, right = -1;
    std::uint32_t begin = 0, end = 0;
    Aabb box;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  template <typename Visit>
  void search(std::int32_t node, const Point3& q, double& worst,
              Visit&& visit) const;

  std::vector<Point3> points_;   // copy, by id
  std::vector<std::uint32_t> order_;  // permutation grouped into leaves
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;

  static constexpr std::uint32_t kLeafSize = 16;
};

}  // namespace occl
