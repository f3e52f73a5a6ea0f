// Bounding-volume hierarchy over mesh triangles with a watertight
// segment-triangle intersection test. Used to decide which laser rays a
// virtual vehicle blocks; answers are identical to exhaustive per-triangle
// tests.

#pragma once

#include <cstdint>
#include <vector>

#include "occlusynth/geom.hpp"
#include "occlusynth/mesh.hpp"

namespace occl {

/// Line-of-sight segment from sensor head to measured point; occlusion
/// tests run on the open parameter interval t in (eps, 1 - eps).
struct Ray {
  Point3 origin;  // sensor head h_i
  Point3 target;  // object point p_i
};

/// Fraction of the segment excluded at both endpoints so points lying on
/// the mesh surface do not occlude themselves.
inline constexpr double kSegmentEps = 1e-6;

/// Watertight segment-triangle test (shear + 2D edge functions). Boundary
/// hits (edges, vertices) count as hits, so shared edges cannot leak.
bool segment_hits_triangle(const Point3& origin, const Point3& target,
                           const Point3& a, const Point3& b, const Point3& c);

struct TraversalStats {
  std::size_t nodes_visited = 0;
};

class Bvh {
 public:
  /// Builds the hierarchy (median split, leaf size <= 4).
  /// Throws on an empty mesh.
  explicit Bvh(const TriangleMesh& mesh);

  /// True iff some triangle intersects the open segment
  /// t in (kSegmentEps, 1 - kSegmentEps).
  bool segment_hits(const Ray& ray, TraversalStats* stats = nullptr) const;

  const Aabb& root_box() const { return nodes_[0].box; }
  std::size_t triangle_count() const { return tris_.size(); }

  static constexpr std::uint32_t kLeafSize = 4;

 private:
  struct Node {
    Aabb box;
    std::int32_t left = -1, right = -1;  // internal
    std::uint32_t begin = 0, end = 0;    // leaf range into order_
    bool leaf() const { return left < 0; }
  };
  struct Tri {
    Point3 a, b, c;
    Point3 centroid;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Tri> tris_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace occl
