#include "occlusynth/bvh.hpp"

#include <algorithm>
#include <cmath>

namespace occl {

bool segment_hits_triangle(const Point3& origin, const Point3& target,
                           const Point3& a, const Point3& b, const Point3& c) {
  const Vec3 dir = target - origin;

  // Permute axes so the dominant direction component is z, then shear the
  // triangle into ray space. Keeping the exact same arithmetic for every
  // triangle makes shared edges consistent (no cracks).
  int kz = 0;
  if (std::abs(dir.y) > std::abs(dir[kz])) kz = 1;
  if (std::abs(dir.z) > std::abs(dir[kz])) kz = 2;
  int kx = kz + 1 == 3 ? 0 : kz + 1;
  int ky = kx + 1 == 3 ? 0 : kx + 1;
  if (dir[kz] < 0.0) std::swap(kx, ky);

  const double sx = dir[kx] / dir[kz];
  const double sy = dir[ky] / dir[kz];
  const double sz = 1.0 / dir[kz];

  const Vec3 av = a - origin, bv = b - origin, cv = c - origin;
  const double ax = av[kx] - sx * av[kz];
  const double ay = av[ky] - sy * av[kz];
  const double bx = bv[kx] - sx * bv[kz];
  const double by = bv[ky] - sy * bv[kz];
  const double cx = cv[kx] - sx * cv[kz];
  const double cy = cv[ky] - sy * cv[kz];

  const double u = cx * by - cy * bx;
  const double v = ax * cy - ay * cx;
  const double w = bx * ay - by * ax;

  if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0))
    return false;

  const double det = u + v + w;
  if (det == 0.0) return false;

  const double az = sz * av[kz];
  const double bz = sz * bv[kz];
  const double cz = sz * cv[kz];
  const double t_scaled = u * az + v * bz + w * cz;

  const double t = t_scaled / det;
  return t > kSegmentEps && t < 1.0 - kSegmentEps;
}

namespace {

// Conservative segment/AABB overlap for t in [0, 1]. Zero direction
// components are handled explicitly so no NaN can sneak in; a false
// positive only costs a descent, a false negative would lose hits.
bool segment_overlaps_box(const Point3& o, const Vec3& dir, const Aabb& box) {
  double t0 = 0.0, t1 = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double d = dir[axis], s = o[axis];
    const double lo = box.min[axis], hi = box.max[axis];
    if (std::abs(d) < 1e-300) {
      if (s < lo || s > hi) return false;
      continue;
    }
    double ta = (lo - s) / d;
    double tb = (hi - s) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

Bvh::Bvh(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) throw error("bvh: empty mesh");
  tris_.reserve(mesh.triangle_count());
  for (const auto& t : mesh.triangles) {
    Tri tri{mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], {}};
    tri.centroid = (tri.a + tri.b + tri.c) / 3.0;
    tris_.push_back(tri);
  }
  order_.resize(tris_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * tris_.size() / kLeafSize + 8);
  build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t Bvh::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  Aabb cbox;  // centroid bounds pick the split axis
  for (std::uint32_t i = begin; i < end; ++i) {
    const Tri& t = tris_[order_[i]];
    node.box.expand(t.a);
    node.box.expand(t.b);
    node.box.expand(t.c);
    cbox.expand(t.centroid);
  }
  nodes_.push_back(node);
  const auto self = static_cast<std::int32_t>(nodes_.size() - 1);
  if (end - begin <= kLeafSize) return self;

  const Point3 ext = cbox.extent();
  int axis = 0;
  if (ext.y > ext[axis]) axis = 1;
  if (ext.z > ext[axis]) axis = 2;
  if (ext[axis] <= 0.0) return self;  // all centroids coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [&](std::uint32_t ia, std::uint32_t ib) {
                     const double ca = tris_[ia].centroid[axis];
                     const double cb = tris_[ib].centroid[axis];
                     if (ca != cb) return ca < cb;
                     return ia < ib;
                   });

  const std::int32_t l = build(begin, mid);
  const std::int32_t r = build(mid, end);
  nodes_[self].left = l;
  nodes_[self].right = r;
  return self;
}

bool Bvh::segment_hits(const Ray& ray, TraversalStats* stats) const {
  if (!(ray.origin.finite() && ray.target.finite()))
    throw error("ray: non-finite endpoints");
  if (ray.origin == ray.target) throw error("ray: origin equals target");
  const Vec3 dir = ray.target - ray.origin;

  std::int32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  if (stats) stats->nodes_visited = 0;

  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (stats) ++stats->nodes_visited;
    if (!segment_overlaps_box(ray.origin, dir, node.box)) continue;
    if (node.leaf()) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Tri& t = tris_[order_[i]];
        if (segment_hits_triangle(ray.origin, ray.target, t.a, t.b, t.c))
          return true;
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return false;
}

}  // namespace occl
