#include "occlusynth/kdtree.hpp"

#include <algorithm>
#include <cmath>

namespace occl {

namespace {

// Squared distance from q to the box, 0 if inside.
inline double box_dist2(const Aabb& b, const Point3& q) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double lo = b.min[a], hi = b.max[a], v = q[a];
    if (v < lo) {
      const double d = lo - v;
      d2 += d * d;
    } else if (v > hi) {
      const double d = v - hi;
      d2 += d * d;
    }
  }
  return d2;
}

}  // namespace

KdIndex::KdIndex(const PointCloud& cloud) : points_(cloud.points) {
  if (points_.empty()) throw error("kd index: empty input");
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * points_.size() / kLeafSize + 8);
  root_ = build(0, static_cast<std::uint32_t>(order_.size()));
}

std::int32_t KdIndex::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  for (std::uint32_t i = begin; i < end; ++i) node.box.expand(points_[order_[i]]);

  if (end - begin <= kLeafSize) {
    // Leaf ids kept sorted so traversal order never affects results.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  const Point3 ext = node.box.extent();
  int axis = 0;
  if (ext.y > ext[axis]) axis = 1;
  if (ext.z > ext[axis]) axis = 2;

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = points_[a][axis], cb = points_[b][axis];
                     if (ca != cb) return ca < cb;
                     return a < b;  // total order keeps the split deterministic
                   });

  node.axis = axis;
  node.split = points_[order_[mid]][axis];
  nodes_.push_back(node);
  const auto self = static_cast<std::int32_t>(nodes_.size() - 1);
  const std::int32_t l = build(begin, mid);
  const std::int32_t r = build(mid, end);
  nodes_[self].left = l;
  nodes_[self].right = r;
  return self;
}

template <typename Visit>
void KdIndex::search(std::int32_t ni, const Point3& q, double& worst,
                     Visit&& visit) const {
  const Node& node = nodes_[ni];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t id = order_[i];
      visit(id, dist2(points_[id], q));
    }
    return;
  }
  const std::int32_t near = q[node.axis] < node.split ? node.left : node.right;
  const std::int32_t far = near == node.left ? node.right : node.left;
  search(near, q, worst, visit);
  if (box_dist2(nodes_[far].box, q) <= worst) search(far, q, worst, visit);
}

std::vector<Neighbor> KdIndex::nearest_k(const Point3& query,
                                         std::size_t k) const {
  if (k < 1) throw error("nearest_k: k must be >= 1");
  if (k > size()) throw error("nearest_k: k exceeds cloud size");

  // Bounded candidate set ordered by (dist2, id); the pair comparison is a
  // total order, so equidistant points resolve to the lower id.
  using Cand = std::pair<double, std::uint32_t>;
  std::vector<Cand> heap;  // max-heap on (dist2, id)
  heap.reserve(k + 1);
  double worst = std::numeric_limits<double>::infinity();

  auto visit = [&](std::uint32_t id, double d2) {
    const Cand c{d2, id};
    if (heap.size() < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end());
      if (heap.size() == k) worst = heap.front().first;
    } else if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end());
      worst = heap.front().first;
    }
  };
  search(root_, query, worst, visit);

  std::sort(heap.begin(), heap.end());
  std::vector<Neighbor> out;
  out.reserve(heap.size());
  for (const auto& [d2, id] : heap) out.push_back({id, std::sqrt(d2)});
  return out;
}

Neighbor KdIndex::nearest(const Point3& query) const {
  return nearest_k(query, 1).front();
}

std::vector<Neighbor> KdIndex::radius(const Point3& query, double r) const {
  if (r < 0.0) throw error("radius query: negative radius");
  const double r2 = r * r;
  std::vector<std::pair<double, std::uint32_t>> found;
  double worst = r2;  // prune strictly outside the ball
  auto visit = [&](std::uint32_t id, double d2) {
    if (d2 <= r2) found.emplace_back(d2, id);
  };
  search(root_, query, worst, visit);
  std::sort(found.begin(), found.end());
  std::vector<Neighbor> out;
  out.reserve(found.size());
  for (const auto& [d2, id] : found) out.push_back({id, std::sqrt(d2)});
  return out;
}

}  // namespace occl
