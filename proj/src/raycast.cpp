#include "occlusynth/raycast.hpp"

#include <cmath>

#include "occlusynth/parallel.hpp"

namespace occl {

std::pair<Point3, PointCloud> crop_scene(const PointCloud& cloud,
                                         const Point3& car_location,
                                         const CropConfig& cfg,
                                         SeededRng& rng) {
  cfg.validate();
  if (!cloud.has_heads()) throw error("crop_scene: cloud has no head positions");

  // Uniform in a disk via the polar map.
  const double r = cfg.center_jitter * std::sqrt(rng.next_double());
  const double phi = 2.0 * M_PI * rng.next_double();
  const Point3 center{car_location.x + r * std::cos(phi),
                      car_location.y + r * std::sin(phi), car_location.z};

  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (std::abs(p.x - center.x) <= cfg.half_size &&
        std::abs(p.y - center.y) <= cfg.half_size)
      ids.push_back(i);
  }
  if (ids.size() < cfg.min_points)
    throw error("crop rejected: " + std::to_string(ids.size()) +
                " points in crop, need " + std::to_string(cfg.min_points));
  return {center, cloud.select(ids)};
}

ScenePairRaw synthesize_pair(const PointCloud& complete, const Bvh& vehicle) {
  if (!complete.has_heads())
    throw error("synthesize_pair: scene has no head positions");

  const std::size_t n = complete.size();
  std::vector<std::uint8_t> blocked(n, 0);
  parallel_for(0, n, [&](std::size_t i) {
    blocked[i] = vehicle.segment_hits({complete.heads[i], complete.points[i]})
                     ? 1
                     : 0;
  });

  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!blocked[i]) keep.push_back(i);

  ScenePairRaw pair;
  pair.complete = complete;
  pair.gapped = complete.select(keep);
  pair.removed_count = n - keep.size();
  pair.occluded_nothing = pair.removed_count == 0;
  return pair;
}

}  // namespace occl
