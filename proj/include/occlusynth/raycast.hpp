// Occlusion synthesis: crop an 8 m x 8 m scene around a posed vehicle and
// remove every point whose head-to-point segment intersects the vehicle
// mesh. The gap scene is purely subtractive.

#pragma once

#include <utility>

#include "occlusynth/bvh.hpp"
#include "occlusynth/geom.hpp"
#include "occlusynth/placement.hpp"
#include "occlusynth/rng.hpp"

namespace occl {

struct CropConfig {
  double half_size = 4.0;      // meters; scenes are 2*half_size squares
  double center_jitter = 0.2;  // meters, radius of the random center shift
  std::size_t min_points = 5000;

  void validate() const {
    if (!(half_size > 0) || !(center_jitter >= 0))
      throw error("crop config: invalid sizes");
  }
};

/// A complete scene and its ray-cast gap counterpart (world frame).
struct ScenePairRaw {
  PointCloud complete;
  PointCloud gapped;
  Point3 center;
  VehiclePose pose;
  std::size_t removed_count = 0;
  /// Set when the vehicle occluded nothing; kept but flagged.
  bool occluded_nothing = false;
};

/// Crops the axis-aligned square around car_location jittered uniformly in
/// a disk of cfg.center_jitter. Throws when the crop holds fewer than
/// cfg.min_points points.
std::pair<Point3, PointCloud> crop_scene(const PointCloud& cloud,
                                         const Point3& car_location,
                                         const CropConfig& cfg,
                                         SeededRng& rng);

/// Removes all points whose head->point segment hits the vehicle. The
/// per-point mask is evaluated independently, so results do not depend on
/// point order or thread count.
ScenePairRaw synthesize_pair(const PointCloud& complete, const Bvh& vehicle);

}  // namespace occl
