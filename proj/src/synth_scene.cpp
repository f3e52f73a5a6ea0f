#include "occlusynth/synth_scene.hpp"

#include <cmath>

namespace occl {

namespace {

struct ProfileHit {
  double t = std::numeric_limits<double>::infinity();
  Point3 p;
  bool valid = false;
};

// Nearest intersection of the profile-plane ray (origin (oy, oz),
// direction (dy, dz)) with the street cross-section. All quantities in
// the (y, z) plane; x comes from the column.
ProfileHit trace_profile(double oy, double oz, double dy, double dz,
                         const SynthStreetConfig& cfg) {
  ProfileHit best;
  const double z_road = cfg.ground_z;
  const double z_walk = cfg.ground_z + cfg.curb_height;

  auto consider = [&](double t, double y, double z) {
    if (t > 1e-9 && t < best.t) {
      best.t = t;
      best.p = {0.0, y, z};
      best.valid = true;
    }
  };

  if (dz < 0.0) {
    // Road surface.
    double t = (z_road - oz) / dz;
    double y = oy + t * dy;
    if (y >= cfg.y_road_min && y <= cfg.y_curb) consider(t, y, z_road);
    // Sidewalk surface.
    t = (z_walk - oz) / dz;
    y = oy + t * dy;
    if (y > cfg.y_curb && y <= cfg.y_wall) consider(t, y, z_walk);
  }
  if (dy > 0.0) {
    // Curb face.
    double t = (cfg.y_curb - oy) / dy;
    double z = oz + t * dz;
    if (z >= z_road && z <= z_walk) consider(t, cfg.y_curb, z);
    // Wall face.
    t = (cfg.y_wall - oy) / dy;
    z = oz + t * dz;
    if (z >= z_walk && z <= z_walk + cfg.wall_height)
      consider(t, cfg.y_wall, z);
  }
  return best;
}

}  // namespace

ScanStrip make_street_strip(const SynthStreetConfig& cfg, SeededRng& rng) {
  const int cols = cfg.columns();
  ScanStrip strip(cols);
  strip.refl.assign(strip.pixel_count(), 0.0);

  const double sensor_z = cfg.ground_z + cfg.sensor_height;
  const double dtheta = 2.0 * M_PI / ScanStrip::kRows;

  for (int c = 0; c < cols; ++c) {
    const double x = c * cfg.col_spacing;
    const Point3 head{x, 0.0, sensor_z};
    SeededRng col_rng = rng.derive("col").derive(static_cast<std::uint64_t>(c));
    for (int r = 0; r < ScanStrip::kRows; ++r) {
      const double theta = r * dtheta;
      const double dy = std::cos(theta), dz = std::sin(theta);
      ProfileHit hit = trace_profile(0.0, sensor_z, dy, dz, cfg);
      const std::size_t i = strip.idx(r, c);
      strip.h[i] = head;
      if (!hit.valid) continue;
      double range = hit.t;
      if (cfg.noise_sigma > 0.0) range += cfg.noise_sigma * col_rng.normal();
      strip.p[i] = {x, range * dy, sensor_z + range * dz};
      strip.refl[i] = 0.5;
      strip.valid[i] = 1;
    }
  }
  return strip;
}

}  // namespace occl
