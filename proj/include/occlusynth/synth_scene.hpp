// Procedural street scenes for the demo pipeline and the test fixtures:
// an analytic road / curb / sidewalk / wall profile extruded along the
// driving direction and sampled with the scanner's rotating-mirror
// geometry, yielding a fully synthetic scan strip.

#pragma once

#include "occlusynth/rng.hpp"
#include "occlusynth/scanstrip.hpp"

namespace occl {

struct SynthStreetConfig {
  double length = 30.0;       // meters of travel along +x
  double col_spacing = 0.1;   // sensor advance per strip column
  double y_curb = 3.0;        // curb line offset from the trajectory
  double curb_height = 0.15;
  double y_wall = 8.0;        // building wall offset
  double wall_height = 1.0;   // above the sidewalk
  double y_road_min = -6.0;   // road extent on the far side
  double ground_z = 50.0;     // world height of the road surface
  double sensor_height = 2.75;
  double noise_sigma = 0.0;   // Gaussian range noise, meters

  int columns() const {
    return std::max(1, static_cast<int>(length / col_spacing));
  }
};

/// Simulates one scanner pass along the street: 3000 mirror angles per
/// column, analytic ray-profile intersection, invalid pixels where the ray
/// escapes the scene. Deterministic given (cfg, rng).
ScanStrip make_street_strip(const SynthStreetConfig& cfg, SeededRng& rng);

}  // namespace occl
