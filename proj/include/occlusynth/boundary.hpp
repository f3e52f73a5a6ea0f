// Road-boundary (curb) extraction: region growing over strip-space
// normals, the three curb classification rules, boundary polyline
// construction, and parking-candidate selection along the boundaries.

#pragma once

#include <vector>

#include "occlusynth/geom.hpp"
#include "occlusynth/rng.hpp"
#include "occlusynth/scanstrip.hpp"

namespace occl {

/// Strip-space connected component of near-vertical surface pixels.
/// Carries its member coordinates so later stages need no strip access.
struct Segment {
  std::vector<std::size_t> member_ids;  // strip pixel indices
  std::vector<Point3> points;           // member coordinates, same order
  Vec3 mean_normal;                     // unit, oriented toward the sensor
  Aabb footprint;
  int strip_id = 0;
};

/// Ordered bird's-eye polyline along a curb top.
struct BoundaryPolyline {
  std::vector<Point3> vertices;  // x, y in meters; z = local curb-top height
  std::vector<Vec2> tangents;    // unit, per vertex
  double mean_curb_top_z = 0.0;
  /// Unit normal pointing away from the road (toward the sidewalk).
  Vec2 sidewalk_side{0, 0};

  double arc_length() const;
  /// Position / tangent at an arc-length station s in [0, arc_length()].
  Point3 point_at(double s) const;
  Vec2 tangent_at(double s) const;
};

/// A spot on a boundary where a virtual vehicle may be parked.
struct ParkingCandidate {
  Point3 anchor;       // on the polyline
  Vec2 road_dir;       // unit tangent
  Vec2 sidewalk_side;  // unit normal away from the road; road is -side
  std::size_t polyline_id = 0;
};

struct CurbRuleConfig {
  double raster_cell = 0.33;          // meters, bird's-eye raster
  double max_median_height = 0.30;    // meters, rule (a)
  double min_elongation = 5.0;        // rule (b), length / height
  double ground_band = 0.5;           // meters, rule (c), +- around ground
  double min_boundary_length = 7.0;   // meters, candidate gate
  double min_endpoint_clearance = 3.5;  // meters, candidate gate

  // Region growing and polyline construction knobs (not fixed by the
  // classification rules; exposed for tuning).
  double grow_angle_tol_deg = 30.0;  // normal deviation from horizontal
  int grow_min_points = 50;
  double resample_step = 0.5;      // meters along the polyline
  double chain_max_gap = 0.5;      // meters between chained endpoints
  double chain_max_angle_deg = 15.0;
  double candidate_spacing = 4.0;  // admissible meters per candidate

  void validate() const;
};

/// Maximal strip-connected components of valid pixels whose normals
/// deviate from horizontal by less than angle_tol_deg, with at least
/// min_points members.
std::vector<Segment> grow_vertical_segments(const ScanStrip& strip,
                                            double angle_tol_deg,
                                            int min_points);

/// Robust local ground height for a segment: the 5th percentile of z over
/// cloud points within 1 m of the segment footprint (xy).
double local_ground_height(const PointCloud& cloud, const Segment& segment);

/// All three curb rules: (a) median per-raster-cell height extent below
/// cfg.max_median_height, (b) elongation ratio at least cfg.min_elongation,
/// (c) height range inside ground_z +- cfg.ground_band.
bool classify_curb(const Segment& segment, double ground_z,
                   const CurbRuleConfig& cfg);

/// Fits one polyline per curb segment (principal-direction ordering plus
/// resampling) and chains segments whose endpoints are within
/// chain_max_gap and whose directions agree within chain_max_angle_deg.
/// When a context cloud is supplied, the sidewalk side is taken from the
/// ground-height step across the line; otherwise from the segment normals
/// (they face the sensor, which is on the road).
std::vector<BoundaryPolyline> build_boundary_map(
    const std::vector<Segment>& curb_segments, const CurbRuleConfig& cfg,
    const PointCloud* context_cloud = nullptr);

/// Draws anchors uniformly along the admissible sub-arc of every polyline
/// longer than cfg.min_boundary_length, keeping cfg.min_endpoint_clearance
/// to both ends. Deterministic given (polylines, rng).
std::vector<ParkingCandidate> select_parking_candidates(
    const std::vector<BoundaryPolyline>& polylines, const CurbRuleConfig& cfg,
    const SeededRng& rng);

/// GeoJSON-style export: one LineString feature per polyline with
/// per-vertex z and side/height properties.
void write_boundaries_json(const std::string& path,
                           const std::vector<BoundaryPolyline>& polylines);
std::vector<BoundaryPolyline> read_boundaries_json(const std::string& path);

}  // namespace occl
