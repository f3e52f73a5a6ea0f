// Vehicle placement: local RANSAC ground-plane fitting and the three-step
// posing procedure (lateral shift off the boundary, terrain alignment,
// orientation along the road).

#pragma once

#include <array>
#include <string>

#include "occlusynth/boundary.hpp"
#include "occlusynth/geom.hpp"
#include "occlusynth/mesh.hpp"
#include "occlusynth/rng.hpp"

namespace occl {

/// Plane n . x = d with unit upward normal.
struct GroundPlane {
  Vec3 normal{0, 0, 1};
  double d = 0.0;
  std::size_t inlier_count = 0;
  double rms_residual = 0.0;  // meters, over inliers after refit

  double height_at(double x, double y) const {
    return (d - normal.x * x - normal.y * y) / normal.z;
  }
  double signed_distance(const Point3& p) const { return normal.dot(p) - d; }
};

enum class ParkingMode : std::uint8_t { on_road, on_sidewalk, perpendicular };

const char* to_string(ParkingMode m);
ParkingMode parking_mode_from_string(const std::string& s);

/// Rigid model-to-world pose of a placed vehicle.
struct VehiclePose {
  std::array<Vec3, 3> rotation_rows;  // row-major 3x3, proper rotation
  Vec3 translation;
  std::string mesh_id;
  ParkingMode mode = ParkingMode::on_road;
  double lateral_offset = 0.0;  // meters, applied off the boundary

  Point3 apply(const Point3& p) const {
    return Vec3{rotation_rows[0].dot(p), rotation_rows[1].dot(p),
                rotation_rows[2].dot(p)} +
           translation;
  }
  TriangleMesh apply(const TriangleMesh& mesh) const;
};

struct PlacementConfig {
  double plane_radius = 2.0;        // meters around the candidate
  double plane_inlier_tol = 0.03;   // meters
  int plane_iterations = 200;
  double plane_min_inlier_ratio = 0.40;
  std::size_t plane_min_points = 50;

  double max_road_offset = 0.3;  // meters, random gap to the boundary
  double p_on_road = 0.70;
  double p_sidewalk = 0.25;
  double p_perpendicular = 0.05;

  void validate() const;
};

/// RANSAC plane fit over cloud points within cfg.plane_radius (xy) of
/// `center`, least-squares refit on the inliers, normal oriented upward.
/// Throws "no reliable ground" when points or inliers are insufficient.
GroundPlane fit_ground_plane(const PointCloud& cloud, const Point3& center,
                             const PlacementConfig& cfg, SeededRng& rng);

/// Poses a canonicalized vehicle mesh at a parking candidate:
/// lateral shift by half width plus a random offset (or partially onto the
/// sidewalk), chassis seated on the plane, yaw along (or occasionally
/// perpendicular to) the road direction.
VehiclePose pose_vehicle(const ParkingCandidate& candidate,
                         const GroundPlane& plane, const VehicleDims& dims,
                         const PlacementConfig& cfg, SeededRng& rng);

/// Pose list serialization: 4x4 row-major matrices plus metadata.
void write_poses_json(const std::string& path,
                      const std::vector<VehiclePose>& poses,
                      std::uint64_t seed);
std::vector<VehiclePose> read_poses_json(const std::string& path);

}  // namespace occl
