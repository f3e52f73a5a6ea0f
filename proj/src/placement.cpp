#include "occlusynth/placement.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace occl {

const char* to_string(ParkingMode m) {
  switch (m) {
    case ParkingMode::on_road:
      return "on_road";
    case ParkingMode::on_sidewalk:
      return "on_sidewalk";
    case ParkingMode::perpendicular:
      return "perpendicular";
  }
  return "?";
}

ParkingMode parking_mode_from_string(const std::string& s) {
  if (s == "on_road") return ParkingMode::on_road;
  if (s == "on_sidewalk") return ParkingMode::on_sidewalk;
  if (s == "perpendicular") return ParkingMode::perpendicular;
  throw error("unknown parking mode '" + s + "'");
}

TriangleMesh VehiclePose::apply(const TriangleMesh& mesh) const {
  TriangleMesh out = mesh;
  out.transform(rotation_rows, translation);
  return out;
}

void PlacementConfig::validate() const {
  if (!(plane_radius > 0) || !(plane_inlier_tol > 0) || plane_iterations < 1)
    throw error("placement config: invalid plane parameters");
  if (!(plane_min_inlier_ratio > 0 && plane_min_inlier_ratio <= 1))
    throw error("placement config: inlier ratio must be in (0, 1]");
  const double psum = p_on_road + p_sidewalk + p_perpendicular;
  if (p_on_road < 0 || p_sidewalk < 0 || p_perpendicular < 0 ||
      std::abs(psum - 1.0) > 1e-9)
    throw error("placement config: mode probabilities must sum to 1");
  if (!(max_road_offset >= 0))
    throw error("placement config: negative road offset");
}

GroundPlane fit_ground_plane(const PointCloud& cloud, const Point3& center,
                             const PlacementConfig& cfg, SeededRng& rng) {
  cfg.validate();
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (dist_xy(cloud.points[i], center) <= cfg.plane_radius) ids.push_back(i);
  if (ids.size() < cfg.plane_min_points)
    throw error("no reliable ground: only " + std::to_string(ids.size()) +
                " points within " + std::to_string(cfg.plane_radius) + " m");

  const std::size_t n = ids.size();
  std::size_t best_count = 0;
  Vec3 best_n{0, 0, 1};
  double best_d = 0.0;

  for (int it = 0; it < cfg.plane_iterations; ++it) {
    std::size_t a = rng.next_below(n), b = rng.next_below(n),
                c = rng.next_below(n);
    if (a == b || b == c || a == c) continue;
    const Point3 &pa = cloud.points[ids[a]], &pb = cloud.points[ids[b]],
                 &pc = cloud.points[ids[c]];
    Vec3 nrm = (pb - pa).cross(pc - pa);
    const double len = nrm.norm();
    if (len < 1e-12) continue;
    nrm = nrm / len;
    const double d = nrm.dot(pa);
    std::size_t count = 0;
    for (const auto id : ids)
      if (std::abs(nrm.dot(cloud.points[id]) - d) <= cfg.plane_inlier_tol)
        ++count;
    if (count > best_count) {
      best_count = count;
      best_n = nrm;
      best_d = d;
    }
  }

  if (static_cast<double>(best_count) <
      cfg.plane_min_inlier_ratio * static_cast<double>(n))
    throw error("no reliable ground: inlier ratio " +
                std::to_string(static_cast<double>(best_count) /
                               static_cast<double>(n)) +
                " below threshold");

  // Least-squares refit on the consensus set.
  std::vector<std::size_t> inliers;
  inliers.reserve(best_count);
  for (const auto id : ids)
    if (std::abs(best_n.dot(cloud.points[id]) - best_d) <= cfg.plane_inlier_tol)
      inliers.push_back(id);

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto id : inliers)
    centroid += Eigen::Vector3d(cloud.points[id].x, cloud.points[id].y,
                                cloud.points[id].z);
  centroid /= static_cast<double>(inliers.size());

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto id : inliers) {
    const Eigen::Vector3d q =
        Eigen::Vector3d(cloud.points[id].x, cloud.points[id].y,
                        cloud.points[id].z) -
        centroid;
    scatter += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const Eigen::Vector3d nv = eig.eigenvectors().col(0);  // smallest eigenvalue

  GroundPlane plane;
  plane.normal = Vec3{nv.x(), nv.y(), nv.z()};
  if (plane.normal.z < 0) plane.normal = -plane.normal;
  if (plane.normal.z == 0) throw error("no reliable ground: vertical fit");
  plane.d = plane.normal.dot(Vec3{centroid.x(), centroid.y(), centroid.z()});
  plane.inlier_count = inliers.size();

  double ss = 0.0;
  for (const auto id : inliers) {
    const double r = plane.signed_distance(cloud.points[id]);
    ss += r * r;
  }
  plane.rms_residual = std::sqrt(ss / static_cast<double>(inliers.size()));
  return plane;
}

VehiclePose pose_vehicle(const ParkingCandidate& candidate,
                         const GroundPlane& plane, const VehicleDims& dims,
                         const PlacementConfig& cfg, SeededRng& rng) {
  cfg.validate();
  dims.validate();

  const double u = rng.next_double();
  ParkingMode mode;
  if (u < cfg.p_on_road)
    mode = ParkingMode::on_road;
  else if (u < cfg.p_on_road + cfg.p_sidewalk)
    mode = ParkingMode::on_sidewalk;
  else
    mode = ParkingMode::perpendicular;

  const Vec2 toward_road = -candidate.sidewalk_side;
  Vec2 center2 = xy(candidate.anchor);
  double lateral = 0.0;
  Vec2 forward = candidate.road_dir;

  switch (mode) {
    case ParkingMode::on_road:
      lateral = dims.width / 2.0 + rng.uniform(0.0, cfg.max_road_offset);
      center2 = center2 + toward_road * lateral;
      break;
    case ParkingMode::on_sidewalk: {
      // A quarter to three quarters of the body over the curb.
      const double q = rng.uniform(0.25, 0.75);
      lateral = dims.width / 2.0 - q * dims.width;  // signed toward road
      center2 = center2 + toward_road * lateral;
      break;
    }
    case ParkingMode::perpendicular: {
      lateral = dims.length / 2.0 + rng.uniform(0.0, cfg.max_road_offset);
      center2 = center2 + toward_road * lateral;
      forward = toward_road;  // nose away from the curb
      break;
    }
  }

  // Frame: +z along the plane normal, +x along the (projected) heading.
  const Vec3 ez = plane.normal;
  Vec3 f3{forward.x, forward.y, 0.0};
  f3 = f3 - ez * f3.dot(ez);
  const double flen = f3.norm();
  if (flen < 1e-9) throw error("pose: road direction parallel to plane normal");
  const Vec3 ex = f3 / flen;
  const Vec3 ey = ez.cross(ex);

  VehiclePose pose;
  // Columns of the rotation are (ex, ey, ez); stored as rows.
  pose.rotation_rows = {Vec3{ex.x, ey.x, ez.x}, Vec3{ex.y, ey.y, ez.y},
                        Vec3{ex.z, ey.z, ez.z}};
  pose.translation =
      Vec3{center2.x, center2.y, plane.height_at(center2.x, center2.y)};
  pose.mode = mode;
  pose.lateral_offset = lateral;
  return pose;
}

}  // namespace occl
