// Mesh ingestion, canonicalization, procedural car, RANSAC ground plane,
// and the vehicle posing procedure.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "occlusynth/mesh.hpp"
#include "occlusynth/placement.hpp"
#include "occlusynth/rng.hpp"

using namespace occl;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kCubeObj =
    "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n"
    "v 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n"
    "f 1 3 2\nf 2 3 4\nf 5 6 7\nf 6 8 7\n"
    "f 1 2 5\nf 2 6 5\nf 3 7 4\nf 4 7 8\n"
    "f 1 5 3\nf 3 5 7\nf 2 4 6\nf 4 8 6\n";

PointCloud plane_cloud(double a, double b, double c, std::size_t n,
                       SeededRng& rng, double noise = 0.0,
                       double outlier_frac = 0.0) {
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.8, 1.8), y = rng.uniform(-1.8, 1.8);
    double z = a * x + b * y + c;
    if (noise > 0) z += noise * rng.normal();
    if (outlier_frac > 0 && rng.next_double() < outlier_frac)
      z += rng.uniform(0.5, 3.0);
    cloud.points.push_back({x, y, z});
  }
  return cloud;
}

}  // namespace

TEST_CASE("obj loader: cube, quads rejected, duplicates merged") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path();

  write_file(dir / "cube.obj", kCubeObj);
  const TriangleMesh cube = load_obj((dir / "cube.obj").string());
  CHECK(cube.vertex_count() == 8);
  CHECK(cube.triangle_count() == 12);

  write_file(dir / "quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  CHECK_THROWS_WITH_AS(load_obj((dir / "quad.obj").string()),
                       doctest::Contains("triangulate"), error);

  // duplicate vertices within 1e-9 collapse; zero-area triangle dropped
  write_file(dir / "dup.obj",
             "v 0 0 0\nv 1 0 0\nv 1 0 0.0000000001\nv 0 1 0\n"
             "f 1 2 4\nf 1 3 4\nf 1 2 3\n");
  const TriangleMesh dup = load_obj((dir / "dup.obj").string());
  CHECK(dup.vertex_count() == 3);
  CHECK(dup.triangle_count() == 2);  // degenerate f 1 2 3 dropped

  write_file(dir / "empty.obj", "# nothing\n");
  CHECK_THROWS_AS(load_obj((dir / "empty.obj").string()), error);

  for (const char* f : {"cube.obj", "quad.obj", "dup.obj", "empty.obj"})
    fs::remove(dir / f);
}

TEST_CASE("obj save/load round-trip") {
  SeededRng rng(15);
  VehicleDims dims;
  const TriangleMesh car = procedural_car(dims, rng);
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "car_rt.obj";
  save_obj(path.string(), car);
  const TriangleMesh back = load_obj(path.string());
  CHECK(back.vertex_count() == car.vertex_count());
  CHECK(back.triangle_count() == car.triangle_count());
  for (std::size_t i = 0; i < car.vertices.size(); ++i)
    CHECK(dist(back.vertices[i], car.vertices[i]) < 1e-15);
  fs::remove(path);
}

TEST_CASE("canonicalize scales a box to the target length") {
  TriangleMesh box;
  // 2 x 1 x 0.8 box, shifted away from the origin
  for (int i = 0; i < 8; ++i)
    box.vertices.push_back(
        {i & 1 ? 12.0 : 10.0, i & 2 ? 6.0 : 5.0, i & 4 ? 3.8 : 3.0});
  box.triangles = {{0, 1, 2}, {1, 3, 2}, {4, 6, 5}, {5, 6, 7},
                   {0, 4, 1}, {1, 4, 5}, {2, 3, 6}, {3, 7, 6},
                   {0, 2, 4}, {2, 6, 4}, {1, 5, 3}, {3, 5, 7}};

  VehicleDims dims;  // length 4.5
  const TriangleMesh canon = canonicalize_vehicle(box, dims);
  const Aabb b = canon.bounds();
  CHECK(b.extent().x == doctest::Approx(4.5).epsilon(1e-12));
  CHECK(b.extent().y == doctest::Approx(2.25).epsilon(1e-12));
  CHECK(b.extent().z == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(b.min.z == doctest::Approx(0.0));
  CHECK(b.min.x == doctest::Approx(-2.25));
  CHECK(b.max.x == doctest::Approx(2.25));

  // Idempotence: canonicalizing the result changes nothing.
  const TriangleMesh again = canonicalize_vehicle(canon, dims);
  for (std::size_t i = 0; i < canon.vertices.size(); ++i)
    CHECK(dist(again.vertices[i], canon.vertices[i]) < 1e-12);
}

TEST_CASE("canonicalize rejects ambiguous extents") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "cube2.obj";
  write_file(path, kCubeObj);
  const TriangleMesh cube = load_obj(path.string());
  VehicleDims dims;
  CHECK_THROWS_WITH_AS(canonicalize_vehicle(cube, dims),
                       doctest::Contains("ambiguous"), error);
  fs::remove(path);
}

TEST_CASE("procedural car: exact bbox, 24 triangles, watertight") {
  SeededRng rng(1234);
  VehicleDims dims;
  const TriangleMesh car = procedural_car(dims, rng);
  CHECK(car.triangle_count() == 24);

  const Aabb b = car.bounds();
  CHECK(b.extent().x == doctest::Approx(4.5).epsilon(1e-12));
  CHECK(b.extent().y == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(b.extent().z == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(b.min.z == doctest::Approx(0.0));

  // Watertight: every undirected edge is shared by exactly two triangles.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& t : car.triangles)
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t a = t[e], b2 = t[(e + 1) % 3];
      edges[{std::min(a, b2), std::max(a, b2)}]++;
    }
  for (const auto& [edge, count] : edges) CHECK(count == 2);
}

TEST_CASE("ground plane on a noiseless flat patch is exact") {
  SeededRng rng(50);
  PointCloud cloud = plane_cloud(0, 0, 5.0, 400, rng);
  PlacementConfig cfg;
  SeededRng fit_rng(1);
  const GroundPlane plane = fit_ground_plane(cloud, {0, 0, 5}, cfg, fit_rng);
  CHECK(std::abs(plane.normal.z - 1.0) < 1e-12);
  CHECK(std::abs(plane.d - 5.0) < 1e-12);
  CHECK(plane.rms_residual < 1e-12);
  std::size_t expect = 0;
  for (const auto& p : cloud.points)
    if (dist_xy(p, {0, 0, 5}) <= cfg.plane_radius) ++expect;
  CHECK(plane.inlier_count == expect);
}

TEST_CASE("ground plane survives 10 percent outliers") {
  SeededRng rng(51);
  PointCloud cloud = plane_cloud(0, 0, 5.0, 600, rng, 0.005, 0.10);
  PlacementConfig cfg;
  SeededRng fit_rng(2);
  const GroundPlane plane = fit_ground_plane(cloud, {0, 0, 5}, cfg, fit_rng);
  const double tilt_deg =
      std::acos(std::clamp(plane.normal.z, -1.0, 1.0)) * 180.0 / M_PI;
  CHECK(tilt_deg < 0.5);
  CHECK(std::abs(plane.height_at(0, 0) - 5.0) < 0.01);
}

TEST_CASE("ground plane recovers a 10 degree slope") {
  SeededRng rng(52);
  const double slope = std::tan(10.0 * M_PI / 180.0);
  PointCloud cloud = plane_cloud(slope, 0, 5.0, 600, rng, 0.003);
  PlacementConfig cfg;
  SeededRng fit_rng(3);
  const GroundPlane plane = fit_ground_plane(cloud, {0, 0, 5}, cfg, fit_rng);
  const double tilt_deg =
      std::acos(std::clamp(plane.normal.z, -1.0, 1.0)) * 180.0 / M_PI;
  CHECK(std::abs(tilt_deg - 10.0) < 0.5);
}

TEST_CASE("ground plane needs enough support") {
  SeededRng rng(53);
  PointCloud cloud = plane_cloud(0, 0, 5.0, 30, rng);
  PlacementConfig cfg;
  SeededRng fit_rng(4);
  CHECK_THROWS_WITH_AS(fit_ground_plane(cloud, {0, 0, 5}, cfg, fit_rng),
                       doctest::Contains("no reliable ground"), error);
}

TEST_CASE("ground plane fit is seed-deterministic") {
  SeededRng rng(54);
  PointCloud cloud = plane_cloud(0.05, -0.02, 5.0, 500, rng, 0.01, 0.2);
  PlacementConfig cfg;
  SeededRng a(11), b(11);
  const GroundPlane p1 = fit_ground_plane(cloud, {0, 0, 5}, cfg, a);
  const GroundPlane p2 = fit_ground_plane(cloud, {0, 0, 5}, cfg, b);
  CHECK(p1.normal == p2.normal);
  CHECK(p1.d == p2.d);
  CHECK(p1.inlier_count == p2.inlier_count);
}

TEST_CASE("pose on a flat plane: offset arithmetic and yaw") {
  ParkingCandidate cand;
  cand.anchor = {10, 20, 5};
  cand.road_dir = {1, 0};
  cand.sidewalk_side = {0, 1};  // road toward -y

  GroundPlane plane;  // z = 5
  plane.normal = {0, 0, 1};
  plane.d = 5.0;

  VehicleDims dims;  // width 1.8
  PlacementConfig cfg;
  cfg.p_on_road = 1.0;
  cfg.p_sidewalk = 0.0;
  cfg.p_perpendicular = 0.0;

  SeededRng rng(6);
  const VehiclePose pose = pose_vehicle(cand, plane, dims, cfg, rng);
  CHECK(pose.mode == ParkingMode::on_road);
  // offset = width/2 + U(0, 0.3), toward the road (-y)
  CHECK(pose.lateral_offset >= 0.9);
  CHECK(pose.lateral_offset <= 1.2);
  CHECK(pose.translation.x == doctest::Approx(10.0));
  CHECK(pose.translation.y ==
        doctest::Approx(20.0 - pose.lateral_offset).epsilon(1e-12));
  CHECK(pose.translation.z == doctest::Approx(5.0));
  // yaw 0: +x stays +x
  CHECK(pose.apply(Point3{1, 0, 0}).x == doctest::Approx(11.0));

  // Rotation is orthonormal with det +1.
  const auto& r = pose.rotation_rows;
  // rows of R are (ex,ey,ez) components; orthonormality of columns:
  Vec3 ex{r[0].x, r[1].x, r[2].x}, ey{r[0].y, r[1].y, r[2].y},
      ez{r[0].z, r[1].z, r[2].z};
  CHECK(std::abs(ex.norm() - 1) < 1e-12);
  CHECK(std::abs(ey.norm() - 1) < 1e-12);
  CHECK(std::abs(ez.norm() - 1) < 1e-12);
  CHECK(std::abs(ex.dot(ey)) < 1e-12);
  CHECK(std::abs(ex.dot(ez)) < 1e-12);
  const double det = ex.dot(ey.cross(ez));
  CHECK(std::abs(det - 1.0) < 1e-9);
}

TEST_CASE("pose seats the chassis on a sloped plane") {
  ParkingCandidate cand;
  cand.anchor = {0, 0, 5};
  cand.road_dir = {1, 0};
  cand.sidewalk_side = {0, 1};

  GroundPlane plane;  // 10 degrees about the x axis
  const double a = 10.0 * M_PI / 180.0;
  plane.normal = Vec3{0, -std::sin(a), std::cos(a)}.normalized();
  plane.d = plane.normal.dot(Vec3{0, 0, 5});

  VehicleDims dims;
  PlacementConfig cfg;
  cfg.p_on_road = 1.0;
  cfg.p_sidewalk = 0.0;
  cfg.p_perpendicular = 0.0;
  SeededRng rng(8);
  const VehiclePose pose = pose_vehicle(cand, plane, dims, cfg, rng);

  SeededRng mesh_rng(9);
  const TriangleMesh raw = procedural_car(dims, mesh_rng);
  for (const auto& v : raw.vertices) {
    if (v.z != 0.0) continue;  // bottom-face vertices
    const Point3 w = pose.apply(v);
    CHECK(std::abs(plane.signed_distance(w)) < 1e-3);
  }
}

TEST_CASE("pose json round-trip and invariant enforcement") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "poses_rt.json";

  VehiclePose pose;
  pose.rotation_rows = {Vec3{0, -1, 0}, Vec3{1, 0, 0}, Vec3{0, 0, 1}};
  pose.translation = {10, 20, 5};
  pose.mesh_id = "sedan.obj";
  pose.mode = ParkingMode::on_sidewalk;
  pose.lateral_offset = -0.2;
  write_poses_json(path.string(), {pose}, 7);

  const auto back = read_poses_json(path.string());
  REQUIRE(back.size() == 1);
  CHECK(back[0].rotation_rows[0] == pose.rotation_rows[0]);
  CHECK(back[0].translation == pose.translation);
  CHECK(back[0].mesh_id == "sedan.obj");
  CHECK(back[0].mode == ParkingMode::on_sidewalk);

  // a corrupted rotation is rejected on load
  VehiclePose bad = pose;
  bad.rotation_rows[0] = {0.5, -1, 0};
  write_poses_json(path.string(), {bad}, 7);
  CHECK_THROWS_WITH_AS(read_poses_json(path.string()),
                       doctest::Contains("orthonormal"), error);
  fs::remove(path);
}

TEST_CASE("pose modes cover sidewalk and perpendicular") {
  ParkingCandidate cand;
  cand.anchor = {0, 0, 0};
  cand.road_dir = {1, 0};
  cand.sidewalk_side = {0, 1};
  GroundPlane plane;
  plane.normal = {0, 0, 1};
  plane.d = 0;
  VehicleDims dims;

  PlacementConfig cfg;
  cfg.p_on_road = 0.0;
  cfg.p_sidewalk = 1.0;
  cfg.p_perpendicular = 0.0;
  SeededRng rng(12);
  const VehiclePose sidewalk = pose_vehicle(cand, plane, dims, cfg, rng);
  CHECK(sidewalk.mode == ParkingMode::on_sidewalk);
  // q in (0.25, 0.75) of the width on the sidewalk: center stays within
  // 0.45 m of the anchor either way
  CHECK(std::abs(sidewalk.translation.y) <= 0.45 * 1.0001);

  cfg.p_sidewalk = 0.0;
  cfg.p_perpendicular = 1.0;
  cfg.p_on_road = 0.0;
  SeededRng rng2(13);
  const VehiclePose perp = pose_vehicle(cand, plane, dims, cfg, rng2);
  CHECK(perp.mode == ParkingMode::perpendicular);
  // heading is along the sidewalk normal, so +x maps near +-y
  const Point3 fwd = perp.apply(Point3{1, 0, 0}) - perp.translation;
  CHECK(std::abs(fwd.x) < 1e-9);
  CHECK(std::abs(std::abs(fwd.y) - 1.0) < 1e-9);
  // nose-in: shifted by length/2 plus up to 0.3
  CHECK(perp.lateral_offset >= 2.25);
  CHECK(perp.lateral_offset <= 2.55);

  // Same seed, same pose.
  SeededRng rng3(13);
  const VehiclePose perp2 = pose_vehicle(cand, plane, dims, cfg, rng3);
  CHECK(perp.translation == perp2.translation);
  CHECK(perp.rotation_rows[0] == perp2.rotation_rows[0]);
}
