// Region growing, curb classification rules, boundary polylines, and
// parking-candidate selection.

#include <doctest.h>

#include <cmath>

#include "occlusynth/boundary.hpp"
#include "occlusynth/rng.hpp"
#include "occlusynth/synth_scene.hpp"

using namespace occl;

namespace {

void set_px(ScanStrip& s, int r, int c, const Point3& p, const Point3& h,
            const Vec3& n) {
  const std::size_t i = s.idx(r, c);
  s.p[i] = p;
  s.h[i] = h;
  if (s.n.empty()) s.n.assign(s.pixel_count(), {});
  s.n[i] = n;
  s.valid[i] = 1;
}

// Curb face: vertical strip of pixels along x at y = y0, z in
// [z0, z0 + height], normals pointing to -y (toward the road/sensor).
void add_curb_face(ScanStrip& s, int row0, int col0, int cols, int rows,
                   double x0, double y0, double z0, double height,
                   double dx = 0.05) {
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      set_px(s, row0 + r, col0 + c,
             {x0 + c * dx, y0, z0 + height * r / std::max(1, rows - 1)},
             {x0 + c * dx, 0.0, z0 + 2.75}, {0, -1, 0});
}

// Flat ground patch with +z normals.
void add_ground(ScanStrip& s, int row0, int col0, int cols, int rows,
                double x0, double y0, double z0) {
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      set_px(s, row0 + r, col0 + c, {x0 + 0.05 * c, y0 + 0.1 * r, z0},
             {x0 + 0.05 * c, 0.0, z0 + 2.75}, {0, 0, 1});
}

Segment segment_from_points(std::vector<Point3> pts, const Vec3& n) {
  Segment seg;
  seg.points = std::move(pts);
  seg.mean_normal = n;
  for (std::size_t i = 0; i < seg.points.size(); ++i) {
    seg.member_ids.push_back(i);
    seg.footprint.expand(seg.points[i]);
  }
  return seg;
}

// Dense synthetic curb segment: length L along x, height h, at ground z0.
Segment make_curb_segment(double length, double height, double z0,
                          double spacing = 0.04) {
  std::vector<Point3> pts;
  const int nx = static_cast<int>(length / spacing) + 1;
  const int nz = std::max(2, static_cast<int>(height / 0.02));
  for (int i = 0; i < nx; ++i)
    for (int k = 0; k < nz; ++k)
      pts.push_back({i * spacing, 5.0, z0 + height * k / (nz - 1)});
  return segment_from_points(std::move(pts), {0, -1, 0});
}

}  // namespace

TEST_CASE("region growing finds one curb segment on flat ground") {
  ScanStrip s(200);
  add_ground(s, 0, 0, 200, 30, 0.0, -3.0, 50.0);     // road
  add_curb_face(s, 40, 0, 200, 8, 0.0, 3.0, 50.0, 0.15);
  add_ground(s, 60, 0, 200, 20, 0.0, 3.0, 50.15);    // sidewalk

  const auto segments = grow_vertical_segments(s, 30.0, 50);
  REQUIRE(segments.size() == 1);
  CHECK(segments[0].member_ids.size() == 200u * 8);
  CHECK(std::abs(segments[0].mean_normal.y + 1.0) < 1e-9);
  CHECK(segments[0].footprint.max.z - segments[0].footprint.min.z ==
        doctest::Approx(0.15));
}

TEST_CASE("flat ground grows no segments") {
  ScanStrip s(100);
  add_ground(s, 0, 0, 100, 50, 0.0, -3.0, 50.0);
  CHECK(grow_vertical_segments(s, 30.0, 50).empty());
}

TEST_CASE("gap in strip space splits segments") {
  ScanStrip s(100);
  add_curb_face(s, 10, 0, 40, 6, 0.0, 3.0, 50.0, 0.15);
  add_curb_face(s, 10, 45, 40, 6, 5.0, 3.0, 50.0, 0.15);  // 5-column gap
  const auto segments = grow_vertical_segments(s, 30.0, 50);
  CHECK(segments.size() == 2);
}

TEST_CASE("classify_curb accepts a long low segment at ground height") {
  CurbRuleConfig cfg;
  const Segment curb = make_curb_segment(10.0, 0.15, 50.0);
  CHECK(classify_curb(curb, 50.0, cfg));
}

TEST_CASE("classify_curb rejects a tall wall") {
  CurbRuleConfig cfg;
  const Segment wall = make_curb_segment(10.0, 2.0, 50.0);
  CHECK(!classify_curb(wall, 50.0, cfg));  // rules (a) and (c) fail
}

TEST_CASE("classify_curb rejects a short fragment by elongation") {
  CurbRuleConfig cfg;
  const Segment frag = make_curb_segment(0.5, 0.15, 50.0);
  // 0.5 / 0.15 = 3.33 < 5
  CHECK(!classify_curb(frag, 50.0, cfg));
}

TEST_CASE("classify_curb rejects a floating segment") {
  CurbRuleConfig cfg;
  const Segment lifted = make_curb_segment(10.0, 0.15, 51.0);
  CHECK(!classify_curb(lifted, 51.0 - 0.8, cfg));  // outside +-0.5 band
}

TEST_CASE("classify_curb is monotone under stretching") {
  CurbRuleConfig cfg;
  for (double len : {7.0, 10.0, 14.0, 20.0, 40.0}) {
    const Segment seg = make_curb_segment(len, 0.15, 50.0);
    CHECK(classify_curb(seg, 50.0, cfg));
  }
}

TEST_CASE("local ground height is the 5th percentile nearby") {
  PointCloud cloud;
  for (int i = 0; i < 1000; ++i)
    cloud.points.push_back({0.01 * i, 5.2, 50.0});
  for (int i = 0; i < 50; ++i)  // some sidewalk points higher
    cloud.points.push_back({0.2 * i, 5.4, 50.15});
  const Segment seg = make_curb_segment(10.0, 0.15, 50.0);
  const double g = local_ground_height(cloud, seg);
  CHECK(g == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("boundary map fits a straight curb within 3 cm RMS") {
  CurbRuleConfig cfg;
  SeededRng rng(3);
  // noisy straight curb along x at y = 5
  std::vector<Point3> pts;
  for (int i = 0; i < 500; ++i)
    for (int k = 0; k < 4; ++k)
      pts.push_back(
          {0.03 * i, 5.0 + 0.01 * rng.normal(), 50.0 + 0.05 * k});
  const Segment seg = segment_from_points(std::move(pts), {0, -1, 0});

  const auto lines = build_boundary_map({seg}, cfg);
  REQUIRE(lines.size() == 1);
  const auto& pl = lines[0];
  CHECK(pl.arc_length() > 13.0);
  double ss = 0.0;
  for (const auto& v : pl.vertices) ss += (v.y - 5.0) * (v.y - 5.0);
  CHECK(std::sqrt(ss / pl.vertices.size()) < 0.03);
  // spacing invariant
  for (std::size_t i = 1; i < pl.vertices.size(); ++i)
    CHECK((xy(pl.vertices[i]) - xy(pl.vertices[i - 1])).norm() <= 1.0);
}

TEST_CASE("collinear curbs 0.3 m apart chain into one polyline") {
  CurbRuleConfig cfg;
  const Segment a = make_curb_segment(4.0, 0.15, 50.0);
  Segment b = make_curb_segment(4.0, 0.15, 50.0);
  for (auto& p : b.points) p.x += 4.3;  // 0.3 m gap
  b.footprint = Aabb{};
  for (const auto& p : b.points) b.footprint.expand(p);

  const auto lines = build_boundary_map({a, b}, cfg);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].arc_length() > 7.5);
}

TEST_CASE("perpendicular curbs stay separate") {
  CurbRuleConfig cfg;
  const Segment a = make_curb_segment(4.0, 0.15, 50.0);
  // perpendicular segment starting right at a's end
  std::vector<Point3> pts;
  for (int i = 0; i < 100; ++i)
    for (int k = 0; k < 3; ++k)
      pts.push_back({4.1, 5.0 + 0.04 * i, 50.0 + 0.05 * k});
  const Segment b = segment_from_points(std::move(pts), {-1, 0, 0});

  const auto lines = build_boundary_map({a, b}, cfg);
  CHECK(lines.size() == 2);
}

TEST_CASE("sidewalk side inferred from the ground step") {
  CurbRuleConfig cfg;
  const Segment seg = make_curb_segment(10.0, 0.15, 50.0);

  // context: road at y < 5 (z = 50), sidewalk at y > 5 (z = 50.15)
  PointCloud ctx;
  SeededRng rng(9);
  for (int i = 0; i < 4000; ++i) {
    const double x = rng.uniform(0, 10);
    const double y = rng.uniform(3.0, 7.0);
    ctx.points.push_back({x, y, y < 5.0 ? 50.0 : 50.15});
  }
  const auto lines = build_boundary_map({seg}, cfg, &ctx);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].sidewalk_side.y > 0.9);  // +y is the high side

  // without context, the segment normal (toward the road) decides
  const auto lines2 = build_boundary_map({seg}, cfg);
  REQUIRE(lines2.size() == 1);
  CHECK(lines2[0].sidewalk_side.y > 0.9);  // normal is -y, road is -y
}

TEST_CASE("candidates respect length and clearance gates") {
  CurbRuleConfig cfg;
  SeededRng rng(11);

  // 6 m polyline: no candidates
  const auto short_lines = build_boundary_map(
      {make_curb_segment(6.0, 0.15, 50.0)}, cfg);
  REQUIRE(short_lines.size() == 1);
  CHECK(select_parking_candidates(short_lines, cfg, rng).empty());

  // 8 m polyline: anchors confined to the central metre
  const auto eight = build_boundary_map(
      {make_curb_segment(8.0, 0.15, 50.0)}, cfg);
  REQUIRE(eight.size() == 1);
  const double len = eight[0].arc_length();
  const auto cands = select_parking_candidates(eight, cfg, rng);
  REQUIRE(!cands.empty());
  for (const auto& c : cands) {
    // arc position via x coordinate (straight line along x)
    const double x0 = eight[0].vertices.front().x;
    const double s = c.anchor.x - x0;
    CHECK(s >= 3.5 - 1e-9);
    CHECK(s <= len - 3.5 + 1e-9);
    // direction is perpendicular to side
    CHECK(std::abs(c.road_dir.dot(c.sidewalk_side)) < 1e-12);
  }
}

TEST_CASE("candidate generation is deterministic") {
  CurbRuleConfig cfg;
  const auto lines = build_boundary_map(
      {make_curb_segment(20.0, 0.15, 50.0)}, cfg);
  SeededRng a(5), b(5);
  const auto c1 = select_parking_candidates(lines, cfg, a);
  const auto c2 = select_parking_candidates(lines, cfg, b);
  REQUIRE(c1.size() == c2.size());
  CHECK(!c1.empty());
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].anchor == c2[i].anchor);
    CHECK(c1[i].road_dir.x == c2[i].road_dir.x);
  }
}

TEST_CASE("full strip pipeline: synthetic street yields usable candidates") {
  SynthStreetConfig street;
  street.length = 20.0;
  street.col_spacing = 0.2;
  SeededRng rng(77);
  ScanStrip strip = make_street_strip(street, rng);
  strip = estimate_normals(strip);
  FilterConfig fcfg;
  strip = filter_by_height(filter_by_range(strip, fcfg), fcfg);

  CurbRuleConfig cfg;
  const auto segments = grow_vertical_segments(
      strip, cfg.grow_angle_tol_deg, cfg.grow_min_points);
  REQUIRE(!segments.empty());

  const PointCloud cloud = strip_to_cloud(strip);
  std::vector<Segment> curbs;
  for (const auto& seg : segments) {
    const double ground = local_ground_height(cloud, seg);
    if (classify_curb(seg, ground, cfg)) curbs.push_back(seg);
  }
  REQUIRE(!curbs.empty());

  const auto lines = build_boundary_map(curbs, cfg, &cloud);
  REQUIRE(!lines.empty());

  SeededRng cand_rng(3);
  const auto cands = select_parking_candidates(lines, cfg, cand_rng);
  REQUIRE(!cands.empty());
  for (const auto& c : cands) {
    // anchor near the known curb line y = 3, sidewalk on +y
    CHECK(std::abs(c.anchor.y - street.y_curb) < 0.25);
    CHECK(c.sidewalk_side.y > 0.8);
  }
}
