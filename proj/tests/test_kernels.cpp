// Lattice kernels: gridding, gridding reverse, cubic feature sampling,
// and their analytic gradients against central finite differences.

#include <doctest.h>

#include <cmath>

#include "occlusynth/grid.hpp"
#include "occlusynth/rng.hpp"
#include "occlusynth/sgc.hpp"

using namespace occl;

namespace {

PointCloud single(const Point3& p) {
  PointCloud c;
  c.frame = Frame::normalized;
  c.points.push_back(p);
  return c;
}

}  // namespace

TEST_CASE("gridding of a point on a vertex puts all mass there") {
  DenseGrid probe(80);
  // vertex (40, 40, 40) has coordinate -1 + 40 * 2/79
  const double v = -1.0 + 40 * probe.spacing();
  const DenseGrid g = gridding(single({v, v, v}), 80);
  CHECK(g.values[g.index(40, 40, 40)] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.mass() == doctest::Approx(1.0).epsilon(1e-12));
  // every other vertex is zero
  double other = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i)
    if (i != g.index(40, 40, 40)) other += std::abs(g.values[i]);
  CHECK(other == doctest::Approx(0.0));
}

TEST_CASE("gridding of a cell-center point spreads 1/8 per corner") {
  DenseGrid probe(80);
  const double h = probe.spacing();
  const Point3 p{-1.0 + 10.5 * h, -1.0 + 20.5 * h, -1.0 + 30.5 * h};
  const DenseGrid g = gridding(single(p), 80);
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz)
        CHECK(g.values[g.index(10 + dx, 20 + dy, 30 + dz)] ==
              doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("gridding mass equals point count and weights sum to one") {
  SeededRng rng(404);
  PointCloud cloud;
  cloud.frame = Frame::normalized;
  for (int i = 0; i < 5000; ++i)
    cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1),
                            rng.uniform(-1, 1)});
  const DenseGrid g = gridding(cloud, 80);
  CHECK(std::abs(g.mass() - 5000.0) / 5000.0 < 1e-9);

  // Per-point partition of unity at a coarse resolution.
  for (int i = 0; i < 100; ++i) {
    const DenseGrid one = gridding(single(cloud.points[i]), 5);
    CHECK(one.mass() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gridding rejects points outside the cube") {
  CHECK_THROWS_AS(gridding(single({1.5, 0, 0}), 80), error);
  CHECK_THROWS_AS(gridding(single({0, -1.0000001, 0}), 80), error);
  // boundary itself is fine
  CHECK_NOTHROW(gridding(single({1.0, -1.0, 1.0}), 80));
}

TEST_CASE("gridding mean normalization divides by contributor count") {
  PointCloud two;
  two.frame = Frame::normalized;
  DenseGrid probe(5);
  const double v = -1.0 + 2 * probe.spacing();
  two.points.push_back({v, v, v});
  two.points.push_back({v, v, v});
  const DenseGrid sum = gridding(two, 5, GriddingNorm::sum);
  const DenseGrid mean = gridding(two, 5, GriddingNorm::mean);
  CHECK(sum.values[sum.index(2, 2, 2)] == doctest::Approx(2.0));
  CHECK(mean.values[mean.index(2, 2, 2)] == doctest::Approx(1.0));
}

TEST_CASE("gridding_reverse on all-zero and uniform grids") {
  DenseGrid zero(80);
  CHECK(gridding_reverse(zero).empty());

  DenseGrid uniform(80);
  std::fill(uniform.values.begin(), uniform.values.end(), 1.0);
  const PointCloud pts = gridding_reverse(uniform);
  CHECK(pts.size() == 79u * 79u * 79u);  // 493,039
  // each point is its cell center
  const double h = uniform.spacing();
  CHECK(pts.points[0].x == doctest::Approx(-1.0 + h / 2).epsilon(1e-12));
  CHECK(pts.points.back().z == doctest::Approx(1.0 - h / 2).epsilon(1e-12));
}

TEST_CASE("gridding_reverse recovers a single gridded point exactly") {
  SeededRng rng(777);
  for (int t = 0; t < 100; ++t) {
    // strictly inside a cell so all 8 corner weights are nonzero
    DenseGrid probe(80);
    const double h = probe.spacing();
    Point3 p;
    for (int a = 0; a < 3; ++a) {
      const auto cell = static_cast<int>(rng.next_below(79));
      p[a] = -1.0 + (cell + rng.uniform(0.02, 0.98)) * h;
    }
    const PointCloud rec = gridding_reverse(gridding(single(p), 80));
    REQUIRE(rec.size() == 1);
    CHECK(std::abs(rec.points[0].x - p.x) < 1e-12);
    CHECK(std::abs(rec.points[0].y - p.y) < 1e-12);
    CHECK(std::abs(rec.points[0].z - p.z) < 1e-12);
  }
}

TEST_CASE("cubic sampling of constant maps returns the constant") {
  FeatureMap m(10, 4);
  std::fill(m.values.begin(), m.values.end(), 2.5);
  std::vector<Point3> pts{{0.1, -0.3, 0.7}, {-0.95, 0.0, 0.2}};
  const auto f = cubic_feature_sampling(pts, {&m});
  REQUIRE(f.size() == 2 * 8 * 4);
  for (const double v : f) CHECK(v == 2.5);
}

TEST_CASE("cubic sampling on a shared face picks the lower cell") {
  // 3-vertex lattice: vertices at -1, 0, 1; cells [0] and [1].
  FeatureMap m(3, 1);
  for (int ix = 0; ix < 3; ++ix)
    for (int iy = 0; iy < 3; ++iy)
      for (int iz = 0; iz < 3; ++iz)
        m.values[m.index(0, ix, iy, iz)] = 100 * ix + 10 * iy + iz;

  // x = 0 exactly on the interior vertex: lower cell 0 in x.
  std::vector<Point3> pts{{0.0, -0.5, -0.5}};
  const auto f = cubic_feature_sampling(pts, {&m});
  REQUIRE(f.size() == 8);
  // corners must come from ix in {0, 1}; z-minor order
  CHECK(f[0] == 0);    // (0,0,0)
  CHECK(f[1] == 1);    // (0,0,1)
  CHECK(f[2] == 10);   // (0,1,0)
  CHECK(f[4] == 100);  // (1,0,0)
}

TEST_CASE("cubic sampling concatenates maps coarse to fine") {
  FeatureMap coarse(4, 2), fine(8, 3);
  std::fill(coarse.values.begin(), coarse.values.end(), 1.0);
  std::fill(fine.values.begin(), fine.values.end(), 2.0);
  std::vector<Point3> pts{{0.3, 0.3, 0.3}};
  const auto f = cubic_feature_sampling(pts, {&coarse, &fine});
  REQUIRE(f.size() == 8u * 2 + 8u * 3);
  for (std::size_t i = 0; i < 16; ++i) CHECK(f[i] == 1.0);
  for (std::size_t i = 16; i < 40; ++i) CHECK(f[i] == 2.0);
}

TEST_CASE("cubic sampling rejects out-of-cube points") {
  FeatureMap m(4, 1);
  std::vector<Point3> pts{{1.2, 0, 0}};
  CHECK_THROWS_AS(cubic_feature_sampling(pts, {&m}), error);
}

TEST_CASE("grad_check validates eps and kernel names") {
  SeededRng rng(5);
  CHECK_THROWS_AS(grad_check("gridding", 1, 0.0, rng), error);
  CHECK_THROWS_AS(grad_check("gridding", 1, -1e-6, rng), error);
  CHECK_THROWS_AS(grad_check("nonsense", 1, 1e-6, rng), error);
}

TEST_CASE("gridding gradient matches finite differences") {
  SeededRng rng(1001);
  const auto report = grad_check("gridding", 10, 1e-6, rng);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("gridding_reverse gradient matches finite differences") {
  SeededRng rng(1002);
  const auto report = grad_check("gridding_reverse", 10, 1e-6, rng);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("cubic feature sampling gradient matches finite differences") {
  SeededRng rng(1003);
  const auto report = grad_check("cubic_feature_sampling", 5, 1e-6, rng);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("folding weight gradients match finite differences tightly") {
  SeededRng rng(1004);
  const auto report = grad_check("folding", 5, 1e-6, rng);
  CHECK(report.max_rel_error < 1e-6);  // plain dense layers
}
