// Subsampling, normalization, augmentation, geographic splits, and the
// dataset directory round-trip.

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "occlusynth/dataset.hpp"
#include "occlusynth/metrics.hpp"
#include "occlusynth/rng.hpp"

using namespace occl;

namespace {

ScenePairRaw square_scene(std::size_t n, SeededRng& rng, double z_lo = 50.0,
                          double z_hi = 50.8) {
  ScenePairRaw raw;
  raw.center = {100.0, 200.0, 50.0};
  for (std::size_t i = 0; i < n; ++i) {
    raw.complete.points.push_back({raw.center.x + rng.uniform(-4, 4),
                                   raw.center.y + rng.uniform(-4, 4),
                                   rng.uniform(z_lo, z_hi)});
  }
  raw.gapped = raw.complete;
  raw.gapped.points.resize(n * 2 / 3);
  raw.removed_count = n - raw.gapped.size();
  return raw;
}

SceneMeta meta_at(const std::string& id, double x, double y) {
  SceneMeta m;
  m.id = id;
  m.world_center = {x, y, 0};
  return m;
}

}  // namespace

TEST_CASE("subsample draws without replacement and is deterministic") {
  SeededRng data(1);
  PointCloud cloud;
  for (int i = 0; i < 30000; ++i)
    cloud.points.push_back({data.next_double(), data.next_double(), 0.0});

  SeededRng rng(2);
  const PointCloud s = subsample(cloud, 27648, rng);
  REQUIRE(s.size() == 27648);
  std::set<std::pair<double, double>> seen;
  for (const auto& p : s.points) {
    CHECK(seen.emplace(p.x, p.y).second);  // distinct
  }

  SeededRng rng2(2);
  const PointCloud s2 = subsample(cloud, 27648, rng2);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.points[i] == s2.points[i]);

  // n == size keeps everything in order
  SeededRng rng3(3);
  PointCloud tiny;
  for (int i = 0; i < 10; ++i) tiny.points.push_back({1.0 * i, 0, 0});
  const PointCloud all = subsample(tiny, 10, rng3);
  for (int i = 0; i < 10; ++i) CHECK(all.points[i].x == i);

  SeededRng rng4(4);
  CHECK_THROWS_WITH_AS(subsample(tiny, 11, rng4),
                       doctest::Contains("insufficient points"), error);
  PointCloud empty;
  CHECK_THROWS_AS(subsample(empty, 1, rng4), error);
}

TEST_CASE("normalize_pair maps the crop corner and the z gain correctly") {
  ScenePairRaw raw;
  raw.center = {10.0, -20.0, 0.0};
  // dominate the 5th percentile with points at z = 7
  for (int i = 0; i < 200; ++i)
    raw.complete.points.push_back({10.0 + 0.01 * i, -20.0, 7.0});
  raw.complete.points.push_back({14.0, -16.0, 7.0});   // crop corner
  raw.complete.points.push_back({10.0, -20.0, 8.0});   // 1 m above z_ref
  raw.gapped = raw.complete;

  const ScenePair pair = normalize_pair(raw);
  const Point3 corner = pair.complete.points[200];
  CHECK(corner.x == doctest::Approx(1.0));
  CHECK(corner.y == doctest::Approx(1.0));
  CHECK(corner.z == doctest::Approx(0.0));
  const Point3 raised = pair.complete.points[201];
  CHECK(raised.z == doctest::Approx(0.75));  // 3 * 1 / 4

  // round-trip inversion
  for (std::size_t i = 0; i < raw.complete.size(); ++i) {
    const Point3 back = pair.transform.inverse(pair.complete.points[i]);
    CHECK(std::abs(back.x - raw.complete.points[i].x) < 1e-12);
    CHECK(std::abs(back.y - raw.complete.points[i].y) < 1e-12);
    CHECK(std::abs(back.z - raw.complete.points[i].z) < 1e-12);
  }
}

TEST_CASE("normalize_pair rejects out-of-range points") {
  ScenePairRaw raw;
  raw.center = {0, 0, 0};
  for (int i = 0; i < 100; ++i)
    raw.complete.points.push_back({0.01 * i, 0, 0.0});
  raw.complete.points.push_back({0, 0, 2.0});  // z' = 3*2/4 = 1.5 > 1
  raw.gapped = raw.complete;
  CHECK_THROWS_WITH_AS(normalize_pair(raw), doctest::Contains("outside"),
                       error);
}

TEST_CASE("make_training_pair enforces the exact counts") {
  SeededRng data(7);
  const ScenePairRaw raw = square_scene(40000, data);
  SeededRng rng(8);
  const ScenePair pair = make_training_pair(raw, rng);
  CHECK(pair.complete.size() == kCompleteCount);
  CHECK(pair.gapped.size() == kGapCount);
  pair.validate_counts();
}

TEST_CASE("augmentation: exact rotations, shared transform, CD invariance") {
  SeededRng data(9);
  ScenePair pair;
  pair.complete.frame = Frame::normalized;
  pair.gapped.frame = Frame::normalized;
  for (int i = 0; i < 500; ++i) {
    pair.complete.points.push_back({data.uniform(-1, 1), data.uniform(-1, 1),
                                    data.uniform(-1, 1)});
    if (i % 2 == 0)
      pair.gapped.points.push_back(pair.complete.points.back());
  }

  // 180-degree rotation arithmetic
  {
    ScenePair p2 = pair;
    p2.complete.points = {{0.5, -0.25, 0.3}};
    p2.gapped.points = {{0.5, -0.25, 0.3}};
    // force rotation 2, no flip by scanning seeds
    for (std::uint64_t s = 0; s < 200; ++s) {
      SeededRng rng(s);
      const ScenePair out = augment(p2, rng);
      if (out.meta.augment_rotation == 2 && out.meta.augment_flip == 0) {
        CHECK(out.complete.points[0].x == -0.5);
        CHECK(out.complete.points[0].y == 0.25);
        CHECK(out.complete.points[0].z == 0.3);
        break;
      }
    }
  }

  // identity transform exists and is exact
  for (std::uint64_t s = 0; s < 200; ++s) {
    SeededRng rng(s);
    const ScenePair out = augment(pair, rng);
    if (out.meta.augment_rotation == 0 && out.meta.augment_flip == 0) {
      for (std::size_t i = 0; i < pair.complete.size(); ++i)
        CHECK(out.complete.points[i] == pair.complete.points[i]);
      break;
    }
  }

  // chamfer distance invariant under the shared augmentation
  const double cd0 = chamfer(pair.complete, pair.gapped);
  SeededRng rng(123);
  const ScenePair aug = augment(pair, rng);
  const double cd1 = chamfer(aug.complete, aug.gapped);
  CHECK(cd1 == doctest::Approx(cd0).epsilon(1e-12));

  // pairwise distances preserved exactly (swap/negate arithmetic)
  for (std::size_t i = 1; i < 50; ++i) {
    const double d0 = dist2(pair.complete.points[0], pair.complete.points[i]);
    const double d1 = dist2(aug.complete.points[0], aug.complete.points[i]);
    CHECK(d0 == d1);
  }
}

TEST_CASE("augmentation covers the 8-element dihedral set") {
  ScenePair pair;
  pair.complete.points = {{0.3, 0.7, 0.1}};
  pair.gapped.points = {{0.3, 0.7, 0.1}};
  std::set<std::pair<double, double>> images;
  for (std::uint64_t s = 0; s < 400; ++s) {
    SeededRng rng(s);
    const ScenePair out = augment(pair, rng);
    images.emplace(out.complete.points[0].x, out.complete.points[0].y);
  }
  // |x| != |y|, so the dihedral orbit has exactly 8 distinct images
  CHECK(images.size() == 8);
}

TEST_CASE("geographic split assigns by region with val capping") {
  SplitSpec spec;
  SplitRegion test_region;
  test_region.label = "test";
  test_region.polygon = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  spec.regions.push_back(test_region);
  spec.val_count = 3;

  std::vector<SceneMeta> metas;
  for (int i = 0; i < 25; ++i)
    metas.push_back(meta_at("t" + std::to_string(i), 5.0, 5.0));
  for (int i = 0; i < 113; ++i)
    metas.push_back(meta_at("u" + std::to_string(i), 50.0, 50.0));

  const DatasetManifest m = split_geographic(metas, spec);
  CHECK(m.test.size() == 25);
  CHECK(m.val.size() == 3);
  CHECK(m.train.size() == 110);

  // disjoint
  std::set<std::string> all;
  for (const auto* split : {&m.train, &m.test, &m.val})
    for (const auto& id : *split) CHECK(all.insert(id).second);
  CHECK(all.size() == 138);
}

TEST_CASE("halfplane split is exact") {
  SplitSpec spec;
  SplitRegion r;
  r.label = "test";
  r.halfplane = {{1.0, 0.0, 100.0}};  // x < 100
  spec.regions.push_back(r);

  std::vector<SceneMeta> metas;
  for (int i = 0; i < 50; ++i)
    metas.push_back(meta_at("s" + std::to_string(i), 4.0 * i, 0.0));
  const DatasetManifest m = split_geographic(metas, spec);
  for (const auto& id : m.test) {
    const int i = std::stoi(id.substr(1));
    CHECK(4.0 * i < 100.0);
  }
  for (const auto& id : m.train) {
    const int i = std::stoi(id.substr(1));
    CHECK(4.0 * i >= 100.0);
  }
}

TEST_CASE("overlapping regions are rejected") {
  SplitSpec spec;
  SplitRegion a, b;
  a.label = "test";
  a.polygon = {{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  b.label = "train";
  b.polygon = {{5, 5}, {15, 5}, {15, 15}, {5, 15}};
  spec.regions = {a, b};
  const std::vector<SceneMeta> metas{meta_at("x", 7.0, 7.0)};
  CHECK_THROWS_WITH_AS(split_geographic(metas, spec),
                       doctest::Contains("overlapping"), error);
}

TEST_CASE("split spec json round-trip and validation") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "split.json";
  {
    std::ofstream out(path);
    out << R"({"val_count": 2, "regions": [
      {"label": "test", "polygon": [[0,0],[10,0],[10,10],[0,10]]},
      {"label": "train", "halfplane": {"a": 1, "b": 0, "c": -5}}
    ]})";
  }
  const SplitSpec spec = SplitSpec::from_json_file(path.string());
  CHECK(spec.val_count == 2);
  REQUIRE(spec.regions.size() == 2);
  CHECK(spec.regions[0].contains({5, 5}));
  CHECK(!spec.regions[0].contains({11, 5}));
  CHECK(spec.regions[1].contains({-6, 0}));

  {
    std::ofstream out(path);
    out << R"({"regions": [{"label": "test",
      "polygon": [[0,0],[10,0],[0,10],[10,10]]}]})";  // non-convex order
  }
  CHECK_THROWS_WITH_AS(SplitSpec::from_json_file(path.string()),
                       doctest::Contains("convex"), error);
  fs::remove(path);
}

TEST_CASE("dataset write/read round-trip with integrity checks") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "occl_dataset";
  fs::remove_all(dir);

  SeededRng data(77);
  std::vector<ScenePair> pairs;
  DatasetManifest manifest;
  manifest.seed = 7;
  for (int i = 0; i < 5; ++i) {
    SeededRng scene_rng = data.derive(static_cast<std::uint64_t>(i));
    ScenePairRaw raw = square_scene(40000, scene_rng);
    ScenePair pair = make_training_pair(raw, scene_rng);
    pair.meta.id = "scene" + std::to_string(i);
    pair.meta.seed_path = "77/" + std::to_string(i);
    pairs.push_back(std::move(pair));
    if (i < 3)
      manifest.train.push_back(pairs.back().meta.id);
    else
      manifest.test.push_back(pairs.back().meta.id);
  }
  write_dataset(pairs, manifest, dir.string());

  auto [back, m2] = read_dataset(dir.string());
  REQUIRE(back.size() == 5);
  CHECK(m2.train.size() == 3);
  CHECK(m2.test.size() == 2);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[i].complete.size() == kCompleteCount);
    CHECK(back[i].gapped.size() == kGapCount);
    CHECK(back[i].transform.cx == pairs[i].transform.cx);
    // float32 on disk: stored values replay exactly
    for (int k = 0; k < 100; ++k) {
      const float fx = static_cast<float>(pairs[i].complete.points[k].x);
      CHECK(back[i].complete.points[k].x == static_cast<double>(fx));
    }
  }

  // corrupting a payload trips the checksum
  {
    std::fstream f(dir / "scene2_gap.ply",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-4, std::ios::end);
    const float junk = 999.f;
    f.write(reinterpret_cast<const char*>(&junk), 4);
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir.string()),
                       doctest::Contains("checksum"), error);

  // restore, then break the manifest counts
  write_dataset(pairs, manifest, dir.string());
  {
    std::ifstream in(dir / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("\"train\": 3");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 10, "\"train\": 4");
    std::ofstream out(dir / "manifest.json");
    out << text;
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir.string()),
                       doctest::Contains("counts"), error);

  // restore, then delete a meta file: error names the scene
  write_dataset(pairs, manifest, dir.string());
  fs::remove(dir / "scene4_meta.json");
  CHECK_THROWS_WITH_AS(read_dataset(dir.string()),
                       doctest::Contains("scene4"), error);

  fs::remove_all(dir);
}

TEST_CASE("dataset regeneration from the same seed is bit-identical") {
  namespace fs = std::filesystem;
  const auto dir1 = fs::temp_directory_path() / "occl_ds_a";
  const auto dir2 = fs::temp_directory_path() / "occl_ds_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);

  auto build = [&](const fs::path& dir) {
    SeededRng root(1234);
    std::vector<ScenePair> pairs;
    DatasetManifest manifest;
    manifest.seed = 1234;
    for (int i = 0; i < 3; ++i) {
      SeededRng scene_rng = root.derive(static_cast<std::uint64_t>(i));
      ScenePairRaw raw = square_scene(35000, scene_rng);
      ScenePair pair = make_training_pair(raw, scene_rng);
      pair.meta.id = "scene" + std::to_string(i);
      pairs.push_back(std::move(pair));
      manifest.train.push_back("scene" + std::to_string(i));
    }
    write_dataset(pairs, manifest, dir.string());
  };
  build(dir1);
  build(dir2);

  for (const auto& entry : fs::directory_iterator(dir1)) {
    const auto other = dir2 / entry.path().filename();
    std::ifstream f1(entry.path(), std::ios::binary), f2(other, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
