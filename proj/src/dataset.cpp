#include "occlusynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "occlusynth/checksum.hpp"
#include "occlusynth/ply.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace occl {

namespace {

double percentile_sorted_copy(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

constexpr double kRangeSlack = 1e-9;

void check_range(const PointCloud& cloud, const char* which) {
  for (const auto& p : cloud.points) {
    if (std::abs(p.x) > 1.0 + kRangeSlack || std::abs(p.y) > 1.0 + kRangeSlack ||
        std::abs(p.z) > 1.0 + kRangeSlack)
      throw error(std::string("normalize: ") + which +
                  " coordinate outside [-1,1]; upstream filters violated");
  }
}

}  // namespace

void ScenePair::validate_counts() const {
  if (complete.size() != kCompleteCount)
    throw error("scene pair: complete has " + std::to_string(complete.size()) +
                " points, expected " + std::to_string(kCompleteCount));
  if (gapped.size() != kGapCount)
    throw error("scene pair: gapped has " + std::to_string(gapped.size()) +
                " points, expected " + std::to_string(kGapCount));
  check_range(complete, "complete");
  check_range(gapped, "gapped");
}

PointCloud subsample(const PointCloud& cloud, std::size_t n, SeededRng& rng) {
  if (cloud.empty()) throw error("subsample: empty cloud");
  const std::size_t m = cloud.size();
  if (m < n)
    throw error("insufficient points: have " + std::to_string(m) + ", need " +
                std::to_string(n));

  // Partial Fisher-Yates, then sorted ids so the subset keeps input order.
  std::vector<std::size_t> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.next_below(m - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return cloud.select(ids);
}

ScenePair normalize_pair(const ScenePairRaw& raw) {
  if (raw.complete.empty()) throw error("normalize: empty complete scene");

  NormTransform t;
  t.cx = raw.center.x;
  t.cy = raw.center.y;
  std::vector<double> zs;
  zs.reserve(raw.complete.size());
  for (const auto& p : raw.complete.points) zs.push_back(p.z);
  t.z_ref = percentile_sorted_copy(std::move(zs), 0.05);

  ScenePair pair;
  pair.transform = t;
  pair.meta.world_center = raw.center;
  pair.meta.removed_count = raw.removed_count;
  pair.meta.occluded_nothing = raw.occluded_nothing;

  auto map_points = [&](const PointCloud& src) {
    PointCloud dst;
    dst.frame = Frame::normalized;
    dst.points.reserve(src.size());
    for (const auto& p : src.points) dst.points.push_back(t.forward(p));
    return dst;
  };
  pair.complete = map_points(raw.complete);
  pair.gapped = map_points(raw.gapped);
  check_range(pair.complete, "complete");
  check_range(pair.gapped, "gapped");
  return pair;
}

ScenePair make_training_pair(const ScenePairRaw& raw, SeededRng& rng) {
  SeededRng rng_complete = rng.derive("sample_complete");
  SeededRng rng_gap = rng.derive("sample_gap");
  ScenePairRaw sampled = raw;
  sampled.complete = subsample(raw.complete, kCompleteCount, rng_complete);
  sampled.gapped = subsample(raw.gapped, kGapCount, rng_gap);
  ScenePair pair = normalize_pair(sampled);
  pair.validate_counts();
  return pair;
}

namespace {

inline Point3 rotate_quarter(const Point3& p, int quarters) {
  switch (quarters & 3) {
    case 1:
      return {-p.y, p.x, p.z};
    case 2:
      return {-p.x, -p.y, p.z};
    case 3:
      return {p.y, -p.x, p.z};
    default:
      return p;
  }
}

inline Point3 flip_axis(const Point3& p, int flip) {
  if (flip == 1) return {-p.x, p.y, p.z};
  if (flip == 2) return {p.x, -p.y, p.z};
  return p;
}

}  // namespace

ScenePair augment(const ScenePair& pair, SeededRng& rng) {
  const int quarters = static_cast<int>(rng.next_below(4));
  const double u = rng.next_double();
  const int flip = u < 0.5 ? 0 : (u < 0.75 ? 1 : 2);

  ScenePair out = pair;
  auto apply = [&](PointCloud& cloud) {
    for (auto& p : cloud.points) p = flip_axis(rotate_quarter(p, quarters), flip);
  };
  apply(out.complete);
  apply(out.gapped);
  out.meta.augment_rotation = quarters;
  out.meta.augment_flip = flip;
  return out;
}

// --- splits --------------------------------------------------------------

bool SplitRegion::contains(const Vec2& p) const {
  if (halfplane) {
    const auto& h = *halfplane;
    return h[0] * p.x + h[1] * p.y < h[2];
  }
  // Convex polygon, boundary counts as inside. Works for either winding.
  const std::size_t n = polygon.size();
  bool any_pos = false, any_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[(i + 1) % n];
    const double cr = (b - a).cross(p - a);
    if (cr > 0) any_pos = true;
    if (cr < 0) any_neg = true;
  }
  return !(any_pos && any_neg);
}

SplitSpec SplitSpec::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open split spec " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw error("split spec: invalid JSON: " + std::string(e.what()));
  }

  SplitSpec spec;
  spec.val_count = j.value("val_count", 0);
  for (const auto& r : j.value("regions", json::array())) {
    SplitRegion region;
    region.label = r.at("label").get<std::string>();
    if (region.label != "train" && region.label != "test" &&
        region.label != "val")
      throw error("split spec: unknown label '" + region.label + "'");
    if (r.contains("polygon")) {
      for (const auto& v : r["polygon"])
        region.polygon.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      if (region.polygon.size() < 3)
        throw error("split spec: polygon needs >= 3 vertices");
      // Convexity: all cross products of consecutive edges share a sign.
      const std::size_t n = region.polygon.size();
      bool pos = false, neg = false;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 e1 = region.polygon[(i + 1) % n] - region.polygon[i];
        const Vec2 e2 = region.polygon[(i + 2) % n] - region.polygon[(i + 1) % n];
        const double cr = e1.cross(e2);
        if (cr > 0) pos = true;
        if (cr < 0) neg = true;
      }
      if (pos && neg) throw error("split spec: polygon is not convex");
    } else if (r.contains("halfplane")) {
      const auto& h = r["halfplane"];
      region.halfplane = {{h.at("a").get<double>(), h.at("b").get<double>(),
                           h.at("c").get<double>()}};
    } else {
      throw error("split spec: region needs polygon or halfplane");
    }
    spec.regions.push_back(std::move(region));
  }
  return spec;
}

std::string SplitSpec::to_json() const {
  json j;
  j["val_count"] = val_count;
  j["regions"] = json::array();
  for (const auto& r : regions) {
    json jr;
    jr["label"] = r.label;
    if (r.halfplane) {
      jr["halfplane"] = {{"a", (*r.halfplane)[0]},
                         {"b", (*r.halfplane)[1]},
                         {"c", (*r.halfplane)[2]}};
    } else {
      json poly = json::array();
      for (const auto& v : r.polygon) poly.push_back({v.x, v.y});
      jr["polygon"] = poly;
    }
    j["regions"].push_back(jr);
  }
  return j.dump();
}

DatasetManifest split_geographic(const std::vector<SceneMeta>& metas,
                                 const SplitSpec& spec) {
  DatasetManifest manifest;
  manifest.split_spec_json = spec.to_json();

  std::vector<const SceneMeta*> unassigned;
  for (const auto& meta : metas) {
    const Vec2 c = xy(meta.world_center);
    const SplitRegion* hit = nullptr;
    for (const auto& region : spec.regions) {
      if (!region.contains(c)) continue;
      if (hit)
        throw error("split: scene " + meta.id +
                    " matched by overlapping regions ('" + hit->label +
                    "' and '" + region.label + "')");
      hit = &region;
    }
    if (!hit) {
      unassigned.push_back(&meta);
    } else if (hit->label == "train") {
      manifest.train.push_back(meta.id);
    } else if (hit->label == "test") {
      manifest.test.push_back(meta.id);
    } else {
      manifest.val.push_back(meta.id);
    }
  }
  for (const auto* meta : unassigned) {
    if (manifest.val.size() < spec.val_count)
      manifest.val.push_back(meta->id);
    else
      manifest.train.push_back(meta->id);
  }
  return manifest;
}

// --- storage ---------------------------------------------------------------

namespace {

json transform_to_json(const NormTransform& t) {
  return json{{"cx", t.cx},
              {"cy", t.cy},
              {"z_ref", t.z_ref},
              {"horizontal_scale", t.horizontal_scale},
              {"vertical_gain", t.vertical_gain}};
}

NormTransform transform_from_json(const json& j) {
  NormTransform t;
  t.cx = j.at("cx").get<double>();
  t.cy = j.at("cy").get<double>();
  t.z_ref = j.at("z_ref").get<double>();
  t.horizontal_scale = j.at("horizontal_scale").get<double>();
  t.vertical_gain = j.at("vertical_gain").get<double>();
  return t;
}

}  // namespace

void write_dataset(const std::vector<ScenePair>& pairs,
                   const DatasetManifest& manifest, const std::string& dir) {
  if (pairs.size() != manifest.total())
    throw error("write_dataset: manifest lists " +
                std::to_string(manifest.total()) + " scenes, got " +
                std::to_string(pairs.size()) + " pairs");
  fs::create_directories(dir);

  json files = json::object();
  for (const auto& pair : pairs) {
    pair.validate_counts();
    const std::string base = (fs::path(dir) / pair.meta.id).string();
    save_ply(base + "_complete.ply", pair.complete);
    save_ply(base + "_gap.ply", pair.gapped);

    json meta;
    meta["scene_id"] = pair.meta.id;
    meta["frame"] = "normalized";
    meta["world_center"] = {pair.meta.world_center.x, pair.meta.world_center.y,
                            pair.meta.world_center.z};
    meta["seed_path"] = pair.meta.seed_path;
    meta["removed_count"] = pair.meta.removed_count;
    meta["occluded_nothing"] = pair.meta.occluded_nothing;
    meta["augment"] = {{"rotation_quarters", pair.meta.augment_rotation},
                       {"flip", pair.meta.augment_flip}};
    meta["transform"] = transform_to_json(pair.transform);
    std::ofstream mf(base + "_meta.json");
    mf << meta.dump(2) << "\n";
    if (!mf) throw error("write_dataset: cannot write meta for " + pair.meta.id);

    files[pair.meta.id + "_complete.ply"] =
        checksum_hex(fnv1a64_file(base + "_complete.ply"));
    files[pair.meta.id + "_gap.ply"] =
        checksum_hex(fnv1a64_file(base + "_gap.ply"));
  }

  json j;
  j["format"] = "occlusynth-dataset-v1";
  j["seed"] = manifest.seed;
  j["splits"] = {{"train", manifest.train},
                 {"test", manifest.test},
                 {"val", manifest.val}};
  j["counts"] = {{"train", manifest.train.size()},
                 {"test", manifest.test.size()},
                 {"val", manifest.val.size()}};
  j["split_spec"] =
      manifest.split_spec_json.empty()
          ? json::object()
          : json::parse(manifest.split_spec_json);
  j["checksums"] = files;
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << j.dump(2) << "\n";
  if (!out) throw error("write_dataset: cannot write manifest");
}

std::pair<std::vector<ScenePair>, DatasetManifest> read_dataset(
    const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw error("read_dataset: missing manifest.json in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw error("read_dataset: bad manifest: " + std::string(e.what()));
  }

  DatasetManifest manifest;
  manifest.seed = j.value("seed", 0);
  manifest.train = j.at("splits").at("train").get<std::vector<std::string>>();
  manifest.test = j.at("splits").at("test").get<std::vector<std::string>>();
  manifest.val = j.at("splits").at("val").get<std::vector<std::string>>();
  manifest.split_spec_json = j.value("split_spec", json::object()).dump();

  if (j.at("counts").at("train").get<std::size_t>() != manifest.train.size() ||
      j.at("counts").at("test").get<std::size_t>() != manifest.test.size() ||
      j.at("counts").at("val").get<std::size_t>() != manifest.val.size())
    throw error("read_dataset: manifest counts disagree with split lists");

  const json& checks = j.at("checksums");
  std::vector<ScenePair> pairs;
  std::vector<std::string> all;
  for (const auto* split : {&manifest.train, &manifest.test, &manifest.val})
    all.insert(all.end(), split->begin(), split->end());

  std::size_t on_disk = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().filename().string().ends_with("_complete.ply")) ++on_disk;
  if (on_disk != all.size())
    throw error("read_dataset: " + std::to_string(on_disk) +
                " scenes on disk, manifest lists " + std::to_string(all.size()));

  for (const auto& id : all) {
    const std::string base = (fs::path(dir) / id).string();
    for (const char* suffix : {"_complete.ply", "_gap.ply"}) {
      const std::string file = base + suffix;
      if (!fs::exists(file))
        throw error("read_dataset: scene " + id + " is missing " + file);
      const std::string expect = checks.at(id + suffix).get<std::string>();
      if (checksum_hex(fnv1a64_file(file)) != expect)
        throw error("read_dataset: checksum mismatch for " + id + suffix);
    }
    if (!fs::exists(base + "_meta.json"))
      throw error("read_dataset: missing meta file for scene " + id);

    ScenePair pair;
    pair.complete = load_ply(base + "_complete.ply");
    pair.gapped = load_ply(base + "_gap.ply");
    pair.complete.frame = Frame::normalized;
    pair.gapped.frame = Frame::normalized;

    std::ifstream mf(base + "_meta.json");
    json meta;
    try {
      mf >> meta;
    } catch (const json::exception& e) {
      throw error("read_dataset: bad meta for " + id + ": " + e.what());
    }
    pair.meta.id = meta.at("scene_id").get<std::string>();
    const auto& wc = meta.at("world_center");
    pair.meta.world_center = {wc.at(0).get<double>(), wc.at(1).get<double>(),
                              wc.at(2).get<double>()};
    pair.meta.seed_path = meta.value("seed_path", "");
    pair.meta.removed_count = meta.value("removed_count", 0);
    pair.meta.occluded_nothing = meta.value("occluded_nothing", false);
    pair.meta.augment_rotation =
        meta.at("augment").at("rotation_quarters").get<int>();
    pair.meta.augment_flip = meta.at("augment").at("flip").get<int>();
    pair.transform = transform_from_json(meta.at("transform"));
    pairs.push_back(std::move(pair));
  }
  return {std::move(pairs), std::move(manifest)};
}

}  // namespace occl
