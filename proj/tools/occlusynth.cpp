// occlusynth: synthesizes paired (complete, occluded) urban point-cloud
// scenes by parking virtual vehicles along extracted road boundaries and
// ray-casting sensor visibility; also exposes the numeric kernels,
// metrics, and the post-processing merge as subcommands.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "occlusynth/boundary.hpp"
#include "occlusynth/checksum.hpp"
#include "occlusynth/dataset.hpp"
#include "occlusynth/geom.hpp"
#include "occlusynth/merge.hpp"
#include "occlusynth/mesh.hpp"
#include "occlusynth/metrics.hpp"
#include "occlusynth/parallel.hpp"
#include "occlusynth/placement.hpp"
#include "occlusynth/ply.hpp"
#include "occlusynth/raycast.hpp"
#include "occlusynth/rng.hpp"
#include "occlusynth/scanstrip.hpp"
#include "occlusynth/sgc.hpp"
#include "occlusynth/synth_scene.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace occl;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Bad flags / bad config schema; the CLI maps this to exit code 2.
class usage_error : public std::runtime_error {
 public:
  explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// --- pipeline configuration -------------------------------------------------

struct PipelineConfig {
  FilterConfig filter;
  CurbRuleConfig curb;
  PlacementConfig placement;
  VehicleDims vehicle;
  CropConfig crop;
  MergeConfig merge;
  LossConfig loss;
  GriddingNorm gridding_norm = GriddingNorm::sum;
  int threads = 0;  // 0: env var or hardware default
};

json config_to_json(const PipelineConfig& c) {
  return json{
      {"filter",
       {{"max_range", c.filter.max_range},
        {"sensor_height", c.filter.sensor_height},
        {"h_min", c.filter.h_min},
        {"h_max", c.filter.h_max}}},
      {"curb",
       {{"raster_cell", c.curb.raster_cell},
        {"max_median_height", c.curb.max_median_height},
        {"min_elongation", c.curb.min_elongation},
        {"ground_band", c.curb.ground_band},
        {"min_boundary_length", c.curb.min_boundary_length},
        {"min_endpoint_clearance", c.curb.min_endpoint_clearance},
        {"grow_angle_tol_deg", c.curb.grow_angle_tol_deg},
        {"grow_min_points", c.curb.grow_min_points},
        {"resample_step", c.curb.resample_step},
        {"chain_max_gap", c.curb.chain_max_gap},
        {"chain_max_angle_deg", c.curb.chain_max_angle_deg},
        {"candidate_spacing", c.curb.candidate_spacing}}},
      {"placement",
       {{"plane_radius", c.placement.plane_radius},
        {"plane_inlier_tol", c.placement.plane_inlier_tol},
        {"plane_iterations", c.placement.plane_iterations},
        {"plane_min_inlier_ratio", c.placement.plane_min_inlier_ratio},
        {"plane_min_points", c.placement.plane_min_points},
        {"max_road_offset", c.placement.max_road_offset},
        {"p_on_road", c.placement.p_on_road},
        {"p_sidewalk", c.placement.p_sidewalk},
        {"p_perpendicular", c.placement.p_perpendicular}}},
      {"vehicle",
       {{"length", c.vehicle.length},
        {"width", c.vehicle.width},
        {"height", c.vehicle.height}}},
      {"crop",
       {{"half_size", c.crop.half_size},
        {"center_jitter", c.crop.center_jitter},
        {"min_points", c.crop.min_points}}},
      {"merge", {{"overlap_threshold", c.merge.overlap_threshold}}},
      {"loss", {{"alpha", c.loss.alpha}, {"stage", c.loss.stage}}},
      {"gridding_norm", c.gridding_norm == GriddingNorm::sum ? "sum" : "mean"},
      {"threads", c.threads}};
}

// Applies overrides from `j` onto the defaults, rejecting unknown keys at
// any nesting level (the defaults document doubles as the schema).
void apply_overrides(json& base, const json& j, const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    if (!base.contains(key))
      throw usage_error("unknown config key: " + prefix + key);
    if (base[key].is_object()) {
      if (!value.is_object())
        throw usage_error("config key " + prefix + key + " must be an object");
      apply_overrides(base[key], value, prefix + key + ".");
    } else {
      if (value.is_object())
        throw usage_error("config key " + prefix + key + " is a scalar");
      base[key] = value;
    }
  }
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  const json& f = j.at("filter");
  c.filter = {f.at("max_range"), f.at("sensor_height"), f.at("h_min"),
              f.at("h_max")};
  const json& k = j.at("curb");
  c.curb.raster_cell = k.at("raster_cell");
  c.curb.max_median_height = k.at("max_median_height");
  c.curb.min_elongation = k.at("min_elongation");
  c.curb.ground_band = k.at("ground_band");
  c.curb.min_boundary_length = k.at("min_boundary_length");
  c.curb.min_endpoint_clearance = k.at("min_endpoint_clearance");
  c.curb.grow_angle_tol_deg = k.at("grow_angle_tol_deg");
  c.curb.grow_min_points = k.at("grow_min_points");
  c.curb.resample_step = k.at("resample_step");
  c.curb.chain_max_gap = k.at("chain_max_gap");
  c.curb.chain_max_angle_deg = k.at("chain_max_angle_deg");
  c.curb.candidate_spacing = k.at("candidate_spacing");
  const json& p = j.at("placement");
  c.placement.plane_radius = p.at("plane_radius");
  c.placement.plane_inlier_tol = p.at("plane_inlier_tol");
  c.placement.plane_iterations = p.at("plane_iterations");
  c.placement.plane_min_inlier_ratio = p.at("plane_min_inlier_ratio");
  c.placement.plane_min_points = p.at("plane_min_points");
  c.placement.max_road_offset = p.at("max_road_offset");
  c.placement.p_on_road = p.at("p_on_road");
  c.placement.p_sidewalk = p.at("p_sidewalk");
  c.placement.p_perpendicular = p.at("p_perpendicular");
  const json& v = j.at("vehicle");
  c.vehicle = {v.at("length"), v.at("width"), v.at("height")};
  const json& cr = j.at("crop");
  c.crop.half_size = cr.at("half_size");
  c.crop.center_jitter = cr.at("center_jitter");
  c.crop.min_points = cr.at("min_points");
  c.merge.overlap_threshold = j.at("merge").at("overlap_threshold");
  c.loss.alpha = j.at("loss").at("alpha");
  c.loss.stage = j.at("loss").at("stage");
  const std::string norm = j.at("gridding_norm");
  if (norm != "sum" && norm != "mean")
    throw usage_error("config: gridding_norm must be 'sum' or 'mean'");
  c.gridding_norm = norm == "sum" ? GriddingNorm::sum : GriddingNorm::mean;
  c.threads = j.at("threads");
  return c;
}

struct ConfigBundle {
  PipelineConfig cfg;
  json resolved;
};

ConfigBundle load_config(const std::string& path) {
  json base = config_to_json(PipelineConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw error("cannot open config " + path);
    json overrides;
    try {
      in >> overrides;
    } catch (const json::exception& e) {
      throw usage_error("config: invalid JSON: " + std::string(e.what()));
    }
    apply_overrides(base, overrides, "");
  }
  return {config_from_json(base), base};
}

// --- run manifests ------------------------------------------------------------

struct RunManifest {
  std::string subcommand;
  std::uint64_t seed = 0;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void add_output(const std::string& path) { outputs.push_back(path); }

  // Paths are stored relative to the manifest so reruns in different
  // directories produce identical bytes.
  void write(const fs::path& path) const {
    json jin = json::array(), jout = json::array();
    const fs::path base = path.parent_path();
    auto entry = [&](const std::string& p) {
      const fs::path rel = fs::relative(p, base.empty() ? "." : base);
      return json{{"path", rel.generic_string()},
                  {"fnv1a64", checksum_hex(fnv1a64_file(p))}};
    };
    for (const auto& p : inputs) jin.push_back(entry(p));
    for (const auto& p : outputs) jout.push_back(entry(p));
    const std::string cfg_text = config.dump();
    const json doc{{"tool", "occlusynth"},
                   {"version", kVersion},
                   {"subcommand", subcommand},
                   {"seed", seed},
                   {"config", config},
                   {"config_hash",
                    checksum_hex(fnv1a64(cfg_text.data(), cfg_text.size()))},
                   {"inputs", jin},
                   {"outputs", jout}};
    std::ofstream out(path);
    if (!out) throw error("cannot write manifest " + path.string());
    out << doc.dump(2) << "\n";
  }
};

// --- shared pipeline pieces -----------------------------------------------------

// Rebuilds strip-space structure from a PLY exported with strip_row /
// strip_col extras (the `filter` subcommand emits those).
ScanStrip strip_from_indexed_cloud(const PointCloud& cloud) {
  const std::vector<double>*rows = nullptr, *cols = nullptr;
  for (const auto& [name, vals] : cloud.extras) {
    if (name == "strip_row") rows = &vals;
    if (name == "strip_col") cols = &vals;
  }
  if (!rows || !cols)
    throw error(
        "cloud has no strip_row/strip_col properties; run `occlusynth "
        "filter` first or pass the .sst1 strip directly");
  if (!cloud.has_heads()) throw error("cloud has no head positions");

  int max_col = 0;
  for (const double c : *cols) max_col = std::max(max_col, static_cast<int>(c));
  ScanStrip strip(max_col + 1);
  if (cloud.has_normals()) strip.n.assign(strip.pixel_count(), {});
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<int>((*rows)[i]);
    const auto c = static_cast<int>((*cols)[i]);
    if (r < 0 || r >= strip.rows() || c < 0 || c >= strip.cols())
      throw error("strip_row/strip_col out of range");
    const std::size_t px = strip.idx(r, c);
    strip.p[px] = cloud.points[i];
    strip.h[px] = cloud.heads[i];
    if (cloud.has_normals()) strip.n[px] = cloud.normals[i];
    strip.valid[px] = 1;
  }
  return strip;
}

struct BoundaryResult {
  std::vector<BoundaryPolyline> polylines;
  std::size_t segment_count = 0;
  std::size_t curb_count = 0;
};

BoundaryResult extract_boundaries(const ScanStrip& strip,
                                  const PointCloud& cloud,
                                  const CurbRuleConfig& cfg) {
  BoundaryResult res;
  const auto segments =
      grow_vertical_segments(strip, cfg.grow_angle_tol_deg, cfg.grow_min_points);
  res.segment_count = segments.size();
  std::vector<Segment> curbs;
  for (const auto& seg : segments) {
    const double ground = local_ground_height(cloud, seg);
    if (classify_curb(seg, ground, cfg)) curbs.push_back(seg);
  }
  res.curb_count = curbs.size();
  res.polylines = build_boundary_map(curbs, cfg, &cloud);
  return res;
}

std::vector<std::string> list_models(const std::string& dir) {
  std::vector<std::string> models;
  if (!fs::is_directory(dir)) throw error("model directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".obj")
      models.push_back(entry.path().string());
  std::sort(models.begin(), models.end());
  if (models.empty()) throw error("no .obj models in " + dir);
  return models;
}

json report_json(const MetricsReport& r) {
  json j{{"cd", r.cd},
         {"cd_x1e4", r.cd * 1e4},
         {"precision", r.precision},
         {"recall", r.recall},
         {"fscore", r.fscore},
         {"threshold", r.threshold},
         {"n_pred", r.n_pred},
         {"n_gt", r.n_gt}};
  if (r.has_gridding_loss) j["gridding_loss"] = r.gridding_loss;
  return j;
}

json pose_to_json(const VehiclePose& pose) {
  json matrix = json::array();
  for (int r = 0; r < 3; ++r) {
    matrix.push_back(pose.rotation_rows[r].x);
    matrix.push_back(pose.rotation_rows[r].y);
    matrix.push_back(pose.rotation_rows[r].z);
    matrix.push_back(pose.translation[r]);
  }
  for (const double v : {0.0, 0.0, 0.0, 1.0}) matrix.push_back(v);
  return json{{"matrix", matrix},
              {"mesh_id", pose.mesh_id},
              {"mode", to_string(pose.mode)},
              {"lateral_offset", pose.lateral_offset}};
}

// Writes one raw scene pair (world frame, with heads) to a scenes dir.
void write_raw_scene(const fs::path& dir, const std::string& id,
                     const ScenePairRaw& pair, const std::string& seed_path,
                     RunManifest& manifest) {
  const fs::path base = dir / id;
  save_ply((base.string() + "_complete.ply"), pair.complete);
  save_ply((base.string() + "_gap.ply"), pair.gapped);

  json meta{{"scene_id", id},
            {"frame", "world"},
            {"center", {pair.center.x, pair.center.y, pair.center.z}},
            {"pose", pose_to_json(pair.pose)},
            {"removed_count", pair.removed_count},
            {"occluded_nothing", pair.occluded_nothing},
            {"seed_path", seed_path}};
  std::ofstream mf(base.string() + "_meta.json");
  mf << meta.dump(2) << "\n";
  if (!mf) throw error("cannot write scene meta for " + id);

  manifest.add_output(base.string() + "_complete.ply");
  manifest.add_output(base.string() + "_gap.ply");
  manifest.add_output(base.string() + "_meta.json");
}

struct RawSceneFile {
  std::string id;
  ScenePairRaw pair;
  std::string seed_path;
};

std::vector<RawSceneFile> read_raw_scenes(const std::string& dir) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.ends_with("_complete.ply"))
      ids.push_back(name.substr(0, name.size() - 13));
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw error("no scenes found in " + dir);

  std::vector<RawSceneFile> scenes;
  for (const auto& id : ids) {
    const fs::path base = fs::path(dir) / id;
    RawSceneFile scene;
    scene.id = id;
    scene.pair.complete = load_ply(base.string() + "_complete.ply");
    scene.pair.gapped = load_ply(base.string() + "_gap.ply");
    std::ifstream mf(base.string() + "_meta.json");
    if (!mf) throw error("missing meta for scene " + id);
    json meta;
    try {
      mf >> meta;
    } catch (const json::exception& e) {
      throw error("bad meta for scene " + id + ": " + e.what());
    }
    const auto& c = meta.at("center");
    scene.pair.center = {c.at(0), c.at(1), c.at(2)};
    scene.pair.removed_count = meta.value("removed_count", 0);
    scene.pair.occluded_nothing = meta.value("occluded_nothing", false);
    scene.seed_path = meta.value("seed_path", "");
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

// --- subcommands -------------------------------------------------------------------

int cmd_filter(const std::string& in, const std::string& out,
               const ConfigBundle& bundle) {
  const PipelineConfig& cfg = bundle.cfg;
  ScanStrip strip = load_strip(in);
  if (!strip.has_normals()) strip = estimate_normals(strip);
  strip = filter_by_range(strip, cfg.filter);
  strip = filter_by_height(strip, cfg.filter);
  const PointCloud cloud = strip_to_cloud(strip, /*with_strip_index=*/true);
  save_ply(out, cloud);
  std::fprintf(stderr, "filter: %zu of %zu pixels kept\n", cloud.size(),
               strip.pixel_count());

  RunManifest manifest;
  manifest.subcommand = "filter";
  manifest.config = bundle.resolved;
  manifest.inputs = {in};
  manifest.outputs = {out};
  manifest.write(out + ".manifest.json");
  return 0;
}

int cmd_boundaries(const std::string& in, const std::string& out,
                   const ConfigBundle& bundle) {
  ScanStrip strip;
  PointCloud cloud;
  if (in.ends_with(".sst1")) {
    strip = load_strip(in);
    if (!strip.has_normals()) strip = estimate_normals(strip);
    cloud = strip_to_cloud(strip);
  } else {
    cloud = load_ply(in);
    strip = strip_from_indexed_cloud(cloud);
    if (!strip.has_normals()) strip = estimate_normals(strip);
  }
  const BoundaryResult res = extract_boundaries(strip, cloud, bundle.cfg.curb);
  write_boundaries_json(out, res.polylines);
  std::fprintf(stderr,
               "boundaries: %zu segments, %zu curbs, %zu polylines\n",
               res.segment_count, res.curb_count, res.polylines.size());

  RunManifest manifest;
  manifest.subcommand = "boundaries";
  manifest.config = bundle.resolved;
  manifest.inputs = {in};
  manifest.outputs = {out};
  manifest.write(out + ".manifest.json");
  return 0;
}

int cmd_place(const std::string& boundaries_path, const std::string& cloud_path,
              const std::string& models_dir, std::uint64_t seed,
              const std::string& out, const ConfigBundle& bundle) {
  const PipelineConfig& cfg = bundle.cfg;
  const auto polylines = read_boundaries_json(boundaries_path);
  const PointCloud cloud = load_ply(cloud_path);
  const auto models = list_models(models_dir);

  const SeededRng root(seed);
  const auto candidates =
      select_parking_candidates(polylines, cfg.curb, root.derive("candidates"));
  if (candidates.empty())
    std::fprintf(stderr, "place: no admissible candidates\n");

  std::vector<VehiclePose> poses;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    SeededRng cand_rng = root.derive("pose").derive(i);
    const std::string& model = models[cand_rng.next_below(models.size())];

    // Fit the ground around the nominal on-road spot (half a width off
    // the boundary), where the chassis will rest.
    const Vec2 fit2 =
        xy(cand.anchor) - cand.sidewalk_side * (cfg.vehicle.width / 2.0);
    const Point3 fit_center{fit2.x, fit2.y, cand.anchor.z};
    GroundPlane plane;
    try {
      plane = fit_ground_plane(cloud, fit_center, cfg.placement, cand_rng);
    } catch (const error& e) {
      std::fprintf(stderr, "place: candidate %zu skipped: %s\n", i, e.what());
      continue;
    }
    VehiclePose pose =
        pose_vehicle(cand, plane, cfg.vehicle, cfg.placement, cand_rng);
    pose.mesh_id = fs::path(model).filename().string();
    poses.push_back(std::move(pose));
  }
  write_poses_json(out, poses, seed);
  std::fprintf(stderr, "place: %zu poses from %zu candidates\n", poses.size(),
               candidates.size());

  RunManifest manifest;
  manifest.subcommand = "place";
  manifest.seed = seed;
  manifest.config = bundle.resolved;
  manifest.inputs = {boundaries_path, cloud_path};
  manifest.outputs = {out};
  manifest.write(out + ".manifest.json");
  return 0;
}

int cmd_synthesize(const std::string& cloud_path, const std::string& poses_path,
                   const std::string& models_dir, const std::string& out_dir,
                   std::uint64_t seed, const ConfigBundle& bundle) {
  const PipelineConfig& cfg = bundle.cfg;
  const PointCloud cloud = load_ply(cloud_path);
  if (!cloud.has_heads())
    throw error("synthesize: cloud has no head positions (hx/hy/hz)");
  const auto poses = read_poses_json(poses_path);
  fs::create_directories(out_dir);

  RunManifest manifest;
  manifest.subcommand = "synthesize";
  manifest.seed = seed;
  manifest.config = bundle.resolved;
  manifest.inputs = {cloud_path, poses_path};

  std::map<std::string, TriangleMesh> cache;
  const SeededRng root(seed);
  std::size_t written = 0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const VehiclePose& pose = poses[i];
    auto it = cache.find(pose.mesh_id);
    if (it == cache.end()) {
      const fs::path model = fs::path(models_dir) / pose.mesh_id;
      const TriangleMesh mesh =
          canonicalize_vehicle(load_obj(model.string()), cfg.vehicle);
      it = cache.emplace(pose.mesh_id, mesh).first;
    }
    const TriangleMesh posed = pose.apply(it->second);
    const Bvh bvh(posed);

    SeededRng scene_rng = root.derive("scene").derive(i);
    std::pair<Point3, PointCloud> crop;
    try {
      crop = crop_scene(cloud, pose.translation, cfg.crop, scene_rng);
    } catch (const error& e) {
      std::fprintf(stderr, "synthesize: scene %zu skipped: %s\n", i, e.what());
      continue;
    }
    ScenePairRaw pair = synthesize_pair(crop.second, bvh);
    pair.center = crop.first;
    pair.pose = pose;
    if (pair.occluded_nothing)
      std::fprintf(stderr,
                   "synthesize: warning: scene %zu occludes nothing\n", i);

    char id[32];
    std::snprintf(id, sizeof(id), "scene%04zu", i);
    write_raw_scene(out_dir, id, pair,
                    std::to_string(seed) + "/scene/" + std::to_string(i),
                    manifest);
    ++written;
  }
  std::fprintf(stderr, "synthesize: %zu scenes written to %s\n", written,
               out_dir.c_str());
  manifest.write(fs::path(out_dir) / "synthesize_manifest.json");
  return 0;
}

int cmd_dataset(const std::string& scenes_dir, const std::string& split_path,
                std::uint64_t seed, const std::string& out_dir, bool augment_flag,
                const ConfigBundle& bundle) {
  const auto scenes = read_raw_scenes(scenes_dir);
  const SplitSpec split = split_path.empty()
                              ? SplitSpec{}
                              : SplitSpec::from_json_file(split_path);

  const SeededRng root(seed);
  std::vector<ScenePair> pairs;
  std::vector<SceneMeta> metas;
  for (const auto& scene : scenes) {
    SeededRng scene_rng = root.derive("dataset").derive(scene.id);
    ScenePair pair;
    try {
      pair = make_training_pair(scene.pair, scene_rng);
    } catch (const error& e) {
      std::fprintf(stderr, "dataset: scene %s dropped: %s\n", scene.id.c_str(),
                   e.what());
      continue;
    }
    if (augment_flag) {
      SeededRng aug_rng = scene_rng.derive("augment");
      pair = augment(pair, aug_rng);
    }
    pair.meta.id = scene.id;
    pair.meta.seed_path = scene.seed_path;
    pairs.push_back(std::move(pair));
    metas.push_back(pairs.back().meta);
  }
  if (pairs.empty()) throw error("dataset: no usable scenes");

  DatasetManifest manifest = split_geographic(metas, split);
  manifest.seed = seed;

  // write_dataset expects pairs in manifest order
  std::map<std::string, const ScenePair*> by_id;
  for (const auto& pair : pairs) by_id[pair.meta.id] = &pair;
  std::vector<ScenePair> ordered;
  for (const auto* split_ids : {&manifest.train, &manifest.test, &manifest.val})
    for (const auto& id : *split_ids) ordered.push_back(*by_id.at(id));
  write_dataset(ordered, manifest, out_dir);
  std::fprintf(stderr, "dataset: %zu train / %zu test / %zu val\n",
               manifest.train.size(), manifest.test.size(),
               manifest.val.size());

  RunManifest run;
  run.subcommand = "dataset";
  run.seed = seed;
  run.config = bundle.resolved;
  if (!split_path.empty()) run.inputs.push_back(split_path);
  run.add_output((fs::path(out_dir) / "manifest.json").string());
  run.write(fs::path(out_dir) / "dataset_manifest.json");
  return 0;
}

int cmd_kernel_check(std::uint64_t seed, int trials, const std::string& out) {
  SeededRng rng(seed);
  json kernels = json::object();
  bool all_pass = true;
  const struct {
    const char* name;
    double tolerance;
  } checks[] = {{"gridding", 1e-4},
                {"gridding_reverse", 1e-4},
                {"cubic_feature_sampling", 1e-4},
                {"folding", 1e-6}};
  for (const auto& check : checks) {
    SeededRng krng = rng.derive(check.name);
    const GradCheckReport report = grad_check(check.name, trials, 1e-6, krng);
    const bool pass = report.max_rel_error < check.tolerance;
    all_pass = all_pass && pass;
    kernels[check.name] = {{"trials", report.trials},
                           {"max_rel_error", report.max_rel_error},
                           {"tolerance", check.tolerance},
                           {"pass", pass}};
    std::fprintf(stderr, "kernel-check: %-24s max rel err %.3e  %s\n",
                 check.name, report.max_rel_error, pass ? "ok" : "FAIL");
  }

  // Structural identities alongside the gradients.
  SeededRng id_rng = rng.derive("identities");
  PointCloud cloud;
  cloud.frame = Frame::normalized;
  for (int i = 0; i < 2048; ++i)
    cloud.points.push_back({id_rng.uniform(-1, 1), id_rng.uniform(-1, 1),
                            id_rng.uniform(-1, 1)});
  const DenseGrid grid = gridding(cloud, kGridResolution);
  const double mass_err =
      std::abs(grid.mass() - static_cast<double>(cloud.size())) /
      static_cast<double>(cloud.size());
  const bool mass_ok = mass_err < 1e-9;
  all_pass = all_pass && mass_ok;
  kernels["mass_conservation"] = {{"relative_error", mass_err},
                                  {"pass", mass_ok}};

  const json doc{{"tool", "occlusynth"},
                 {"version", kVersion},
                 {"seed", seed},
                 {"kernels", kernels},
                 {"pass", all_pass}};
  std::ofstream f(out);
  if (!f) throw error("cannot write " + out);
  f << doc.dump(2) << "\n";

  RunManifest manifest;
  manifest.subcommand = "kernel-check";
  manifest.seed = seed;
  manifest.outputs = {out};
  manifest.write(out + ".manifest.json");
  if (!all_pass) throw error("kernel-check: tolerances exceeded; see " + out);
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             double threshold, const std::string& out, bool with_plane_stats,
             const ConfigBundle& bundle) {
  const PointCloud pred = load_ply(pred_path);
  const PointCloud gt = load_ply(gt_path);
  const MetricsReport report =
      evaluate(pred, gt, threshold, bundle.cfg.gridding_norm);
  json doc{{"tool", "occlusynth"},
           {"version", kVersion},
           {"schema", "eval-report-v1"},
           {"pred", fs::path(pred_path).filename().string()},
           {"gt", fs::path(gt_path).filename().string()},
           // threshold semantics follow the frame the inputs live in
           {"frame", report.has_gridding_loss ? "normalized" : "world"},
           {"metrics", report_json(report)}};
  if (with_plane_stats) {
    const PlaneStats stats = plane_stats(pred, gt);
    doc["plane_stats"] = {{"frac_within_5cm", stats.frac_within_5cm},
                          {"frac_within_10cm", stats.frac_within_10cm},
                          {"degenerate_count", stats.degenerate_count},
                          {"histogram", stats.histogram}};
  }
  std::ofstream f(out);
  if (!f) throw error("cannot write " + out);
  f << doc.dump(2) << "\n";
  std::fprintf(stderr, "eval: cd %.6e  fscore %.4f (P %.4f R %.4f)\n",
               report.cd, report.fscore, report.precision, report.recall);

  RunManifest manifest;
  manifest.subcommand = "eval";
  manifest.inputs = {pred_path, gt_path};
  manifest.outputs = {out};
  manifest.write(out + ".manifest.json");
  return 0;
}

int cmd_merge(const std::string& input_path, const std::string& generated_path,
              double threshold, const std::string& out) {
  const PointCloud input = load_ply(input_path);
  const PointCloud generated = load_ply(generated_path);
  MergeConfig cfg;
  cfg.overlap_threshold = threshold;
  const PointCloud merged = merge_completion(input, generated, cfg);
  save_ply(out, merged);
  std::fprintf(stderr, "merge: %zu measured + %zu generated kept of %zu\n",
               input.size(), merged.size() - input.size(), generated.size());

  RunManifest manifest;
  manifest.subcommand = "merge";
  manifest.inputs = {input_path, generated_path};
  manifest.outputs = {out};
  manifest.write(out + ".manifest.json");
  return 0;
}

int cmd_demo(std::uint64_t seed, const std::string& out_dir, int max_scenes,
             const ConfigBundle& bundle) {
  const PipelineConfig& cfg = bundle.cfg;
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  const SeededRng root(seed);

  RunManifest manifest;
  manifest.subcommand = "demo";
  manifest.seed = seed;
  manifest.config = bundle.resolved;

  // 1. Synthetic street, scanned.
  SynthStreetConfig street;
  SeededRng street_rng = root.derive("street");
  ScanStrip strip = make_street_strip(street, street_rng);
  save_strip((out / "strip.sst1").string(), strip);
  manifest.add_output((out / "strip.sst1").string());

  // 2. Normals + near-road filters.
  strip = estimate_normals(strip);
  strip = filter_by_range(strip, cfg.filter);
  strip = filter_by_height(strip, cfg.filter);
  const PointCloud cloud = strip_to_cloud(strip, true);
  save_ply((out / "filtered.ply").string(), cloud);
  manifest.add_output((out / "filtered.ply").string());
  std::fprintf(stderr, "demo: filtered cloud has %zu points\n", cloud.size());

  // 3. Road boundaries and parking candidates.
  const BoundaryResult bres = extract_boundaries(strip, cloud, cfg.curb);
  write_boundaries_json((out / "boundaries.json").string(), bres.polylines);
  manifest.add_output((out / "boundaries.json").string());
  const auto candidates = select_parking_candidates(
      bres.polylines, cfg.curb, root.derive("candidates"));
  if (candidates.empty()) throw error("demo: no parking candidates found");

  // 4. Vehicles posed at the candidates.
  std::vector<VehiclePose> poses;
  for (std::size_t i = 0;
       i < candidates.size() &&
       poses.size() < static_cast<std::size_t>(max_scenes);
       ++i) {
    SeededRng cand_rng = root.derive("pose").derive(i);
    const Vec2 fit2 = xy(candidates[i].anchor) -
                      candidates[i].sidewalk_side * (cfg.vehicle.width / 2.0);
    GroundPlane plane;
    try {
      plane = fit_ground_plane(cloud, {fit2.x, fit2.y, candidates[i].anchor.z},
                               cfg.placement, cand_rng);
    } catch (const error& e) {
      std::fprintf(stderr, "demo: candidate %zu skipped: %s\n", i, e.what());
      continue;
    }
    VehiclePose pose =
        pose_vehicle(candidates[i], plane, cfg.vehicle, cfg.placement, cand_rng);
    pose.mesh_id = "procedural";
    poses.push_back(std::move(pose));
  }
  if (poses.empty()) throw error("demo: no vehicle could be posed");
  write_poses_json((out / "poses.json").string(), poses, seed);
  manifest.add_output((out / "poses.json").string());

  // 5. Ray-cast occlusion per scene.
  fs::create_directories(out / "scenes");
  std::vector<RawSceneFile> raw_scenes;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    SeededRng car_rng = root.derive("car").derive(i);
    const TriangleMesh car = procedural_car(cfg.vehicle, car_rng);
    const Bvh bvh(poses[i].apply(car));

    SeededRng scene_rng = root.derive("scene").derive(i);
    std::pair<Point3, PointCloud> crop;
    try {
      crop = crop_scene(cloud, poses[i].translation, cfg.crop, scene_rng);
    } catch (const error& e) {
      std::fprintf(stderr, "demo: scene %zu skipped: %s\n", i, e.what());
      continue;
    }
    RawSceneFile scene;
    scene.pair = synthesize_pair(crop.second, bvh);
    scene.pair.center = crop.first;
    scene.pair.pose = poses[i];
    char id[32];
    std::snprintf(id, sizeof(id), "scene%04zu", i);
    scene.id = id;
    scene.seed_path = std::to_string(seed) + "/scene/" + std::to_string(i);
    write_raw_scene(out / "scenes", scene.id, scene.pair, scene.seed_path,
                    manifest);
    std::fprintf(stderr, "demo: %s removed %zu of %zu points\n", id,
                 scene.pair.removed_count, scene.pair.complete.size());
    raw_scenes.push_back(std::move(scene));
  }
  if (raw_scenes.empty()) throw error("demo: all scenes rejected");

  // 6. Normalized training pairs + dataset directory.
  std::vector<ScenePair> pairs;
  std::vector<SceneMeta> metas;
  for (const auto& scene : raw_scenes) {
    SeededRng scene_rng = root.derive("dataset").derive(scene.id);
    ScenePair pair;
    try {
      pair = make_training_pair(scene.pair, scene_rng);
    } catch (const error& e) {
      std::fprintf(stderr, "demo: scene %s dropped: %s\n", scene.id.c_str(),
                   e.what());
      continue;
    }
    pair.meta.id = scene.id;
    pair.meta.seed_path = scene.seed_path;
    pairs.push_back(std::move(pair));
    metas.push_back(pairs.back().meta);
  }
  if (pairs.empty()) throw error("demo: no scene had enough points");

  SplitSpec split;
  split.val_count = pairs.size() > 2 ? 1 : 0;
  DatasetManifest ds_manifest = split_geographic(metas, split);
  ds_manifest.seed = seed;
  std::map<std::string, const ScenePair*> by_id;
  for (const auto& pair : pairs) by_id[pair.meta.id] = &pair;
  std::vector<ScenePair> ordered;
  for (const auto* ids : {&ds_manifest.train, &ds_manifest.test,
                          &ds_manifest.val})
    for (const auto& id : *ids) ordered.push_back(*by_id.at(id));
  write_dataset(ordered, ds_manifest, (out / "dataset").string());
  manifest.add_output((out / "dataset" / "manifest.json").string());

  // 7. Evaluation: gap scene against the complete scene, plus a merge of
  // a mock completion back into the gap scene.
  json scene_reports = json::array();
  for (const auto& pair : ordered) {
    const MetricsReport rep =
        evaluate(pair.gapped, pair.complete, 0.01, cfg.gridding_norm);
    json entry{{"scene_id", pair.meta.id},
               {"gap_vs_complete", report_json(rep)}};

    LossConfig loss = cfg.loss;
    entry["staged_loss_stage1"] =
        staged_loss(pair.gapped, pair.gapped, pair.complete, loss);
    scene_reports.push_back(entry);
  }

  // merge demo in the world frame of the first scene
  {
    const auto& scene = raw_scenes.front();
    SeededRng merge_rng = root.derive("merge_demo");
    const PointCloud mock_completion =
        subsample(scene.pair.complete,
                  std::min<std::size_t>(scene.pair.complete.size(), 10000),
                  merge_rng);
    const PointCloud merged =
        merge_completion(scene.pair.gapped, mock_completion, cfg.merge);
    save_ply((out / "merged_demo.ply").string(), merged);
    manifest.add_output((out / "merged_demo.ply").string());
    scene_reports.push_back(
        {{"scene_id", scene.id},
         {"merge_demo",
          {{"input_points", scene.pair.gapped.size()},
           {"generated_points", mock_completion.size()},
           {"merged_points", merged.size()}}}});
  }

  const json report{{"tool", "occlusynth"},
                    {"version", kVersion},
                    {"seed", seed},
                    {"scenes", scene_reports}};
  std::ofstream rf(out / "report.json");
  rf << report.dump(2) << "\n";
  manifest.add_output((out / "report.json").string());

  manifest.write(out / "demo_manifest.json");
  std::fprintf(stderr, "demo: complete; outputs in %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occlusynth: occlusion synthesis and gap-completion toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  int threads = 0;
  app.add_option("--config", config_path, "pipeline config JSON")
      ->envname("OCCLUSYNTH_CONFIG");
  app.add_option("--threads", threads,
                 "worker threads (default: OCCLUSYNTH_THREADS or hardware)");

  // filter
  auto* filter = app.add_subcommand("filter", "near-road scene filters");
  std::string f_in, f_out;
  double f_max_range = -1, f_sensor = -1, f_hmin = 1e9, f_hmax = 1e9;
  filter->add_option("--in", f_in, "input .sst1 strip")->required();
  filter->add_option("--out", f_out, "output .ply cloud")->required();
  filter->add_option("--max-range", f_max_range, "horizontal range bound [m]");
  filter->add_option("--sensor-height", f_sensor, "sensor height [m]");
  filter->add_option("--h-min", f_hmin, "lower height band edge [m]");
  filter->add_option("--h-max", f_hmax, "upper height band edge [m]");

  // boundaries
  auto* boundaries = app.add_subcommand("boundaries", "curb extraction");
  std::string b_in, b_out;
  boundaries->add_option("--in", b_in, "filtered cloud .ply or .sst1 strip")
      ->required();
  boundaries->add_option("--out", b_out, "output boundaries JSON")->required();

  // place
  auto* place = app.add_subcommand("place", "pose vehicles at candidates");
  std::string p_boundaries, p_cloud, p_models, p_out;
  std::uint64_t p_seed = 0;
  place->add_option("--boundaries", p_boundaries, "boundaries JSON")->required();
  place->add_option("--cloud", p_cloud, "filtered cloud .ply")->required();
  place->add_option("--models", p_models, "directory of .obj vehicle models")
      ->required();
  place->add_option("--seed", p_seed, "random seed")->required();
  place->add_option("--out", p_out, "output poses JSON")->required();

  // synthesize
  auto* synthesize = app.add_subcommand("synthesize", "ray-cast occlusion");
  std::string s_cloud, s_poses, s_models, s_out;
  std::uint64_t s_seed = 0;
  synthesize->add_option("--cloud", s_cloud, "filtered cloud .ply")->required();
  synthesize->add_option("--poses", s_poses, "poses JSON")->required();
  synthesize->add_option("--models", s_models, "directory of .obj models")
      ->required();
  synthesize->add_option("--out", s_out, "output scenes directory")->required();
  synthesize->add_option("--seed", s_seed, "random seed")->required();

  // dataset
  auto* dataset = app.add_subcommand("dataset", "normalized training samples");
  std::string d_scenes, d_split, d_out;
  std::uint64_t d_seed = 0;
  bool d_augment = false;
  dataset->add_option("--scenes", d_scenes, "raw scenes directory")->required();
  dataset->add_option("--split", d_split, "geographic split JSON");
  dataset->add_option("--seed", d_seed, "random seed")->required();
  dataset->add_option("--out", d_out, "output dataset directory")->required();
  dataset->add_flag("--augment", d_augment, "apply a random dihedral augment");

  // kernel-check
  auto* kernel_check =
      app.add_subcommand("kernel-check", "gradient and identity checks");
  std::uint64_t k_seed = 7;
  int k_trials = 50;
  std::string k_out = "kernel_report.json";
  kernel_check->add_option("--seed", k_seed, "random seed");
  kernel_check->add_option("--trials", k_trials, "trials per kernel");
  kernel_check->add_option("--out", k_out, "output report JSON");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "metrics between two clouds");
  std::string e_pred, e_gt, e_out = "report.json";
  double e_d = 0.01;
  bool e_plane = false;
  eval_cmd->add_option("--pred", e_pred, "predicted cloud .ply")->required();
  eval_cmd->add_option("--gt", e_gt, "reference cloud .ply")->required();
  eval_cmd->add_option("--d", e_d, "F-Score distance threshold");
  eval_cmd->add_option("--out", e_out, "output report JSON");
  eval_cmd->add_flag("--plane-stats", e_plane,
                     "add point-to-local-plane statistics");

  // merge
  auto* merge_cmd = app.add_subcommand("merge", "merge completion into input");
  std::string m_input, m_generated, m_out;
  double m_threshold = 0.08;
  merge_cmd->add_option("--input", m_input, "measured cloud .ply")->required();
  merge_cmd->add_option("--generated", m_generated, "generated cloud .ply")
      ->required();
  merge_cmd->add_option("--threshold", m_threshold, "overlap threshold [m]");
  merge_cmd->add_option("--out", m_out, "output .ply")->required();

  // demo
  auto* demo = app.add_subcommand("demo", "end-to-end synthetic pipeline");
  std::uint64_t demo_seed = 7;
  std::string demo_out = "demo_out";
  int demo_scenes = 3;
  demo->add_option("--seed", demo_seed, "random seed");
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--scenes", demo_scenes, "maximum scenes to synthesize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    ConfigBundle bundle = load_config(config_path);
    if (threads > 0) bundle.cfg.threads = threads;
    if (bundle.cfg.threads > 0) set_default_threads(bundle.cfg.threads);

    if (*filter) {
      if (f_max_range > 0) bundle.cfg.filter.max_range = f_max_range;
      if (f_sensor > 0) bundle.cfg.filter.sensor_height = f_sensor;
      if (f_hmin < 1e8) bundle.cfg.filter.h_min = f_hmin;
      if (f_hmax < 1e8) bundle.cfg.filter.h_max = f_hmax;
      bundle.resolved["filter"] = config_to_json(bundle.cfg)["filter"];
      return cmd_filter(f_in, f_out, bundle);
    }
    if (*boundaries) return cmd_boundaries(b_in, b_out, bundle);
    if (*place)
      return cmd_place(p_boundaries, p_cloud, p_models, p_seed, p_out, bundle);
    if (*synthesize)
      return cmd_synthesize(s_cloud, s_poses, s_models, s_out, s_seed, bundle);
    if (*dataset)
      return cmd_dataset(d_scenes, d_split, d_seed, d_out, d_augment, bundle);
    if (*kernel_check) return cmd_kernel_check(k_seed, k_trials, k_out);
    if (*eval_cmd) return cmd_eval(e_pred, e_gt, e_d, e_out, e_plane, bundle);
    if (*merge_cmd) return cmd_merge(m_input, m_generated, m_threshold, m_out);
    if (*demo) return cmd_demo(demo_seed, demo_out, demo_scenes, bundle);
    return 2;
  } catch (const usage_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
