// Training-sample preparation: fixed-size subsampling, normalization to
// the [-1,1] cube with the x3 vertical gain, dihedral augmentation,
// geographic splits, and the on-disk dataset layout.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "occlusynth/geom.hpp"
#include "occlusynth/raycast.hpp"
#include "occlusynth/rng.hpp"

namespace occl {

/// Point budgets per training sample.
inline constexpr std::size_t kCompleteCount = 27648;
inline constexpr std::size_t kGapCount = 18500;

/// World <-> normalized map: x' = (x-cx)/s, y' = (y-cy)/s,
/// z' = k (z - z_ref) / s with s = 4 m and k = 3.
struct NormTransform {
  double cx = 0.0, cy = 0.0, z_ref = 0.0;
  double horizontal_scale = 4.0;  // s
  double vertical_gain = 3.0;     // k

  Point3 forward(const Point3& p) const {
    return {(p.x - cx) / horizontal_scale, (p.y - cy) / horizontal_scale,
            vertical_gain * (p.z - z_ref) / horizontal_scale};
  }
  Point3 inverse(const Point3& q) const {
    return {q.x * horizontal_scale + cx, q.y * horizontal_scale + cy,
            q.z * horizontal_scale / vertical_gain + z_ref};
  }
};

struct SceneMeta {
  std::string id;            // e.g. "scene0007"
  Point3 world_center;       // crop center, world frame
  std::string seed_path;     // derivation trail, e.g. "7/scene/3"
  std::size_t removed_count = 0;
  bool occluded_nothing = false;
  int augment_rotation = 0;  // quarter turns around +z
  int augment_flip = 0;      // 0 = none, 1 = x -> -x, 2 = y -> -y
};

/// Normalized (complete, gapped) training sample.
struct ScenePair {
  PointCloud complete;
  PointCloud gapped;
  NormTransform transform;
  SceneMeta meta;

  /// Enforces the exact point budgets and the [-1,1] coordinate range.
  void validate_counts() const;
};

/// Uniform sample of n points without replacement (sorted original order).
/// Throws "insufficient points" when the cloud has fewer than n.
PointCloud subsample(const PointCloud& cloud, std::size_t n, SeededRng& rng);

/// Normalizes both clouds of a raw pair with one shared transform;
/// z_ref is the 5th percentile of the complete scene's z. Attributes other
/// than coordinates are dropped. Throws if any normalized coordinate
/// leaves [-1,1].
ScenePair normalize_pair(const ScenePairRaw& raw);

/// subsample(complete -> 27,648), subsample(gapped -> 18,500), then
/// normalize_pair; the standard path from a raw pair to a training sample.
ScenePair make_training_pair(const ScenePairRaw& raw, SeededRng& rng);

/// One of the four z-rotations followed by an optional axis flip, the same
/// transform applied to both clouds; recorded in meta. Exact coordinate
/// swaps and negations, never trigonometry.
ScenePair augment(const ScenePair& pair, SeededRng& rng);

/// Geographic split regions: convex polygon or halfplane (a.x + b.y < c),
/// labeled train / test / val.
struct SplitRegion {
  std::string label;
  std::vector<Vec2> polygon;           // convex, when non-empty
  std::optional<std::array<double, 3>> halfplane;  // {a, b, c}

  bool contains(const Vec2& p) const;
};

struct SplitSpec {
  std::vector<SplitRegion> regions;
  std::size_t val_count = 0;  // cap for unassigned scenes routed to val

  static SplitSpec from_json_file(const std::string& path);
  std::string to_json() const;
};

struct DatasetManifest {
  std::vector<std::string> train, test, val;
  std::string split_spec_json;
  std::uint64_t seed = 0;

  std::size_t total() const { return train.size() + test.size() + val.size(); }
};

/// Assigns each scene by its world center. A center matched by two regions
/// is an error (overlapping split). Unassigned scenes fill val up to
/// spec.val_count, the remainder goes to train.
DatasetManifest split_geographic(const std::vector<SceneMeta>& metas,
                                 const SplitSpec& spec);

/// Writes sceneNNNN_{complete,gap}.ply (float32) + sceneNNNN_meta.json per
/// pair and a manifest.json with checksums.
void write_dataset(const std::vector<ScenePair>& pairs,
                   const DatasetManifest& manifest, const std::string& dir);

/// Loads a dataset directory, verifying checksums, per-split counts, and
/// meta presence. Errors name the offending scene id.
std::pair<std::vector<ScenePair>, DatasetManifest> read_dataset(
    const std::string& dir);

}  // namespace occl
