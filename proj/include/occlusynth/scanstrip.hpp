// Scan strips: 2D arrays of LiDAR returns ordered by mirror angle (3000
// rows per rotation) and acquisition time (columns). Includes the SST1
// container, strip-space normal estimation, and the near-road range /
// height filters.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "occlusynth/geom.hpp"

namespace occl {

struct ScanRecord {
  Point3 p;                    // measured object point (meters)
  Point3 h;                    // sensor head position (meters)
  std::optional<Vec3> normal;  // unit normal, toward the head
  double reflectance = 0.0;
  bool valid = false;
};

/// Row-major grid of returns. The row count is fixed by the scanner's
/// 3000 returns per mirror rotation.
class ScanStrip {
 public:
  static constexpr int kRows = 3000;

  ScanStrip() = default;
  explicit ScanStrip(int cols);

  int rows() const { return kRows; }
  int cols() const { return cols_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(kRows) * cols_;
  }

  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(r) * cols_ + c;
  }

  ScanRecord record(int r, int c) const;
  void set_record(int r, int c, const ScanRecord& rec);

  bool is_valid(int r, int c) const { return valid[idx(r, c)] != 0; }
  void invalidate(int r, int c) { valid[idx(r, c)] = 0; }
  std::size_t valid_count() const;

  bool has_normals() const { return !n.empty(); }
  bool has_reflectance() const { return !refl.empty(); }
  /// A zero vector in the normals plane means "no normal at this pixel".
  std::optional<Vec3> normal_at(int r, int c) const;

  // Plane storage, row-major. p and h always allocated; n/refl optional.
  std::vector<Point3> p, h;
  std::vector<Vec3> n;
  std::vector<double> refl;
  std::vector<std::uint8_t> valid;

 private:
  int cols_ = 0;
};

/// Thresholds of the near-road scene filters.
struct FilterConfig {
  double max_range = 15.0;      // meters, horizontal point-to-head bound
  double sensor_height = 2.75;  // meters above ground
  double h_min = -0.35;         // meters, lower band edge
  double h_max = 2.0;           // meters, upper band edge

  void validate() const {
    if (!(max_range > 0.0)) throw error("filter config: max_range must be > 0");
    if (!(h_min < h_max)) throw error("filter config: h_min must be < h_max");
  }
};

/// Height above ground of a return, from the head z and the mounting
/// height: H = z_p - z_h + sensor_height.
inline double height_above_ground(const Point3& p, const Point3& h,
                                  double sensor_height) {
  return p.z - h.z + sensor_height;
}

ScanStrip load_strip(const std::string& path);
void save_strip(const std::string& path, const ScanStrip& strip);

/// Computes per-pixel unit normals from strip-space differences
/// (cross product of the row- and column-direction tangents), oriented
/// toward the head. Pixels without a valid neighbor in both directions
/// keep no normal.
ScanStrip estimate_normals(const ScanStrip& strip);

/// Invalidates pixels whose horizontal point-to-head distance exceeds
/// cfg.max_range. Never modifies coordinates.
ScanStrip filter_by_range(const ScanStrip& strip, const FilterConfig& cfg);

/// Keeps pixels with h_min < H < h_max (strict), invalidates the rest.
ScanStrip filter_by_height(const ScanStrip& strip, const FilterConfig& cfg);

/// One point per valid pixel in row-major order, carrying heads and, when
/// every valid pixel has one, normals. with_strip_index adds strip_row /
/// strip_col extra columns so strip connectivity survives PLY export.
PointCloud strip_to_cloud(const ScanStrip& strip,
                          bool with_strip_index = false);

}  // namespace occl
