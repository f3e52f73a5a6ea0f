// Core geometric types shared by the whole pipeline: points, boxes,
// point clouds with optional per-point attributes.
//
// All coordinates are double precision in memory. Serialized files may
// narrow to float32; loaders widen back to double.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace occl {

/// Domain error: preconditions violated, unusable inputs, corrupt files.
/// The CLI maps this to exit code 1.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? *this / n : Vec3{0, 0, 0};
  }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  bool operator==(const Vec3& o) const {
    return x == o.x && y == o.y && z == o.z;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

using Point3 = Vec3;

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0, 0};
  }
  /// Counter-clockwise perpendicular.
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 xy(const Vec3& v) { return {v.x, v.y}; }

inline double dist2(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}
inline double dist(const Point3& a, const Point3& b) {
  return std::sqrt(dist2(a, b));
}
/// Horizontal (xy-only) distance. Range gating works in this metric.
inline double dist_xy(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct Aabb {
  Point3 min{std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity()};
  Point3 max{-std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity()};

  bool empty() const { return min.x > max.x; }
  void expand(const Point3& p) {
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    min.z = std::min(min.z, p.z);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
    max.z = std::max(max.z, p.z);
  }
  void expand(const Aabb& b) {
    if (!b.empty()) {
      expand(b.min);
      expand(b.max);
    }
  }
  Point3 extent() const { return max - min; }
  Point3 center() const { return (min + max) * 0.5; }
  bool contains(const Point3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
           p.z >= min.z && p.z <= max.z;
  }
};

/// Coordinate frame a cloud lives in. World is meters in the mapping CRS;
/// normalized is the [-1,1]^3 cube fed to the numeric kernels.
enum class Frame : std::uint8_t { world, normalized };

/// Unordered point set with optional parallel attribute arrays.
/// Invariant: attribute arrays are either empty or exactly points.size().
struct PointCloud {
  std::vector<Point3> points;
  std::vector<Point3> heads;    // sensor head per point (h_i), optional
  std::vector<Vec3> normals;    // unit normals, optional
  std::vector<double> reflectance;  // optional
  std::vector<std::uint8_t> provenance;  // 0 = measured, 1 = generated
  Frame frame = Frame::world;

  // Unknown scalar PLY properties carried through round-trips.
  std::vector<std::pair<std::string, std::vector<double>>> extras;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_heads() const { return !heads.empty(); }
  bool has_normals() const { return !normals.empty(); }

  Aabb bounds() const {
    Aabb b;
    for (const auto& p : points) b.expand(p);
    return b;
  }

  /// Checks the structural invariants; throws occl::error on violation.
  void validate() const;

  /// Selects a subset by index, carrying all attributes along.
  PointCloud select(const std::vector<std::size_t>& ids) const;
};

}  // namespace occl
