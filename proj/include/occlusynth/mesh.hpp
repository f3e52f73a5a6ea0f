// Triangle meshes for virtual vehicles: OBJ ingestion, metric
// canonicalization of unitless models, and a procedural two-box sedan
// used as a self-contained stand-in for external model libraries.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "occlusynth/geom.hpp"
#include "occlusynth/rng.hpp"

namespace occl {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }
  Aabb bounds() const;

  /// Applies p -> R p + t in place.
  void transform(const std::array<Vec3, 3>& rot_rows, const Vec3& t);
};

/// Canonical metric extents a vehicle model is scaled to.
struct VehicleDims {
  double length = 4.5;  // meters, +x after canonicalization
  double width = 1.8;   // +y
  double height = 1.5;  // +z

  void validate() const {
    if (!(length > 0 && width > 0 && height > 0))
      throw error("vehicle dims must be positive");
    if (!(length > width)) throw error("vehicle dims: length must exceed width");
  }
};

/// Loads a triangulated OBJ. Non-triangle faces are rejected with an error
/// asking for pre-triangulation. Duplicate vertices (within 1e-9) are
/// merged and zero-area triangles dropped.
TriangleMesh load_obj(const std::string& path);

void save_obj(const std::string& path, const TriangleMesh& mesh);

/// Rotates the mesh so the longest bbox extent lies along +x and the
/// smallest along +z, scales uniformly so the length equals dims.length,
/// and moves the bbox bottom center to the origin. Throws when two
/// extents are equal within 1% (ambiguous axes).
TriangleMesh canonicalize_vehicle(const TriangleMesh& mesh,
                                  const VehicleDims& dims);

/// Watertight two-box "sedan" (body + cabin) with the exact requested
/// bounding box; 24 triangles. The rng jitters cabin proportions.
TriangleMesh procedural_car(const VehicleDims& dims, SeededRng& rng);

}  // namespace occl
