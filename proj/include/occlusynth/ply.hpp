// PLY point cloud I/O (binary little-endian and ASCII).
//
// Required vertex properties: x, y, z. Recognized optional properties:
// hx, hy, hz (sensor head), nx, ny, nz (normal), reflectance, and
// provenance (uchar). Unknown scalar vertex properties survive a
// round-trip via PointCloud::extras; list properties and non-vertex
// elements are dropped with a warning.

#pragma once

#include <functional>
#include <string>

#include "occlusynth/geom.hpp"

namespace occl {

using WarnFn = std::function<void(const std::string&)>;

PointCloud load_ply(const std::string& path, const WarnFn& warn = {});

struct PlyWriteOptions {
  bool ascii = false;
  // On-disk float width for coordinates and attributes. Files are float32
  // by default; doubles are for debugging.
  bool use_double = false;
};

void save_ply(const std::string& path, const PointCloud& cloud,
              const PlyWriteOptions& opts = {});

}  // namespace occl
