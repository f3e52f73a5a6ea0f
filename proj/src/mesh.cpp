#include "occlusynth/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace occl {

Aabb TriangleMesh::bounds() const {
  Aabb b;
  for (const auto& v : vertices) b.expand(v);
  return b;
}

void TriangleMesh::transform(const std::array<Vec3, 3>& rot_rows,
                             const Vec3& t) {
  for (auto& v : vertices) {
    const Vec3 r{rot_rows[0].dot(v), rot_rows[1].dot(v), rot_rows[2].dot(v)};
    v = r + t;
  }
}

namespace {

double triangle_area2(const Point3& a, const Point3& b, const Point3& c) {
  return (b - a).cross(c - a).norm();
}

// Merge vertices closer than 1e-9 by snapping to a quantized lattice.
TriangleMesh cleanup(std::vector<Point3> vertices,
                     std::vector<std::array<std::uint32_t, 3>> triangles) {
  constexpr double kQuant = 1e-9;
  std::map<std::tuple<long long, long long, long long>, std::uint32_t> seen;
  std::vector<std::uint32_t> remap(vertices.size());
  TriangleMesh out;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const auto& v = vertices[i];
    if (!v.finite()) throw error("mesh: non-finite vertex");
    const auto key = std::make_tuple(
        static_cast<long long>(std::llround(v.x / kQuant)),
        static_cast<long long>(std::llround(v.y / kQuant)),
        static_cast<long long>(std::llround(v.z / kQuant)));
    auto [it, inserted] =
        seen.emplace(key, static_cast<std::uint32_t>(out.vertices.size()));
    if (inserted) out.vertices.push_back(v);
    remap[i] = it->second;
  }
  for (auto tri : triangles) {
    for (auto& ix : tri) ix = remap[ix];
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
    if (triangle_area2(out.vertices[tri[0]], out.vertices[tri[1]],
                       out.vertices[tri[2]]) < 1e-14)
      continue;
    out.triangles.push_back(tri);
  }
  if (out.vertices.empty() || out.triangles.empty())
    throw error("mesh: empty after cleanup");
  return out;
}

}  // namespace

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open " + path);

  std::vector<Point3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok == "v") {
      Point3 v;
      if (!(ls >> v.x >> v.y >> v.z))
        throw error("obj: bad vertex at line " + std::to_string(lineno));
      vertices.push_back(v);
    } else if (tok == "f") {
      std::vector<std::uint32_t> ids;
      std::string ref;
      while (ls >> ref) {
        // accept "v", "v/t", "v//n", "v/t/n"
        const auto slash = ref.find('/');
        const std::string vstr = slash == std::string::npos
                                     ? ref
                                     : ref.substr(0, slash);
        long v = std::strtol(vstr.c_str(), nullptr, 10);
        if (v < 0) v = static_cast<long>(vertices.size()) + v + 1;
        if (v < 1 || static_cast<std::size_t>(v) > vertices.size())
          throw error("obj: face index out of range at line " +
                      std::to_string(lineno));
        ids.push_back(static_cast<std::uint32_t>(v - 1));
      }
      if (ids.size() != 3)
        throw error("obj: non-triangle face at line " + std::to_string(lineno) +
                    "; triangulate the mesh before loading");
      triangles.push_back({ids[0], ids[1], ids[2]});
    }
    // other record types (vn, vt, usemtl, ...) are ignored
  }
  if (vertices.empty() || triangles.empty()) throw error("obj: empty mesh");
  return cleanup(std::move(vertices), std::move(triangles));
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw error("cannot write " + path);
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw error("obj: write failed for " + path);
}

TriangleMesh canonicalize_vehicle(const TriangleMesh& mesh,
                                  const VehicleDims& dims) {
  dims.validate();
  const Aabb box = mesh.bounds();
  const Point3 ext = box.extent();

  // Rank axes by extent: largest -> x (length), smallest -> z (height).
  std::array<int, 3> axis{0, 1, 2};
  std::sort(axis.begin(), axis.end(),
            [&](int a, int b) { return ext[a] > ext[b]; });
  for (int i = 0; i < 2; ++i) {
    const double lo = ext[axis[i + 1]], hi = ext[axis[i]];
    if (hi <= 0.0 || (hi - lo) / hi < 0.01)
      throw error(
          "canonicalize: bbox extents ambiguous within 1%; supply explicit "
          "axis hints");
  }

  // Proper rotation sending source axis[k] to target axis k.
  std::array<Vec3, 3> rows{};
  for (int k = 0; k < 3; ++k) rows[k][axis[k]] = 1.0;
  const double det =
      rows[0].dot(rows[1].cross(rows[2]));
  if (det < 0.0) rows[1] = -rows[1];  // flip width axis; bodies are symmetric

  TriangleMesh out = mesh;
  out.transform(rows, {0, 0, 0});

  const double scale = dims.length / ext[axis[0]];
  for (auto& v : out.vertices) v = v * scale;

  const Aabb nb = out.bounds();
  const Vec3 shift{-(nb.min.x + nb.max.x) / 2.0, -(nb.min.y + nb.max.y) / 2.0,
                   -nb.min.z};
  for (auto& v : out.vertices) v += shift;
  return out;
}

namespace {

// Axis-aligned box as 12 triangles with outward winding.
void emit_box(TriangleMesh& mesh, const Point3& lo, const Point3& hi) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  for (int i = 0; i < 8; ++i)
    mesh.vertices.push_back({i & 1 ? hi.x : lo.x, i & 2 ? hi.y : lo.y,
                             i & 4 ? hi.z : lo.z});
  static constexpr std::uint32_t kFaces[12][3] = {
      {0, 2, 1}, {1, 2, 3},  // bottom (z = lo)
      {4, 5, 6}, {5, 7, 6},  // top
      {0, 1, 4}, {1, 5, 4},  // y = lo
      {2, 6, 3}, {3, 6, 7},  // y = hi
      {0, 4, 2}, {2, 4, 6},  // x = lo
      {1, 3, 5}, {3, 7, 5},  // x = hi
  };
  for (const auto& f : kFaces)
    mesh.triangles.push_back({base + f[0], base + f[1], base + f[2]});
}

}  // namespace

TriangleMesh procedural_car(const VehicleDims& dims, SeededRng& rng) {
  dims.validate();
  const double L = dims.length, W = dims.width, H = dims.height;

  // Body spans the full footprint; the cabin supplies the total height.
  const double body_h = H * rng.uniform(0.55, 0.65);
  const double cabin_len = L * rng.uniform(0.42, 0.52);
  const double cabin_w = W * rng.uniform(0.82, 0.92);
  const double cabin_back = -L / 2 + L * rng.uniform(0.22, 0.30);

  TriangleMesh mesh;
  emit_box(mesh, {-L / 2, -W / 2, 0.0}, {L / 2, W / 2, body_h});
  emit_box(mesh, {cabin_back, -cabin_w / 2, body_h},
           {cabin_back + cabin_len, cabin_w / 2, H});
  return mesh;
}

}  // namespace occl
