#include "occlusynth/geom.hpp"

namespace occl {

void PointCloud::validate() const {
  auto check_len = [&](std::size_t n, const char* name) {
    if (n != 0 && n != points.size())
      throw error(std::string("point cloud: ") + name +
                  " length does not match points");
  };
  check_len(heads.size(), "heads");
  check_len(normals.size(), "normals");
  check_len(reflectance.size(), "reflectance");
  check_len(provenance.size(), "provenance");
  for (const auto& [name, vals] : extras) check_len(vals.size(), name.c_str());

  for (const auto& p : points)
    if (!p.finite()) throw error("point cloud: non-finite coordinate");
  for (const auto& n : normals) {
    if (std::abs(n.norm() - 1.0) > 1e-6)
      throw error("point cloud: normal is not unit length");
  }
}

PointCloud PointCloud::select(const std::vector<std::size_t>& ids) const {
  PointCloud out;
  out.frame = frame;
  out.points.reserve(ids.size());
  for (const auto i : ids) out.points.push_back(points[i]);
  auto pick3 = [&](const std::vector<Point3>& src, std::vector<Point3>& dst) {
    if (src.empty()) return;
    dst.reserve(ids.size());
    for (const auto i : ids) dst.push_back(src[i]);
  };
  pick3(heads, out.heads);
  pick3(normals, out.normals);
  if (!reflectance.empty()) {
    out.reflectance.reserve(ids.size());
    for (const auto i : ids) out.reflectance.push_back(reflectance[i]);
  }
  if (!provenance.empty()) {
    out.provenance.reserve(ids.size());
    for (const auto i : ids) out.provenance.push_back(provenance[i]);
  }
  for (const auto& [name, vals] : extras) {
    std::vector<double> picked;
    picked.reserve(ids.size());
    for (const auto i : ids) picked.push_back(vals[i]);
    out.extras.emplace_back(name, std::move(picked));
  }
  return out;
}

}  // namespace occl
