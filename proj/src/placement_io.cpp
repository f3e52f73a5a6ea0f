#include <fstream>

#include <json.hpp>

#include "occlusynth/placement.hpp"

using json = nlohmann::json;

namespace occl {

void write_poses_json(const std::string& path,
                      const std::vector<VehiclePose>& poses,
                      std::uint64_t seed) {
  json list = json::array();
  for (const auto& pose : poses) {
    json matrix = json::array();
    for (int r = 0; r < 3; ++r) {
      matrix.push_back(pose.rotation_rows[r].x);
      matrix.push_back(pose.rotation_rows[r].y);
      matrix.push_back(pose.rotation_rows[r].z);
      matrix.push_back(pose.translation[r]);
    }
    for (const double v : {0.0, 0.0, 0.0, 1.0}) matrix.push_back(v);
    list.push_back({{"matrix", matrix},
                    {"mesh_id", pose.mesh_id},
                    {"mode", to_string(pose.mode)},
                    {"lateral_offset", pose.lateral_offset}});
  }
  const json doc{{"format", "occlusynth-poses-v1"},
                 {"seed", seed},
                 {"poses", list}};
  std::ofstream out(path);
  if (!out) throw error("cannot write " + path);
  out << doc.dump(2) << "\n";
}

std::vector<VehiclePose> read_poses_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw error("poses: invalid JSON: " + std::string(e.what()));
  }

  std::vector<VehiclePose> out;
  for (const auto& p : doc.at("poses")) {
    VehiclePose pose;
    const auto& m = p.at("matrix");
    if (m.size() != 16) throw error("poses: matrix must have 16 entries");
    for (int r = 0; r < 3; ++r) {
      pose.rotation_rows[r] = {m.at(4 * r + 0).get<double>(),
                               m.at(4 * r + 1).get<double>(),
                               m.at(4 * r + 2).get<double>()};
      pose.translation[r] = m.at(4 * r + 3).get<double>();
    }
    pose.mesh_id = p.value("mesh_id", "");
    pose.mode = parking_mode_from_string(p.value("mode", "on_road"));
    pose.lateral_offset = p.value("lateral_offset", 0.0);

    // Rotation must be orthonormal with det +1.
    const auto& r = pose.rotation_rows;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (std::abs(r[i].dot(r[j]) - (i == j ? 1.0 : 0.0)) > 1e-9)
          throw error("poses: rotation is not orthonormal");
    if (std::abs(r[0].dot(r[1].cross(r[2])) - 1.0) > 1e-9)
      throw error("poses: rotation determinant is not +1");
    out.push_back(std::move(pose));
  }
  return out;
}

}  // namespace occl
