#include <fstream>

#include <json.hpp>

#include "occlusynth/boundary.hpp"

using json = nlohmann::json;

namespace occl {

void write_boundaries_json(const std::string& path,
                           const std::vector<BoundaryPolyline>& polylines) {
  json features = json::array();
  for (std::size_t i = 0; i < polylines.size(); ++i) {
    const auto& pl = polylines[i];
    json coords = json::array();
    for (const auto& v : pl.vertices) coords.push_back({v.x, v.y, v.z});
    features.push_back(
        {{"type", "Feature"},
         {"properties",
          {{"id", i},
           {"mean_curb_top_z", pl.mean_curb_top_z},
           {"sidewalk_side", {pl.sidewalk_side.x, pl.sidewalk_side.y}},
           {"length_m", pl.arc_length()}}},
         {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
  }
  const json doc{{"type", "FeatureCollection"}, {"features", features}};
  std::ofstream out(path);
  if (!out) throw error("cannot write " + path);
  out << doc.dump(2) << "\n";
}

std::vector<BoundaryPolyline> read_boundaries_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw error("boundaries: invalid JSON: " + std::string(e.what()));
  }

  std::vector<BoundaryPolyline> out;
  for (const auto& f : doc.at("features")) {
    BoundaryPolyline pl;
    const auto& geom = f.at("geometry");
    if (geom.at("type").get<std::string>() != "LineString")
      throw error("boundaries: geometry must be LineString");
    for (const auto& c : geom.at("coordinates"))
      pl.vertices.push_back({c.at(0).get<double>(), c.at(1).get<double>(),
                             c.size() > 2 ? c.at(2).get<double>() : 0.0});
    if (pl.vertices.size() < 2)
      throw error("boundaries: polyline needs >= 2 vertices");

    const auto& props = f.at("properties");
    pl.mean_curb_top_z = props.value("mean_curb_top_z", 0.0);
    if (props.contains("sidewalk_side")) {
      const auto& s = props["sidewalk_side"];
      pl.sidewalk_side = {s.at(0).get<double>(), s.at(1).get<double>()};
    }
    // tangents are derived data
    pl.tangents.resize(pl.vertices.size());
    for (std::size_t i = 0; i < pl.vertices.size(); ++i) {
      const std::size_t a = i == 0 ? 0 : i - 1;
      const std::size_t b = std::min(i + 1, pl.vertices.size() - 1);
      pl.tangents[i] = (xy(pl.vertices[b]) - xy(pl.vertices[a])).normalized();
    }
    out.push_back(std::move(pl));
  }
  return out;
}

}  // namespace occl
