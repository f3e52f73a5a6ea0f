#include "occlusynth/ply.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace occl {

namespace {

enum class PType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::size_t psize(PType t) {
  switch (t) {
    case PType::i8:
    case PType::u8:
      return 1;
    case PType::i16:
    case PType::u16:
      return 2;
    case PType::i32:
    case PType::u32:
    case PType::f32:
      return 4;
    case PType::f64:
      return 8;
  }
  return 0;
}

PType parse_type(const std::string& s) {
  if (s == "char" || s == "int8") return PType::i8;
  if (s == "uchar" || s == "uint8") return PType::u8;
  if (s == "short" || s == "int16") return PType::i16;
  if (s == "ushort" || s == "uint16") return PType::u16;
  if (s == "int" || s == "int32") return PType::i32;
  if (s == "uint" || s == "uint32") return PType::u32;
  if (s == "float" || s == "float32") return PType::f32;
  if (s == "double" || s == "float64") return PType::f64;
  throw error("ply: unknown property type '" + s + "'");
}

struct Prop {
  std::string name;
  PType type = PType::f32;
  bool is_list = false;
  PType count_type = PType::u8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Prop> props;
};

double read_scalar_binary(std::istream& in, PType t) {
  std::array<char, 8> buf;
  in.read(buf.data(), static_cast<std::streamsize>(psize(t)));
  if (!in) throw error("ply: truncated file");
  switch (t) {
    case PType::i8: {
      std::int8_t v;
      std::memcpy(&v, buf.data(), 1);
      return v;
    }
    case PType::u8: {
      std::uint8_t v;
      std::memcpy(&v, buf.data(), 1);
      return v;
    }
    case PType::i16: {
      std::int16_t v;
      std::memcpy(&v, buf.data(), 2);
      return v;
    }
    case PType::u16: {
      std::uint16_t v;
      std::memcpy(&v, buf.data(), 2);
      return v;
    }
    case PType::i32: {
      std::int32_t v;
      std::memcpy(&v, buf.data(), 4);
      return v;
    }
    case PType::u32: {
      std::uint32_t v;
      std::memcpy(&v, buf.data(), 4);
      return v;
    }
    case PType::f32: {
      float v;
      std::memcpy(&v, buf.data(), 4);
      return v;
    }
    case PType::f64: {
      double v;
      std::memcpy(&v, buf.data(), 8);
      return v;
    }
  }
  return 0.0;
}

double read_scalar_ascii(std::istream& in, PType) {
  double v;
  if (!(in >> v)) throw error("ply: truncated file");
  return v;
}

void warn_once(const WarnFn& warn, const std::string& msg) {
  if (warn) warn(msg);
}

}  // namespace

PointCloud load_ply(const std::string& path, const WarnFn& warn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw error("ply: bad magic in " + path);

  bool binary = false;
  std::vector<Element> elements;
  for (;;) {
    if (!std::getline(in, line)) throw error("ply: header without end_header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian")
        binary = true;
      else if (fmt == "ascii")
        binary = false;
      else
        throw error("ply: unsupported format '" + fmt + "'");
    } else if (tok == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tok == "property") {
      if (elements.empty()) throw error("ply: property before element");
      std::string t;
      ls >> t;
      Prop p;
      if (t == "list") {
        std::string ct, vt;
        ls >> ct >> vt >> p.name;
        p.is_list = true;
        p.count_type = parse_type(ct);
        p.type = parse_type(vt);
      } else {
        ls >> p.name;
        p.type = parse_type(t);
      }
      elements.back().props.push_back(p);
    } else if (tok == "end_header") {
      break;
    } else {
      throw error("ply: unexpected header token '" + tok + "'");
    }
  }

  PointCloud cloud;
  auto scalar = [&](PType t) {
    return binary ? read_scalar_binary(in, t) : read_scalar_ascii(in, t);
  };

  for (const auto& elem : elements) {
    if (elem.name != "vertex") {
      warn_once(warn, "ply: dropping element '" + elem.name + "' (" +
                          std::to_string(elem.count) + " rows)");
      for (std::size_t r = 0; r < elem.count; ++r) {
        for (const auto& p : elem.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(scalar(p.count_type));
            for (std::size_t i = 0; i < n; ++i) scalar(p.type);
          } else {
            scalar(p.type);
          }
        }
      }
      continue;
    }

    // Column storage per property; mapped to cloud fields afterwards.
    std::vector<std::vector<double>> cols(elem.props.size());
    std::vector<bool> listy(elem.props.size(), false);
    for (std::size_t c = 0; c < elem.props.size(); ++c) {
      if (elem.props[c].is_list) {
        listy[c] = true;
        warn_once(warn, "ply: dropping list property '" + elem.props[c].name +
                            "' on vertex");
      } else {
        cols[c].reserve(elem.count);
      }
    }
    for (std::size_t r = 0; r < elem.count; ++r) {
      for (std::size_t c = 0; c < elem.props.size(); ++c) {
        const auto& p = elem.props[c];
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(scalar(p.count_type));
          for (std::size_t i = 0; i < n; ++i) scalar(p.type);
        } else {
          cols[c].push_back(scalar(p.type));
        }
      }
    }

    std::map<std::string, std::vector<double>*> named;
    for (std::size_t c = 0; c < elem.props.size(); ++c)
      if (!listy[c]) named[elem.props[c].name] = &cols[c];

    auto take = [&](const char* n) -> std::vector<double>* {
      auto it = named.find(n);
      if (it == named.end()) return nullptr;
      auto* v = it->second;
      named.erase(it);
      return v;
    };

    auto *px = take("x"), *py = take("y"), *pz = take("z");
    if (!px || !py || !pz) throw error("ply: vertex element lacks x/y/z");
    cloud.points.resize(elem.count);
    for (std::size_t i = 0; i < elem.count; ++i)
      cloud.points[i] = {(*px)[i], (*py)[i], (*pz)[i]};

    auto take3 = [&](const char* a, const char* b, const char* c,
                     std::vector<Point3>& dst) {
      auto *va = take(a), *vb = take(b), *vc = take(c);
      if (!va || !vb || !vc) return;
      dst.resize(elem.count);
      for (std::size_t i = 0; i < elem.count; ++i)
        dst[i] = {(*va)[i], (*vb)[i], (*vc)[i]};
    };
    take3("hx", "hy", "hz", cloud.heads);
    take3("nx", "ny", "nz", cloud.normals);
    if (auto* v = take("reflectance")) cloud.reflectance = std::move(*v);
    if (auto* v = take("provenance")) {
      cloud.provenance.resize(elem.count);
      for (std::size_t i = 0; i < elem.count; ++i)
        cloud.provenance[i] = static_cast<std::uint8_t>((*v)[i]);
    }
    for (auto& [name, col] : named)
      cloud.extras.emplace_back(name, std::move(*col));
  }

  if (cloud.points.empty() && elements.empty())
    throw error("ply: no vertex element in " + path);
  return cloud;
}

void save_ply(const std::string& path, const PointCloud& cloud,
              const PlyWriteOptions& opts) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write " + path);

  const char* ftype = opts.use_double ? "double" : "float";
  std::ostringstream hdr;
  hdr << "ply\n";
  hdr << "format " << (opts.ascii ? "ascii" : "binary_little_endian")
      << " 1.0\n";
  hdr << "element vertex " << cloud.size() << "\n";
  for (const char* n : {"x", "y", "z"})
    hdr << "property " << ftype << " " << n << "\n";
  if (cloud.has_heads())
    for (const char* n : {"hx", "hy", "hz"})
      hdr << "property " << ftype << " " << n << "\n";
  if (cloud.has_normals())
    for (const char* n : {"nx", "ny", "nz"})
      hdr << "property " << ftype << " " << n << "\n";
  if (!cloud.reflectance.empty())
    hdr << "property " << ftype << " reflectance\n";
  if (!cloud.provenance.empty()) hdr << "property uchar provenance\n";
  for (const auto& [name, vals] : cloud.extras)
    hdr << "property " << ftype << " " << name << "\n";
  hdr << "end_header\n";
  out << hdr.str();

  auto put = [&](double v) {
    if (opts.ascii) {
      char buf[32];
      if (opts.use_double)
        std::snprintf(buf, sizeof(buf), "%.17g", v);
      else
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<float>(v));
      out << buf;
    } else if (opts.use_double) {
      out.write(reinterpret_cast<const char*>(&v), 8);
    } else {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  };
  auto sep = [&] {
    if (opts.ascii) out << ' ';
  };

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    put(p.x);
    sep();
    put(p.y);
    sep();
    put(p.z);
    if (cloud.has_heads()) {
      const auto& h = cloud.heads[i];
      sep();
      put(h.x);
      sep();
      put(h.y);
      sep();
      put(h.z);
    }
    if (cloud.has_normals()) {
      const auto& n = cloud.normals[i];
      sep();
      put(n.x);
      sep();
      put(n.y);
      sep();
      put(n.z);
    }
    if (!cloud.reflectance.empty()) {
      sep();
      put(cloud.reflectance[i]);
    }
    if (!cloud.provenance.empty()) {
      if (opts.ascii)
        out << ' ' << static_cast<int>(cloud.provenance[i]);
      else
        out.write(reinterpret_cast<const char*>(&cloud.provenance[i]), 1);
    }
    for (const auto& [name, vals] : cloud.extras) {
      sep();
      put(vals[i]);
    }
    if (opts.ascii) out << '\n';
  }
  if (!out) throw error("ply: write failed for " + path);
}

}  // namespace occl
