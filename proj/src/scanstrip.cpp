#include "occlusynth/scanstrip.hpp"

#include <cstring>
#include <fstream>
#include <functional>

namespace occl {

ScanStrip::ScanStrip(int cols) : cols_(cols) {
  if (cols < 1) throw error("scan strip: cols must be >= 1");
  const std::size_t n_px = pixel_count();
  p.assign(n_px, {});
  h.assign(n_px, {});
  valid.assign(n_px, 0);
}

ScanRecord ScanStrip::record(int r, int c) const {
  const std::size_t i = idx(r, c);
  ScanRecord rec;
  rec.p = p[i];
  rec.h = h[i];
  rec.normal = normal_at(r, c);
  rec.reflectance = refl.empty() ? 0.0 : refl[i];
  rec.valid = valid[i] != 0;
  return rec;
}

void ScanStrip::set_record(int r, int c, const ScanRecord& rec) {
  const std::size_t i = idx(r, c);
  p[i] = rec.p;
  h[i] = rec.h;
  if (rec.normal) {
    if (n.empty()) n.assign(pixel_count(), {});
    n[i] = *rec.normal;
  } else if (!n.empty()) {
    n[i] = {};
  }
  if (rec.reflectance != 0.0 && refl.empty()) refl.assign(pixel_count(), 0.0);
  if (!refl.empty()) refl[i] = rec.reflectance;
  valid[i] = rec.valid ? 1 : 0;
}

std::size_t ScanStrip::valid_count() const {
  std::size_t n_valid = 0;
  for (const auto v : valid) n_valid += v != 0;
  return n_valid;
}

std::optional<Vec3> ScanStrip::normal_at(int r, int c) const {
  if (n.empty()) return std::nullopt;
  const Vec3& v = n[idx(r, c)];
  if (v.x == 0.0 && v.y == 0.0 && v.z == 0.0) return std::nullopt;
  return v;
}

// --- SST1 container ---------------------------------------------------
//
// 16-byte header: magic "SST1", u32 rows, u32 cols, u32 plane bitmask;
// then row-major float32 planes in fixed order px,py,pz,hx,hy,hz,
// nx,ny,nz,reflectance (bits 0..9), then a valid plane of u8 (bit 10).
// Little-endian throughout.

namespace {

constexpr std::uint32_t kBitP = 0x007;     // bits 0..2
constexpr std::uint32_t kBitH = 0x038;     // bits 3..5
constexpr std::uint32_t kBitN = 0x1c0;     // bits 6..8
constexpr std::uint32_t kBitRefl = 0x200;  // bit 9
constexpr std::uint32_t kBitValid = 0x400;  // bit 10

void read_f32_plane(std::ifstream& in, std::size_t count,
                    const std::function<void(std::size_t, double)>& sink) {
  std::vector<float> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(count * 4));
  if (!in) throw error("sst1: truncated plane data");
  for (std::size_t i = 0; i < count; ++i) sink(i, buf[i]);
}

void write_f32_plane(std::ofstream& out, std::size_t count,
                     const std::function<double(std::size_t)>& source) {
  std::vector<float> buf(count);
  for (std::size_t i = 0; i < count; ++i)
    buf[i] = static_cast<float>(source(i));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(count * 4));
}

}  // namespace

ScanStrip load_strip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open " + path);

  char magic[4];
  std::uint32_t rows = 0, cols = 0, mask = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  in.read(reinterpret_cast<char*>(&mask), 4);
  if (!in || std::memcmp(magic, "SST1", 4) != 0)
    throw error("sst1: bad magic in " + path);
  if (rows != ScanStrip::kRows)
    throw error("sst1: rows = " + std::to_string(rows) + ", expected " +
                std::to_string(ScanStrip::kRows));
  if (cols < 1) throw error("sst1: cols must be >= 1");
  if ((mask & kBitP) != kBitP) throw error("sst1: point planes missing");
  if ((mask & kBitH) != 0 && (mask & kBitH) != kBitH)
    throw error("sst1: partial head planes");
  if ((mask & kBitN) != 0 && (mask & kBitN) != kBitN)
    throw error("sst1: partial normal planes");

  ScanStrip strip(static_cast<int>(cols));
  const std::size_t n_px = strip.pixel_count();

  for (int a = 0; a < 3; ++a)
    read_f32_plane(in, n_px, [&](std::size_t i, double v) { strip.p[i][a] = v; });
  if (mask & kBitH)
    for (int a = 0; a < 3; ++a)
      read_f32_plane(in, n_px,
                     [&](std::size_t i, double v) { strip.h[i][a] = v; });
  if (mask & kBitN) {
    strip.n.assign(n_px, {});
    for (int a = 0; a < 3; ++a)
      read_f32_plane(in, n_px,
                     [&](std::size_t i, double v) { strip.n[i][a] = v; });
  }
  if (mask & kBitRefl) {
    strip.refl.assign(n_px, 0.0);
    read_f32_plane(in, n_px,
                   [&](std::size_t i, double v) { strip.refl[i] = v; });
  }
  if (mask & kBitValid) {
    in.read(reinterpret_cast<char*>(strip.valid.data()),
            static_cast<std::streamsize>(n_px));
    if (!in) throw error("sst1: truncated valid plane");
  } else {
    std::fill(strip.valid.begin(), strip.valid.end(), 1);
  }
  return strip;
}

void save_strip(const std::string& path, const ScanStrip& strip) {
  if (strip.cols() < 1) throw error("sst1: empty strip");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write " + path);

  std::uint32_t mask = kBitP | kBitH | kBitValid;
  if (strip.has_normals()) mask |= kBitN;
  if (strip.has_reflectance()) mask |= kBitRefl;

  const std::uint32_t rows = ScanStrip::kRows;
  const std::uint32_t cols = static_cast<std::uint32_t>(strip.cols());
  out.write("SST1", 4);
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  out.write(reinterpret_cast<const char*>(&mask), 4);

  const std::size_t n_px = strip.pixel_count();
  for (int a = 0; a < 3; ++a)
    write_f32_plane(out, n_px, [&](std::size_t i) { return strip.p[i][a]; });
  for (int a = 0; a < 3; ++a)
    write_f32_plane(out, n_px, [&](std::size_t i) { return strip.h[i][a]; });
  if (strip.has_normals())
    for (int a = 0; a < 3; ++a)
      write_f32_plane(out, n_px, [&](std::size_t i) { return strip.n[i][a]; });
  if (strip.has_reflectance())
    write_f32_plane(out, n_px, [&](std::size_t i) { return strip.refl[i]; });
  out.write(reinterpret_cast<const char*>(strip.valid.data()),
            static_cast<std::streamsize>(n_px));
  if (!out) throw error("sst1: write failed for " + path);
}

// --- operations --------------------------------------------------------

ScanStrip estimate_normals(const ScanStrip& strip) {
  ScanStrip out = strip;
  out.n.assign(strip.pixel_count(), {});

  const int rows = strip.rows(), cols = strip.cols();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!strip.is_valid(r, c)) continue;
      const Point3& p0 = strip.p[strip.idx(r, c)];

      // Tangent along the row direction: central difference when both
      // vertical neighbors are valid, one-sided otherwise.
      auto tangent = [&](int dr, int dc) -> std::optional<Vec3> {
        const int ra = r - dr, ca = c - dc, rb = r + dr, cb = c + dc;
        const bool va = ra >= 0 && ca >= 0 && ra < rows && ca < cols &&
                        strip.is_valid(ra, ca);
        const bool vb = rb >= 0 && cb >= 0 && rb < rows && cb < cols &&
                        strip.is_valid(rb, cb);
        if (va && vb)
          return strip.p[strip.idx(rb, cb)] - strip.p[strip.idx(ra, ca)];
        if (vb) return strip.p[strip.idx(rb, cb)] - p0;
        if (va) return p0 - strip.p[strip.idx(ra, ca)];
        return std::nullopt;
      };

      const auto d_row = tangent(1, 0);
      const auto d_col = tangent(0, 1);
      if (!d_row || !d_col) continue;

      Vec3 n = d_row->cross(*d_col);
      const double len = n.norm();
      if (len < 1e-12) continue;
      n = n / len;
      const Vec3 to_head = strip.h[strip.idx(r, c)] - p0;
      if (n.dot(to_head) < 0.0) n = -n;
      out.n[out.idx(r, c)] = n;
    }
  }
  return out;
}

ScanStrip filter_by_range(const ScanStrip& strip, const FilterConfig& cfg) {
  cfg.validate();
  ScanStrip out = strip;
  for (std::size_t i = 0; i < out.valid.size(); ++i) {
    if (!out.valid[i]) continue;
    if (dist_xy(out.p[i], out.h[i]) > cfg.max_range) out.valid[i] = 0;
  }
  return out;
}

ScanStrip filter_by_height(const ScanStrip& strip, const FilterConfig& cfg) {
  cfg.validate();
  ScanStrip out = strip;
  for (std::size_t i = 0; i < out.valid.size(); ++i) {
    if (!out.valid[i]) continue;
    const double H = height_above_ground(out.p[i], out.h[i], cfg.sensor_height);
    if (!(H > cfg.h_min && H < cfg.h_max)) out.valid[i] = 0;
  }
  return out;
}

PointCloud strip_to_cloud(const ScanStrip& strip, bool with_strip_index) {
  PointCloud cloud;
  cloud.frame = Frame::world;
  std::vector<double> row_col[2];

  bool all_have_normals = strip.has_normals();
  std::vector<Vec3> normals;

  for (int r = 0; r < strip.rows(); ++r) {
    for (int c = 0; c < strip.cols(); ++c) {
      if (!strip.is_valid(r, c)) continue;
      const std::size_t i = strip.idx(r, c);
      cloud.points.push_back(strip.p[i]);
      cloud.heads.push_back(strip.h[i]);
      if (strip.has_reflectance()) cloud.reflectance.push_back(strip.refl[i]);
      if (all_have_normals) {
        const auto n = strip.normal_at(r, c);
        if (n)
          normals.push_back(*n);
        else
          all_have_normals = false;
      }
      if (with_strip_index) {
        row_col[0].push_back(r);
        row_col[1].push_back(c);
      }
    }
  }
  if (all_have_normals) cloud.normals = std::move(normals);
  if (with_strip_index) {
    cloud.extras.emplace_back("strip_row", std::move(row_col[0]));
    cloud.extras.emplace_back("strip_col", std::move(row_col[1]));
  }
  return cloud;
}

}  // namespace occl
