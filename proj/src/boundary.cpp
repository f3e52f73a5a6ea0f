#include "occlusynth/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

namespace occl {

namespace {
constexpr double kDegToRad = M_PI / 180.0;

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw error("percentile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

// Principal direction of 2D points (unit eigenvector of the larger
// eigenvalue of the scatter matrix, closed form).
Vec2 principal_dir_2d(const std::vector<Point3>& pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pts) {
    const double dx = p.x - cx, dy = p.y - cy;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double l1 = tr / 2.0 + disc;
  Vec2 dir;
  if (std::abs(sxy) > 1e-30)
    dir = Vec2{l1 - syy, sxy}.normalized();
  else
    dir = sxx >= syy ? Vec2{1, 0} : Vec2{0, 1};
  // Canonical orientation keeps results independent of member order.
  if (dir.x < 0 || (dir.x == 0 && dir.y < 0)) dir = -dir;
  return dir;
}

}  // namespace

void CurbRuleConfig::validate() const {
  for (const double v :
       {raster_cell, max_median_height, min_elongation, ground_band,
        min_boundary_length, min_endpoint_clearance, grow_angle_tol_deg,
        resample_step, chain_max_gap, chain_max_angle_deg, candidate_spacing})
    if (!(v > 0.0)) throw error("curb config: all values must be positive");
  if (grow_min_points < 1) throw error("curb config: grow_min_points >= 1");
}

std::vector<Segment> grow_vertical_segments(const ScanStrip& strip,
                                            double angle_tol_deg,
                                            int min_points) {
  if (!strip.has_normals())
    throw error("grow_vertical_segments: strip has no normals");
  const double max_nz = std::sin(angle_tol_deg * kDegToRad);

  const int rows = strip.rows(), cols = strip.cols();
  auto qualifies = [&](int r, int c) {
    if (!strip.is_valid(r, c)) return false;
    const auto n = strip.normal_at(r, c);
    return n && std::abs(n->z) < max_nz;
  };

  std::vector<std::uint8_t> seen(strip.pixel_count(), 0);
  std::vector<Segment> out;

  for (int r0 = 0; r0 < rows; ++r0) {
    for (int c0 = 0; c0 < cols; ++c0) {
      const std::size_t i0 = strip.idx(r0, c0);
      if (seen[i0] || !qualifies(r0, c0)) continue;

      Segment seg;
      Vec3 nsum;
      std::deque<std::pair<int, int>> queue{{r0, c0}};
      seen[i0] = 1;
      while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        const std::size_t i = strip.idx(r, c);
        seg.member_ids.push_back(i);
        seg.points.push_back(strip.p[i]);
        seg.footprint.expand(strip.p[i]);
        nsum += *strip.normal_at(r, c);

        const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& [nr, nc] : nbr) {
          if (nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
          const std::size_t ni = strip.idx(nr, nc);
          if (seen[ni] || !qualifies(nr, nc)) continue;
          seen[ni] = 1;
          queue.emplace_back(nr, nc);
        }
      }
      if (static_cast<int>(seg.member_ids.size()) < min_points) continue;
      seg.mean_normal = nsum.normalized();
      out.push_back(std::move(seg));
    }
  }
  return out;
}

double local_ground_height(const PointCloud& cloud, const Segment& segment) {
  const Aabb& fp = segment.footprint;
  std::vector<double> zs;
  for (const auto& p : cloud.points) {
    if (p.x >= fp.min.x - 1.0 && p.x <= fp.max.x + 1.0 &&
        p.y >= fp.min.y - 1.0 && p.y <= fp.max.y + 1.0)
      zs.push_back(p.z);
  }
  if (zs.empty()) throw error("local ground: no cloud points near segment");
  return percentile(std::move(zs), 0.05);
}

bool classify_curb(const Segment& segment, double ground_z,
                   const CurbRuleConfig& cfg) {
  cfg.validate();
  if (segment.points.empty()) throw error("classify_curb: empty segment");

  // (a) median over occupied raster cells of the within-cell height extent
  std::map<std::pair<long, long>, std::pair<double, double>> cells;
  for (const auto& p : segment.points) {
    const auto key = std::make_pair(
        static_cast<long>(std::floor(p.x / cfg.raster_cell)),
        static_cast<long>(std::floor(p.y / cfg.raster_cell)));
    auto [it, inserted] = cells.emplace(key, std::make_pair(p.z, p.z));
    if (!inserted) {
      it->second.first = std::min(it->second.first, p.z);
      it->second.second = std::max(it->second.second, p.z);
    }
  }
  std::vector<double> extents;
  extents.reserve(cells.size());
  for (const auto& [key, mm] : cells) extents.push_back(mm.second - mm.first);
  if (median(std::move(extents)) >= cfg.max_median_height) return false;

  // (b) elongation: principal horizontal extent vs height extent
  const Vec2 dir = principal_dir_2d(segment.points);
  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
  double zmin = tmin, zmax = -tmin;
  for (const auto& p : segment.points) {
    const double t = dir.dot(xy(p));
    tmin = std::min(tmin, t);
    tmax = std::max(tmax, t);
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  const double length = tmax - tmin;
  const double height = zmax - zmin;
  if (height > 0.0 && length / height < cfg.min_elongation) return false;

  // (c) the whole height range near the ground surface
  if (zmin < ground_z - cfg.ground_band || zmax > ground_z + cfg.ground_band)
    return false;
  return true;
}

// --- polyline construction ----------------------------------------------

double BoundaryPolyline::arc_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < vertices.size(); ++i)
    len += (xy(vertices[i]) - xy(vertices[i - 1])).norm();
  return len;
}

Point3 BoundaryPolyline::point_at(double s) const {
  if (vertices.size() < 2) throw error("polyline: need >= 2 vertices");
  double acc = 0.0;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const double seg = (xy(vertices[i]) - xy(vertices[i - 1])).norm();
    if (s <= acc + seg || i + 1 == vertices.size()) {
      const double t = seg > 0 ? std::clamp((s - acc) / seg, 0.0, 1.0) : 0.0;
      return vertices[i - 1] + (vertices[i] - vertices[i - 1]) * t;
    }
    acc += seg;
  }
  return vertices.back();
}

Vec2 BoundaryPolyline::tangent_at(double s) const {
  if (vertices.size() < 2) throw error("polyline: need >= 2 vertices");
  double acc = 0.0;
  for (std::size_t i = 1; i < vertices.size(); ++i) {
    const double seg = (xy(vertices[i]) - xy(vertices[i - 1])).norm();
    if (s <= acc + seg || i + 1 == vertices.size())
      return (xy(vertices[i]) - xy(vertices[i - 1])).normalized();
    acc += seg;
  }
  return tangents.empty() ? Vec2{1, 0} : tangents.back();
}

namespace {

void recompute_tangents(BoundaryPolyline& pl) {
  const std::size_t n = pl.vertices.size();
  pl.tangents.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 < n ? i + 1 : n - 1;
    pl.tangents[i] = (xy(pl.vertices[b]) - xy(pl.vertices[a])).normalized();
  }
}

// One polyline per segment: bin members along the principal direction and
// take per-bin centroids (z = per-bin max, the curb top). Gaps longer than
// 1 m split the result so the vertex-spacing invariant holds.
std::vector<BoundaryPolyline> polylines_from_segment(const Segment& seg,
                                                     double step) {
  const Vec2 dir = principal_dir_2d(seg.points);
  double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
  std::size_t arg_min = 0, arg_max = 0;
  for (std::size_t i = 0; i < seg.points.size(); ++i) {
    const double t = dir.dot(xy(seg.points[i]));
    if (t < tmin) {
      tmin = t;
      arg_min = i;
    }
    if (t > tmax) {
      tmax = t;
      arg_max = i;
    }
  }
  const auto nbins =
      static_cast<std::size_t>(std::floor((tmax - tmin) / step)) + 1;
  struct Bin {
    double sx = 0, sy = 0, zmax = -std::numeric_limits<double>::infinity();
    std::size_t n = 0;
  };
  std::vector<Bin> bins(nbins);
  for (const auto& p : seg.points) {
    auto b = static_cast<std::size_t>((dir.dot(xy(p)) - tmin) / step);
    b = std::min(b, nbins - 1);
    bins[b].sx += p.x;
    bins[b].sy += p.y;
    bins[b].zmax = std::max(bins[b].zmax, p.z);
    ++bins[b].n;
  }

  std::vector<BoundaryPolyline> out;
  BoundaryPolyline cur;
  auto flush = [&] {
    if (cur.vertices.size() >= 2) {
      recompute_tangents(cur);
      double zsum = 0;
      for (const auto& v : cur.vertices) zsum += v.z;
      cur.mean_curb_top_z = zsum / static_cast<double>(cur.vertices.size());
      out.push_back(cur);
    }
    cur = BoundaryPolyline{};
  };
  // Vertex list: the true extreme member points bracket the bin
  // centroids, so chained segments meet at their actual ends.
  std::vector<Point3> verts;
  verts.push_back({seg.points[arg_min].x, seg.points[arg_min].y,
                   bins.front().n ? bins.front().zmax : seg.points[arg_min].z});
  for (const auto& b : bins) {
    if (b.n == 0) continue;
    verts.push_back({b.sx / static_cast<double>(b.n),
                     b.sy / static_cast<double>(b.n), b.zmax});
  }
  verts.push_back({seg.points[arg_max].x, seg.points[arg_max].y,
                   bins.back().n ? bins.back().zmax : seg.points[arg_max].z});

  for (const auto& v : verts) {
    if (!cur.vertices.empty()) {
      const double gap = (xy(v) - xy(cur.vertices.back())).norm();
      if (gap < 1e-9) continue;  // extreme coincides with a centroid
      if (gap > 1.0) flush();
    }
    cur.vertices.push_back(v);
  }
  flush();
  return out;
}

double angle_between(const Vec2& a, const Vec2& b) {
  const double c = std::clamp(a.dot(b), -1.0, 1.0);
  return std::acos(c);
}

// Undirected angle: polylines may chain head-to-tail in either sense.
double line_angle(const Vec2& a, const Vec2& b) {
  const double ang = angle_between(a, b);
  return std::min(ang, M_PI - ang);
}

void reverse_polyline(BoundaryPolyline& pl) {
  std::reverse(pl.vertices.begin(), pl.vertices.end());
  recompute_tangents(pl);
}

// Chain B onto the tail of A if compatible (A.back near B.front after
// orienting B). Returns true when merged.
bool try_chain(BoundaryPolyline& a, BoundaryPolyline& b, double max_gap,
               double max_angle_rad) {
  for (int ra = 0; ra < 2; ++ra) {
    for (int rb = 0; rb < 2; ++rb) {
      const Point3& tail = ra ? a.vertices.front() : a.vertices.back();
      const Point3& head = rb ? b.vertices.back() : b.vertices.front();
      const Vec2 ta = ra ? -a.tangents.front() : a.tangents.back();
      const Vec2 tb = rb ? -b.tangents.back() : b.tangents.front();
      if ((xy(tail) - xy(head)).norm() > max_gap) continue;
      if (line_angle(ta, tb) > max_angle_rad) continue;
      if (ra) reverse_polyline(a);
      if (rb) reverse_polyline(b);
      a.vertices.insert(a.vertices.end(), b.vertices.begin(),
                        b.vertices.end());
      recompute_tangents(a);
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<BoundaryPolyline> build_boundary_map(
    const std::vector<Segment>& curb_segments, const CurbRuleConfig& cfg,
    const PointCloud* context_cloud) {
  cfg.validate();
  std::vector<BoundaryPolyline> lines;
  std::vector<Vec3> seg_normals;  // parallel to `lines`
  for (const auto& seg : curb_segments) {
    if (seg.points.size() < 2) continue;
    for (auto& pl : polylines_from_segment(seg, cfg.resample_step)) {
      lines.push_back(std::move(pl));
      seg_normals.push_back(seg.mean_normal);
    }
  }

  // Greedy chaining until fixpoint; iteration order fixed by index.
  const double max_angle = cfg.chain_max_angle_deg * kDegToRad;
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < lines.size() && !merged; ++i) {
      for (std::size_t j = i + 1; j < lines.size() && !merged; ++j) {
        if (try_chain(lines[i], lines[j], cfg.chain_max_gap, max_angle)) {
          seg_normals[i] = (seg_normals[i] + seg_normals[j]).normalized();
          lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(j));
          seg_normals.erase(seg_normals.begin() +
                            static_cast<std::ptrdiff_t>(j));
          merged = true;
        }
      }
    }
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto& pl = lines[i];
    double zsum = 0;
    for (const auto& v : pl.vertices) zsum += v.z;
    pl.mean_curb_top_z = zsum / static_cast<double>(pl.vertices.size());

    // Sidewalk side: higher ground across the line wins; fall back to the
    // scan normals (they face the sensor, which drives on the road).
    const double mid_s = pl.arc_length() / 2.0;
    const Point3 mid = pl.point_at(mid_s);
    const Vec2 nrm = pl.tangent_at(mid_s).perp();
    bool decided = false;
    if (context_cloud) {
      std::vector<double> zpos, zneg;
      for (const auto& p : context_cloud->points) {
        const Vec2 d = xy(p) - xy(mid);
        if (d.norm() > 2.0) continue;
        const double side = d.dot(nrm);
        if (side > 0.2)
          zpos.push_back(p.z);
        else if (side < -0.2)
          zneg.push_back(p.z);
      }
      if (zpos.size() >= 20 && zneg.size() >= 20) {
        const double step = percentile(std::move(zpos), 0.05) -
                            percentile(std::move(zneg), 0.05);
        if (std::abs(step) > 0.02) {
          pl.sidewalk_side = step > 0 ? nrm : -nrm;
          decided = true;
        }
      }
    }
    if (!decided) {
      const Vec2 road = xy(seg_normals[i]).normalized();
      const Vec2 away = -road;
      pl.sidewalk_side = away.dot(nrm) >= 0 ? nrm : -nrm;
    }
  }
  return lines;
}

std::vector<ParkingCandidate> select_parking_candidates(
    const std::vector<BoundaryPolyline>& polylines, const CurbRuleConfig& cfg,
    const SeededRng& rng) {
  cfg.validate();
  std::vector<ParkingCandidate> out;
  for (std::size_t i = 0; i < polylines.size(); ++i) {
    const auto& pl = polylines[i];
    const double len = pl.arc_length();
    if (!(len > cfg.min_boundary_length)) continue;
    const double lo = cfg.min_endpoint_clearance;
    const double hi = len - cfg.min_endpoint_clearance;
    if (!(hi > lo)) continue;

    SeededRng r = rng.derive(i);
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>((hi - lo) / cfg.candidate_spacing));
    for (std::size_t k = 0; k < count; ++k) {
      const double s = r.uniform(lo, hi);
      ParkingCandidate cand;
      cand.anchor = pl.point_at(s);
      cand.road_dir = pl.tangent_at(s);
      // Re-orthogonalize against the local tangent, keeping the side sign.
      const Vec2 n = cand.road_dir.perp();
      cand.sidewalk_side = pl.sidewalk_side.dot(n) >= 0 ? n : -n;
      cand.polyline_id = i;

      // Output invariants hold by construction; make violations loud.
      if (!(len > cfg.min_boundary_length) ||
          s < cfg.min_endpoint_clearance - 1e-9 ||
          s > len - cfg.min_endpoint_clearance + 1e-9 ||
          std::abs(cand.road_dir.dot(cand.sidewalk_side)) > 1e-9)
        throw error("parking candidate violates its gates");
      out.push_back(cand);
    }
  }
  return out;
}

}  // namespace occl
