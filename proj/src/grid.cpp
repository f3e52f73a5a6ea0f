#include "occlusynth/grid.hpp"

#include <cmath>

namespace occl {

double DenseGrid::mass() const {
  double m = 0.0;
  for (const double v : values) m += v;
  return m;
}

CellLocator locate_cell(const Point3& p, int res) {
  constexpr double kSlack = 1e-9;
  CellLocator loc;
  const double h = 2.0 / (res - 1);
  for (int a = 0; a < 3; ++a) {
    double x = p[a];
    if (x < -1.0 - kSlack || x > 1.0 + kSlack)
      throw error("grid: point coordinate " + std::to_string(x) +
                  " outside [-1,1]");
    x = std::clamp(x, -1.0, 1.0);
    const double t = (x + 1.0) / h;
    auto i = static_cast<int>(std::floor(t));
    // A point exactly on an interior face belongs to the lower cell.
    if (static_cast<double>(i) == t && i > 0) --i;
    i = std::clamp(i, 0, res - 2);
    loc.idx[a] = i;
    loc.frac[a] = t - i;
  }
  return loc;
}

DenseGrid gridding(const PointCloud& cloud, int res, GriddingNorm norm) {
  DenseGrid grid(res);
  std::vector<std::uint32_t> counts;
  if (norm == GriddingNorm::mean) counts.assign(grid.values.size(), 0);

  for (const auto& p : cloud.points) {
    const CellLocator loc = locate_cell(p, res);
    for (int dx = 0; dx < 2; ++dx) {
      const double wx = dx ? loc.frac[0] : 1.0 - loc.frac[0];
      for (int dy = 0; dy < 2; ++dy) {
        const double wy = dy ? loc.frac[1] : 1.0 - loc.frac[1];
        for (int dz = 0; dz < 2; ++dz) {
          const double wz = dz ? loc.frac[2] : 1.0 - loc.frac[2];
          const std::size_t vi =
              grid.index(loc.idx[0] + dx, loc.idx[1] + dy, loc.idx[2] + dz);
          grid.values[vi] += wx * wy * wz;
          if (norm == GriddingNorm::mean) ++counts[vi];
        }
      }
    }
  }
  if (norm == GriddingNorm::mean)
    for (std::size_t i = 0; i < grid.values.size(); ++i)
      if (counts[i] > 0) grid.values[i] /= counts[i];
  return grid;
}

std::vector<Vec3> gridding_grad(const PointCloud& cloud,
                                const std::vector<double>& upstream, int res,
                                GriddingNorm norm) {
  const std::size_t nverts =
      static_cast<std::size_t>(res) * res * res;
  if (upstream.size() != nverts)
    throw error("gridding_grad: upstream size mismatch");

  std::vector<std::uint32_t> counts;
  if (norm == GriddingNorm::mean) {
    counts.assign(nverts, 0);
    DenseGrid probe(res);
    for (const auto& p : cloud.points) {
      const CellLocator loc = locate_cell(p, res);
      for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dz = 0; dz < 2; ++dz)
            ++counts[probe.index(loc.idx[0] + dx, loc.idx[1] + dy,
                                 loc.idx[2] + dz)];
    }
  }

  const double h = 2.0 / (res - 1);
  const double inv_h = 1.0 / h;
  DenseGrid indexer(res);
  std::vector<Vec3> grads(cloud.size());

  for (std::size_t pi = 0; pi < cloud.size(); ++pi) {
    const CellLocator loc = locate_cell(cloud.points[pi], res);
    Vec3 g;
    for (int dx = 0; dx < 2; ++dx) {
      const double wx = dx ? loc.frac[0] : 1.0 - loc.frac[0];
      const double dwx = dx ? inv_h : -inv_h;
      for (int dy = 0; dy < 2; ++dy) {
        const double wy = dy ? loc.frac[1] : 1.0 - loc.frac[1];
        const double dwy = dy ? inv_h : -inv_h;
        for (int dz = 0; dz < 2; ++dz) {
          const double wz = dz ? loc.frac[2] : 1.0 - loc.frac[2];
          const double dwz = dz ? inv_h : -inv_h;
          const std::size_t vi = indexer.index(
              loc.idx[0] + dx, loc.idx[1] + dy, loc.idx[2] + dz);
          double up = upstream[vi];
          if (norm == GriddingNorm::mean && counts[vi] > 0)
            up /= counts[vi];
          g.x += up * dwx * wy * wz;
          g.y += up * wx * dwy * wz;
          g.z += up * wx * wy * dwz;
        }
      }
    }
    grads[pi] = g;
  }
  return grads;
}

// A cell emits a point only when every one of its 8 vertices carries a
// non-zero value. This is what makes gridding_reverse(gridding({p}))
// return exactly {p}: the enclosing cell has all 8 weights non-zero while
// neighbouring cells see zeros on their far faces.
PointCloud gridding_reverse(const DenseGrid& grid) {
  PointCloud out;
  out.frame = Frame::normalized;
  const int res = grid.res;
  for (int ix = 0; ix + 1 < res; ++ix) {
    for (int iy = 0; iy + 1 < res; ++iy) {
      for (int iz = 0; iz + 1 < res; ++iz) {
        double sum = 0.0;
        Vec3 acc;
        bool all_nonzero = true;
        for (int dx = 0; dx < 2; ++dx)
          for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
              const double v =
                  grid.values[grid.index(ix + dx, iy + dy, iz + dz)];
              if (v == 0.0) all_nonzero = false;
              sum += v;
              acc += v * Vec3{grid.vertex_coord(ix + dx),
                              grid.vertex_coord(iy + dy),
                              grid.vertex_coord(iz + dz)};
            }
        if (all_nonzero && sum != 0.0) out.points.push_back(acc / sum);
      }
    }
  }
  return out;
}

std::vector<double> gridding_reverse_grad(const DenseGrid& grid,
                                          const std::vector<Vec3>& upstream) {
  std::vector<double> grads(grid.values.size(), 0.0);
  const int res = grid.res;
  std::size_t emit = 0;
  for (int ix = 0; ix + 1 < res; ++ix) {
    for (int iy = 0; iy + 1 < res; ++iy) {
      for (int iz = 0; iz + 1 < res; ++iz) {
        double sum = 0.0;
        Vec3 acc;
        bool all_nonzero = true;
        for (int dx = 0; dx < 2; ++dx)
          for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
              const double v =
                  grid.values[grid.index(ix + dx, iy + dy, iz + dz)];
              if (v == 0.0) all_nonzero = false;
              sum += v;
              acc += v * Vec3{grid.vertex_coord(ix + dx),
                              grid.vertex_coord(iy + dy),
                              grid.vertex_coord(iz + dz)};
            }
        if (!all_nonzero || sum == 0.0) continue;
        if (emit >= upstream.size())
          throw error("gridding_reverse_grad: upstream too short");
        const Vec3 p = acc / sum;
        const Vec3& up = upstream[emit++];
        for (int dx = 0; dx < 2; ++dx)
          for (int dy = 0; dy < 2; ++dy)
            for (int dz = 0; dz < 2; ++dz) {
              const Vec3 vert{grid.vertex_coord(ix + dx),
                              grid.vertex_coord(iy + dy),
                              grid.vertex_coord(iz + dz)};
              // d p / d W_v = (vert - p) / sum
              grads[grid.index(ix + dx, iy + dy, iz + dz)] +=
                  up.dot((vert - p) / sum);
            }
      }
    }
  }
  if (emit != upstream.size())
    throw error("gridding_reverse_grad: upstream length mismatch");
  return grads;
}

std::vector<double> cubic_feature_sampling(
    const std::vector<Point3>& points,
    const std::vector<const FeatureMap*>& maps) {
  std::size_t width = 0;
  for (const auto* m : maps) width += 8 * static_cast<std::size_t>(m->channels);

  std::vector<double> out(points.size() * width);
  std::size_t row = 0;
  for (const auto& p : points) {
    std::size_t col = row * width;
    for (const auto* m : maps) {
      const CellLocator loc = locate_cell(p, m->res);
      for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dz = 0; dz < 2; ++dz)
            for (int c = 0; c < m->channels; ++c)
              out[col++] = m->values[m->index(c, loc.idx[0] + dx,
                                              loc.idx[1] + dy, loc.idx[2] + dz)];
    }
    ++row;
  }
  return out;
}

std::vector<std::vector<double>> cubic_feature_sampling_grad(
    const std::vector<Point3>& points,
    const std::vector<const FeatureMap*>& maps,
    const std::vector<double>& upstream) {
  std::size_t width = 0;
  for (const auto* m : maps) width += 8 * static_cast<std::size_t>(m->channels);
  if (upstream.size() != points.size() * width)
    throw error("cubic_feature_sampling_grad: upstream size mismatch");

  std::vector<std::vector<double>> grads;
  grads.reserve(maps.size());
  for (const auto* m : maps) grads.emplace_back(m->values.size(), 0.0);

  std::size_t col = 0;
  for (const auto& p : points) {
    for (std::size_t mi = 0; mi < maps.size(); ++mi) {
      const FeatureMap* m = maps[mi];
      const CellLocator loc = locate_cell(p, m->res);
      for (int dx = 0; dx < 2; ++dx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dz = 0; dz < 2; ++dz)
            for (int c = 0; c < m->channels; ++c)
              grads[mi][m->index(c, loc.idx[0] + dx, loc.idx[1] + dy,
                                 loc.idx[2] + dz)] += upstream[col++];
    }
  }
  return grads;
}

}  // namespace occl
