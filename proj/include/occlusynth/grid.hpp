// Differentiable lattice kernels over the normalized [-1,1]^3 cube:
// gridding (trilinear scatter of points onto vertex values), gridding
// reverse (one point per non-empty cell), and cubic feature sampling
// (concatenation of the 8 enclosing vertex features). Analytic gradients
// are provided for each; they are checked against central finite
// differences in the test suite.

#pragma once

#include <vector>

#include "occlusynth/geom.hpp"

namespace occl {

/// Vertex-lattice resolution used by the network. 80 vertices per axis
/// span [-1,1] with 79 cells of spacing 2/79.
inline constexpr int kGridResolution = 80;

/// Scalar values on an res^3 vertex lattice. Layout is x-major, z-minor:
/// index = (ix * res + iy) * res + iz.
struct DenseGrid {
  int res = kGridResolution;
  std::vector<double> values;

  DenseGrid() = default;
  explicit DenseGrid(int res_) : res(res_) {
    if (res_ < 2) throw error("dense grid: resolution must be >= 2");
    values.assign(static_cast<std::size_t>(res_) * res_ * res_, 0.0);
  }

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * res + iy) * res + iz;
  }
  double spacing() const { return 2.0 / (res - 1); }
  double vertex_coord(int i) const { return -1.0 + i * spacing(); }
  double mass() const;
};

/// Feature volume: `channels` scalars per vertex of an res^3 lattice.
/// Layout is channel-major: value(c, ix, iy, iz) =
/// values[((c * res + ix) * res + iy) * res + iz].
struct FeatureMap {
  int res = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int res_, int channels_) : res(res_), channels(channels_) {
    values.assign(static_cast<std::size_t>(res_) * res_ * res_ * channels_,
                  0.0);
  }
  std::size_t index(int c, int ix, int iy, int iz) const {
    return ((static_cast<std::size_t>(c) * res + ix) * res + iy) * res + iz;
  }
};

/// Cell containing a point at a given vertex resolution, with fractional
/// offsets in [0,1]. A point exactly on a shared face belongs to the
/// lower-indexed cell. Throws when the point leaves the cube by more than
/// 1e-9.
struct CellLocator {
  int idx[3];
  double frac[3];
};
CellLocator locate_cell(const Point3& p, int res);

enum class GriddingNorm {
  sum,  // vertex value = plain sum of contributed weights (mass-conserving)
  mean  // vertex value = sum / number of contributing points
};

/// Scatters each point's trilinear weights onto the 8 vertices of its
/// enclosing cell. With GriddingNorm::sum the total grid mass equals the
/// point count and per-point weights form a partition of unity.
DenseGrid gridding(const PointCloud& cloud, int res = kGridResolution,
                   GriddingNorm norm = GriddingNorm::sum);

/// d(loss)/d(points) given upstream d(loss)/d(vertex values).
std::vector<Vec3> gridding_grad(const PointCloud& cloud,
                                const std::vector<double>& upstream,
                                int res = kGridResolution,
                                GriddingNorm norm = GriddingNorm::sum);

/// One point per cell with a non-zero vertex-value sum: the value-weighted
/// average of the 8 vertex coordinates. Cells whose vertices are all zero
/// (or cancel to an exactly zero sum) emit nothing. Output order follows
/// cell index order.
PointCloud gridding_reverse(const DenseGrid& grid);

/// d(loss)/d(vertex values) given upstream d(loss)/d(emitted points),
/// aligned with the emission order of gridding_reverse.
std::vector<double> gridding_reverse_grad(const DenseGrid& grid,
                                          const std::vector<Vec3>& upstream);

/// Per point and per map, concatenates the raw feature vectors of the 8
/// vertices enclosing the point (corner order z-minor, maps in the order
/// given). Returns an n x total_width row-major matrix where total_width =
/// 8 * sum of channel counts.
std::vector<double> cubic_feature_sampling(const std::vector<Point3>& points,
                                           const std::vector<const FeatureMap*>& maps);

/// d(loss)/d(map values) given upstream d(loss)/d(sampled features).
std::vector<std::vector<double>> cubic_feature_sampling_grad(
    const std::vector<Point3>& points,
    const std::vector<const FeatureMap*>& maps,
    const std::vector<double>& upstream);

}  // namespace occl
