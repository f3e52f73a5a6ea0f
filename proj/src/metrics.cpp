#include "occlusynth/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "occlusynth/kdtree.hpp"
#include "occlusynth/parallel.hpp"

namespace occl {

namespace {

// Mean squared NN distance from each point of `from` into `index`.
// The squared distance is recomputed from the matched point with the same
// expression a brute-force scan would use, so the two agree exactly.
// Per-point results land in slots; the reduction runs in index order, so
// the value is independent of thread count.
double mean_sq_nn(const PointCloud& from, const KdIndex& index) {
  std::vector<double> d2(from.size());
  parallel_for(0, from.size(), [&](std::size_t i) {
    const Neighbor n = index.nearest(from.points[i]);
    d2[i] = dist2(from.points[i], index.point(n.id));
  });
  double sum = 0.0;
  for (const double v : d2) sum += v;
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const PointCloud& p, const PointCloud& q) {
  if (p.empty() || q.empty()) throw error("chamfer: empty cloud");
  const KdIndex kp(p), kq(q);
  return mean_sq_nn(p, kq) + mean_sq_nn(q, kp);
}

FScoreResult fscore(const PointCloud& p_out, const PointCloud& p_gt,
                    double d) {
  if (p_out.empty() || p_gt.empty()) throw error("fscore: empty cloud");
  if (!(d > 0)) throw error("fscore: threshold must be > 0");
  const KdIndex k_out(p_out), k_gt(p_gt);

  auto fraction_within = [&](const PointCloud& from, const KdIndex& to) {
    std::vector<std::uint8_t> within(from.size());
    parallel_for(0, from.size(), [&](std::size_t i) {
      within[i] = to.nearest(from.points[i]).distance < d ? 1 : 0;
    });
    std::size_t count = 0;
    for (const auto w : within) count += w;
    return static_cast<double>(count) / static_cast<double>(from.size());
  };

  FScoreResult r;
  r.precision = fraction_within(p_out, k_gt);
  r.recall = fraction_within(p_gt, k_out);
  r.fscore = r.precision + r.recall > 0.0
                 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                 : 0.0;
  return r;
}

double gridding_loss(const PointCloud& p_pred, const PointCloud& p_gt, int res,
                     GriddingNorm norm) {
  if (p_pred.empty() || p_gt.empty()) throw error("gridding_loss: empty cloud");
  const DenseGrid a = gridding(p_pred, res, norm);
  const DenseGrid b = gridding(p_gt, res, norm);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    sum += std::abs(a.values[i] - b.values[i]);
  return sum / static_cast<double>(a.values.size());
}

double staged_loss(const PointCloud& p_coarse, const PointCloud& p_output,
                   const PointCloud& p_gt, const LossConfig& cfg) {
  cfg.validate();
  const double fine = cfg.alpha * chamfer(p_output, p_gt);
  if (cfg.stage == 1) return chamfer(p_coarse, p_gt) + fine;
  return gridding_loss(p_coarse, p_gt) + fine;
}

PlaneStats plane_stats(const PointCloud& filled, const PointCloud& dense_gt,
                       std::size_t k) {
  if (filled.empty()) throw error("plane_stats: empty filled cloud");
  if (dense_gt.size() < k)
    throw error("plane_stats: reference cloud smaller than k");
  const KdIndex index(dense_gt);

  PlaneStats stats;
  stats.distances.resize(filled.size());
  std::vector<std::uint8_t> degenerate(filled.size(), 0);

  parallel_for(0, filled.size(), [&](std::size_t i) {
    const Point3& p = filled.points[i];
    const auto nbrs = index.nearest_k(p, k);

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& n : nbrs) {
      const Point3& q = dense_gt.points[n.id];
      centroid += Eigen::Vector3d(q.x, q.y, q.z);
    }
    centroid /= static_cast<double>(nbrs.size());

    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (const auto& n : nbrs) {
      const Point3& q = dense_gt.points[n.id];
      const Eigen::Vector3d d = Eigen::Vector3d(q.x, q.y, q.z) - centroid;
      scatter += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
    const Eigen::Vector3d rel = Eigen::Vector3d(p.x, p.y, p.z) - centroid;

    // Collinear neighborhood: the two smallest eigenvalues vanish and the
    // plane normal is undefined; fall back to distance-to-line.
    if (evals(1) <= 1e-9 * std::max(evals(2), 1e-30)) {
      degenerate[i] = 1;
      const Eigen::Vector3d dir = eig.eigenvectors().col(2);
      stats.distances[i] = (rel - dir * dir.dot(rel)).norm();
    } else {
      const Eigen::Vector3d normal = eig.eigenvectors().col(0);
      stats.distances[i] = std::abs(normal.dot(rel));
    }
  });

  stats.histogram.assign(26, 0);
  std::size_t in5 = 0, in10 = 0;
  for (std::size_t i = 0; i < stats.distances.size(); ++i) {
    const double d = stats.distances[i];
    if (d <= 0.05) ++in5;
    if (d <= 0.10) ++in10;
    const auto bin = std::min<std::size_t>(
        static_cast<std::size_t>(d / 0.01), stats.histogram.size() - 1);
    ++stats.histogram[bin];
    stats.degenerate_count += degenerate[i];
  }
  const auto n = static_cast<double>(filled.size());
  stats.frac_within_5cm = static_cast<double>(in5) / n;
  stats.frac_within_10cm = static_cast<double>(in10) / n;
  return stats;
}

MetricsReport evaluate(const PointCloud& pred, const PointCloud& gt,
                       double threshold, GriddingNorm norm) {
  MetricsReport report;
  report.threshold = threshold;
  report.n_pred = pred.size();
  report.n_gt = gt.size();
  report.cd = chamfer(pred, gt);
  const FScoreResult f = fscore(pred, gt, threshold);
  report.precision = f.precision;
  report.recall = f.recall;
  report.fscore = f.fscore;

  const auto inside = [](const PointCloud& c) {
    for (const auto& p : c.points)
      if (std::abs(p.x) > 1 + 1e-9 || std::abs(p.y) > 1 + 1e-9 ||
          std::abs(p.z) > 1 + 1e-9)
        return false;
    return true;
  };
  if (inside(pred) && inside(gt)) {
    report.gridding_loss = gridding_loss(pred, gt, kGridResolution, norm);
    report.has_gridding_loss = true;
  }
  return report;
}

}  // namespace occl
