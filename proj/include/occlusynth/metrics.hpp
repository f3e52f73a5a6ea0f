// Evaluation and loss quantities: Chamfer distance, F-Score / precision /
// recall at a distance threshold, gridding loss, the two-stage training
// loss, and point-to-local-plane distance statistics against a dense
// reference cloud.

#pragma once

#include <vector>

#include "occlusynth/geom.hpp"
#include "occlusynth/grid.hpp"

namespace occl {

/// Symmetric mean of squared nearest-neighbor distances (both directions).
/// Cloud sizes may differ. Dimensionless in the normalized frame.
double chamfer(const PointCloud& p, const PointCloud& q);

struct FScoreResult {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

/// Precision: fraction of output points with NN distance to gt strictly
/// below d; recall symmetric; fscore = 2PR/(P+R), defined as 0 when
/// P + R = 0. The default threshold 0.01 corresponds to 4 cm before
/// normalization.
FScoreResult fscore(const PointCloud& p_out, const PointCloud& p_gt,
                    double d = 0.01);

/// Mean absolute difference between the 80^3 vertex lattices of the two
/// clouds (both must be normalized to [-1,1]^3).
double gridding_loss(const PointCloud& p_pred, const PointCloud& p_gt,
                     int res = kGridResolution,
                     GriddingNorm norm = GriddingNorm::sum);

struct LossConfig {
  double alpha = 0.01;
  int stage = 1;  // 1: CD on the coarse cloud, 2: gridding loss instead

  void validate() const {
    if (!(alpha > 0)) throw error("loss config: alpha must be > 0");
    if (stage != 1 && stage != 2) throw error("loss config: stage must be 1 or 2");
  }
};

/// Stage 1: cd(coarse, gt) + alpha * cd(output, gt).
/// Stage 2: gridding_loss(coarse, gt) + alpha * cd(output, gt).
double staged_loss(const PointCloud& p_coarse, const PointCloud& p_output,
                   const PointCloud& p_gt, const LossConfig& cfg);

struct PlaneStats {
  std::vector<double> distances;  // meters, per filled point
  double frac_within_5cm = 0.0;
  double frac_within_10cm = 0.0;
  std::vector<std::size_t> histogram;  // 1 cm bins over [0, 0.25] + overflow
  std::size_t degenerate_count = 0;    // collinear neighborhoods (line fit)
};

/// For each filled point, fits a total-least-squares plane through its k
/// nearest reference points and reports the unsigned distance. Collinear
/// neighborhoods fall back to a line fit and are flagged.
PlaneStats plane_stats(const PointCloud& filled, const PointCloud& dense_gt,
                       std::size_t k = 15);

struct MetricsReport {
  double cd = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  double gridding_loss = 0.0;  // NaN when clouds are not normalized
  bool has_gridding_loss = false;
  double threshold = 0.01;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;
};

/// Runs chamfer + fscore (and gridding loss when both clouds sit inside
/// the normalized cube).
MetricsReport evaluate(const PointCloud& pred, const PointCloud& gt,
                       double threshold = 0.01,
                       GriddingNorm norm = GriddingNorm::sum);

}  // namespace occl
