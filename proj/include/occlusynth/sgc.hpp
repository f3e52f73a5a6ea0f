// Deterministic forward evaluation of the scene-completion network as a
// verified tensor graph: gridding encoder (3D convs + fully connected
// layers), transposed-convolution decoder with additive skip connections,
// gridding reverse, coarse sampling, cubic feature sampling, the MLPs
// module, and folding-based densification.
//
// Weights initialize reproducibly from a seed. The two 40,000 <-> 8,000
// fully connected layers hold 3.2e8 parameters each and are used exactly
// once per pass, so their weights are generated on the fly from per-row
// seeds instead of being materialized.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "occlusynth/geom.hpp"
#include "occlusynth/grid.hpp"
#include "occlusynth/rng.hpp"

namespace occl {

/// Expected architecture constants.
inline constexpr int kEncoderChannels[4] = {40, 80, 160, 320};
inline constexpr int kDecoderChannels[4] = {160, 80, 40, 1};
inline constexpr std::size_t kGlobalFeatureLen = 4000;
inline constexpr std::size_t kCoarseCount = 3072;
inline constexpr std::size_t kCubicFeatureWidth = 2240;  // 8 * (160+80+40)
inline constexpr std::size_t kMlpsFeatureLen = 280;

struct Dense {
  int in = 0, out = 0;
  std::vector<double> w;  // row-major [out][in]
  std::vector<double> b;

  void init_xavier(SeededRng rng);
  void zero();
  std::vector<double> forward(const std::vector<double>& x) const;
};

/// Fully connected layer whose weights are regenerated from per-row seeds
/// during the forward pass (for the 3.2e8-parameter layers). `scale`
/// multiplies the output; setting it to 0 disables the layer exactly.
struct StreamedDense {
  int in = 0, out = 0;
  std::uint64_t seed = 0;
  double scale = 1.0;

  std::vector<double> forward(const std::vector<double>& x) const;
};

struct ConvBlock {
  int in_ch = 0, out_ch = 0;
  std::vector<double> w;  // [out_ch][in_ch][4][4][4]
  std::vector<double> b;  // [out_ch]
  std::vector<double> bn_scale, bn_shift;  // per channel

  void init_xavier(SeededRng rng);
  void zero();
};

struct TConvBlock {
  int in_ch = 0, out_ch = 0;
  std::vector<double> w;  // [in_ch][out_ch][4][4][4]
  std::vector<double> b;  // [out_ch]
  std::vector<double> bn_scale, bn_shift;

  void init_xavier(SeededRng rng);
  void zero();
};

/// One folding layer: Dense(in -> hidden) + BN + ReLU + Dense(hidden -> 3).
struct FoldingLayer {
  Dense fc1;
  std::vector<double> bn_scale, bn_shift;
  Dense fc2;

  void init(int in, int hidden, SeededRng rng);
  void zero();
};

struct FoldingConfig {
  int r = 9;  // densification factor
  int u = 3;  // grid side, u * u == r
  double grid_extent = 0.05;  // half-width of the 2D grid, normalized units

  void validate() const {
    if (u * u != r) throw error("folding config: u^2 must equal r");
    if (!(grid_extent > 0)) throw error("folding config: extent must be > 0");
  }
};

struct SgcParams {
  std::array<ConvBlock, 4> conv;
  StreamedDense fc_enc1, fc_enc2;  // 40000 -> 8000 -> 4000
  StreamedDense fc_dec1, fc_dec2;  // 4000 -> 8000 -> 40000
  std::array<TConvBlock, 4> tconv;
  std::array<Dense, 3> mlps;  // 2240 -> 560 -> 560 -> 280
  FoldingLayer fold1;         // [285, 128, 3]
  FoldingLayer fold2;         // [286, 128, 3]
  FoldingConfig folding_cfg;
  GriddingNorm gridding_norm = GriddingNorm::sum;
  std::uint64_t seed = 0;

  /// Reproducible random initialization (Xavier-uniform per layer).
  static SgcParams random(std::uint64_t seed);

  /// Zeroes the coarse-decoder path (decoder FCs, transposed convs), the
  /// MLPs, and the folding layers. Skip connections stay in place.
  void zero_decoder();
  /// Zeroes only the two folding layers (densification offsets vanish).
  void zero_folding();

  /// Flat little-endian double blob + JSON shape manifest
  /// (<base>.bin / <base>.json). Streamed layers serialize as seed + shape.
  void save(const std::string& base_path) const;
  static SgcParams load(const std::string& base_path);
};

struct LayerShape {
  std::string name;
  int spatial = 0;   // vertices per axis (0 for vectors)
  int channels = 0;  // channel count, or vector length when spatial == 0
};

struct SgcIntermediates {
  std::vector<LayerShape> shapes;     // in graph order
  std::size_t global_feature_len = 0;
  std::size_t reverse_point_count = 0;
  std::size_t coarse_count = 0;
  std::size_t cubic_feature_width = 0;
  std::size_t mlps_feature_len = 0;
  std::size_t output_count = 0;
  bool coarse_deficit = false;  // sample_coarse had to draw with replacement
};

struct SgcForwardResult {
  PointCloud coarse;
  PointCloud output;
  SgcIntermediates intermediates;
};

/// Uniform selection of n points without replacement; tops up with
/// replacement (and flags the deficit) when fewer are available.
PointCloud sample_coarse(const PointCloud& points, std::size_t n,
                         SeededRng& rng, bool* deficit = nullptr);

/// Densifies a coarse cloud r-fold: tiles points and per-point features,
/// appends tiled 2D grid coordinates, runs the two folding layers, and
/// adds the offsets to the tiled coarse points.
PointCloud folding_densify(const PointCloud& coarse,
                           const std::vector<double>& feats,  // n x F
                           std::size_t feat_width, const FoldingLayer& fold1,
                           const FoldingLayer& fold2, const FoldingConfig& cfg);

/// Full forward pass on a normalized gap scene. The rng drives only the
/// coarse-point sampling stage.
SgcForwardResult sgc_forward(const PointCloud& gapped, const SgcParams& params,
                             SeededRng& rng);

/// Gradients of a random linear functional of the folding output with
/// respect to every folding parameter (both layers), via backprop.
/// Layout matches fold_param_count(). Used by the gradient checks.
std::size_t fold_param_count(const FoldingLayer& l);
std::vector<double> folding_weight_grad(
    const PointCloud& coarse, const std::vector<double>& feats,
    std::size_t feat_width, const FoldingLayer& fold1,
    const FoldingLayer& fold2, const FoldingConfig& cfg,
    const std::vector<Vec3>& upstream);

struct GradCheckReport {
  std::string kernel;
  int trials = 0;
  double max_rel_error = 0.0;
};

/// Central finite differences vs analytic gradients on random small
/// instances. kernel is one of "gridding", "gridding_reverse",
/// "cubic_feature_sampling", "folding". eps must be positive.
GradCheckReport grad_check(const std::string& kernel, int trials, double eps,
                           SeededRng& rng);

}  // namespace occl
