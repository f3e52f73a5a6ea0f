#include "occlusynth/sgc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "occlusynth/parallel.hpp"

using json = nlohmann::json;

namespace occl {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kLeakySlope = 0.2;
const double kBnInvStd = 1.0 / std::sqrt(1.0 + kBnEps);

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double xavier_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Batch-norm in inference mode with zero running mean and unit running
// variance: an affine map per channel.
inline double bn_affine(double x, double scale, double shift) {
  return scale * x * kBnInvStd + shift;
}

}  // namespace

// --- dense layers ---------------------------------------------------------

void Dense::init_xavier(SeededRng rng) {
  w.resize(static_cast<std::size_t>(in) * out);
  b.resize(out);
  const double wb = xavier_bound(in, out);
  for (auto& v : w) v = rng.uniform(-wb, wb);
  const double bb = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : b) v = rng.uniform(-bb, bb);
}

void Dense::zero() {
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
}

std::vector<double> Dense::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in)
    throw error("dense: input length " + std::to_string(x.size()) +
                ", expected " + std::to_string(in));
  std::vector<double> y(out);
  for (int i = 0; i < out; ++i) {
    const double* row = w.data() + static_cast<std::size_t>(i) * in;
    double acc = b[i];
    for (int j = 0; j < in; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

std::vector<double> StreamedDense::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != in)
    throw error("streamed dense: input length " + std::to_string(x.size()) +
                ", expected " + std::to_string(in));
  std::vector<double> y(out);
  const double wb = xavier_bound(in, out);
  const double bb = 1.0 / std::sqrt(static_cast<double>(in));
  const SeededRng base(seed);
  parallel_for(0, static_cast<std::size_t>(out), [&](std::size_t i) {
    SeededRng row = base.derive(static_cast<std::uint64_t>(i));
    double acc = row.uniform(-bb, bb);  // bias
    for (int j = 0; j < in; ++j) acc += row.uniform(-wb, wb) * x[j];
    y[i] = scale * acc;
  });
  return y;
}

// --- conv blocks ------------------------------------------------------------

void ConvBlock::init_xavier(SeededRng rng) {
  w.resize(static_cast<std::size_t>(out_ch) * in_ch * 64);
  b.resize(out_ch);
  bn_scale.assign(out_ch, 1.0);
  bn_shift.assign(out_ch, 0.0);
  const int fan_in = in_ch * 64, fan_out = out_ch * 64;
  const double wb = xavier_bound(fan_in, fan_out);
  for (auto& v : w) v = rng.uniform(-wb, wb);
  const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : b) v = rng.uniform(-bb, bb);
}

void ConvBlock::zero() {
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
  std::fill(bn_shift.begin(), bn_shift.end(), 0.0);
}

void TConvBlock::init_xavier(SeededRng rng) {
  w.resize(static_cast<std::size_t>(in_ch) * out_ch * 64);
  b.resize(out_ch);
  bn_scale.assign(out_ch, 1.0);
  bn_shift.assign(out_ch, 0.0);
  const int fan_in = in_ch * 64, fan_out = out_ch * 64;
  const double wb = xavier_bound(fan_in, fan_out);
  for (auto& v : w) v = rng.uniform(-wb, wb);
  const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : b) v = rng.uniform(-bb, bb);
}

void TConvBlock::zero() {
  std::fill(w.begin(), w.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
  std::fill(bn_shift.begin(), bn_shift.end(), 0.0);
}

namespace {

// 3D convolution, kernel 4^3, padding 2, stride 1: res -> res + 1.
FeatureMap conv3d(const FeatureMap& in, const ConvBlock& blk) {
  const int D = in.res, Do = D + 1;
  FeatureMap out(Do, blk.out_ch);
  const std::size_t in_plane = static_cast<std::size_t>(D) * D * D;
  const std::size_t out_plane = static_cast<std::size_t>(Do) * Do * Do;

  parallel_for(0, static_cast<std::size_t>(blk.out_ch), [&](std::size_t oc) {
    double* oslab = out.values.data() + oc * out_plane;
    std::fill(oslab, oslab + out_plane, blk.b[oc]);
    for (int ic = 0; ic < blk.in_ch; ++ic) {
      const double* islab = in.values.data() + ic * in_plane;
      for (int kx = 0; kx < 4; ++kx) {
        const int ox_lo = std::max(0, 2 - kx);
        const int ox_hi = std::min(Do, D + 2 - kx);
        for (int ky = 0; ky < 4; ++ky) {
          const int oy_lo = std::max(0, 2 - ky);
          const int oy_hi = std::min(Do, D + 2 - ky);
          for (int kz = 0; kz < 4; ++kz) {
            const double wv =
                blk.w[(((oc * blk.in_ch + ic) * 4 + kx) * 4 + ky) * 4 + kz];
            const int oz_lo = std::max(0, 2 - kz);
            const int oz_hi = std::min(Do, D + 2 - kz);
            const int zoff = kz - 2;
            for (int ox = ox_lo; ox < ox_hi; ++ox) {
              const int ix = ox + kx - 2;
              for (int oy = oy_lo; oy < oy_hi; ++oy) {
                const int iy = oy + ky - 2;
                double* orow =
                    oslab + (static_cast<std::size_t>(ox) * Do + oy) * Do;
                const double* irow =
                    islab + (static_cast<std::size_t>(ix) * D + iy) * D + zoff;
                for (int oz = oz_lo; oz < oz_hi; ++oz)
                  orow[oz] += wv * irow[oz];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

// Transposed 3D convolution, kernel 4^3, stride 2, padding 1:
// res -> 2 * res (the only parameterization that realizes the documented
// 5 -> 10 -> 20 -> 40 -> 80 upsampling chain with a 4^3 kernel).
FeatureMap tconv3d(const FeatureMap& in, const TConvBlock& blk) {
  const int D = in.res, Do = 2 * D;
  FeatureMap out(Do, blk.out_ch);
  const std::size_t in_plane = static_cast<std::size_t>(D) * D * D;
  const std::size_t out_plane = static_cast<std::size_t>(Do) * Do * Do;

  // Per output coordinate o the contributing inputs satisfy
  // o = 2 i + k - 1 with k in [0,4), i.e. at most two (i, k) pairs.
  struct Tap {
    int i, k;
  };
  auto taps_for = [&](int o, Tap taps[2]) {
    int n = 0;
    const int i_lo = std::max(0, (o - 2 + 1) / 2);  // ceil((o-2)/2)
    const int i_hi = std::min(D - 1, (o + 1) / 2);
    for (int i = i_lo; i <= i_hi; ++i) {
      const int k = o + 1 - 2 * i;
      if (k >= 0 && k < 4) taps[n++] = {i, k};
    }
    return n;
  };

  std::vector<Tap> taps(static_cast<std::size_t>(Do) * 2);
  std::vector<int> ntaps(Do);
  for (int o = 0; o < Do; ++o) ntaps[o] = taps_for(o, &taps[2 * o]);

  parallel_for(0, static_cast<std::size_t>(blk.out_ch), [&](std::size_t oc) {
    double* oslab = out.values.data() + oc * out_plane;
    for (int ox = 0; ox < Do; ++ox) {
      for (int oy = 0; oy < Do; ++oy) {
        for (int oz = 0; oz < Do; ++oz) {
          double acc = blk.b[oc];
          for (int ic = 0; ic < blk.in_ch; ++ic) {
            const double* islab = in.values.data() + ic * in_plane;
            const double* wslab =
                blk.w.data() + (static_cast<std::size_t>(ic) * blk.out_ch + oc) * 64;
            for (int tx = 0; tx < ntaps[ox]; ++tx) {
              const Tap& ax = taps[2 * ox + tx];
              for (int ty = 0; ty < ntaps[oy]; ++ty) {
                const Tap& ay = taps[2 * oy + ty];
                for (int tz = 0; tz < ntaps[oz]; ++tz) {
                  const Tap& az = taps[2 * oz + tz];
                  acc += wslab[(ax.k * 4 + ay.k) * 4 + az.k] *
                         islab[(static_cast<std::size_t>(ax.i) * D + ay.i) * D +
                               az.i];
                }
              }
            }
          }
          oslab[(static_cast<std::size_t>(ox) * Do + oy) * Do + oz] = acc;
        }
      }
    }
  });
  return out;
}

// Per-channel batch norm (inference) followed by an activation.
enum class Act { leaky_relu, relu, none };

void bn_act(FeatureMap& map, const std::vector<double>& scale,
            const std::vector<double>& shift, Act act) {
  const std::size_t plane =
      static_cast<std::size_t>(map.res) * map.res * map.res;
  parallel_for(0, static_cast<std::size_t>(map.channels), [&](std::size_t c) {
    double* slab = map.values.data() + c * plane;
    const double s = scale[c], t = shift[c];
    for (std::size_t i = 0; i < plane; ++i) {
      double v = bn_affine(slab[i], s, t);
      if (act == Act::leaky_relu && v < 0.0) v *= kLeakySlope;
      if (act == Act::relu && v < 0.0) v = 0.0;
      slab[i] = v;
    }
  });
}

// 2^3 max pooling with stride 2 (floor; a trailing odd slice is dropped).
FeatureMap maxpool2(const FeatureMap& in) {
  const int D = in.res, Do = D / 2;
  FeatureMap out(Do, in.channels);
  const std::size_t in_plane = static_cast<std::size_t>(D) * D * D;
  const std::size_t out_plane = static_cast<std::size_t>(Do) * Do * Do;
  parallel_for(0, static_cast<std::size_t>(in.channels), [&](std::size_t c) {
    const double* islab = in.values.data() + c * in_plane;
    double* oslab = out.values.data() + c * out_plane;
    for (int ox = 0; ox < Do; ++ox)
      for (int oy = 0; oy < Do; ++oy)
        for (int oz = 0; oz < Do; ++oz) {
          double m = -std::numeric_limits<double>::infinity();
          for (int dx = 0; dx < 2; ++dx)
            for (int dy = 0; dy < 2; ++dy)
              for (int dz = 0; dz < 2; ++dz) {
                const double v =
                    islab[(static_cast<std::size_t>(2 * ox + dx) * D +
                           (2 * oy + dy)) *
                              D +
                          (2 * oz + dz)];
                m = std::max(m, v);
              }
          oslab[(static_cast<std::size_t>(ox) * Do + oy) * Do + oz] = m;
        }
  });
  return out;
}

void add_inplace(FeatureMap& a, const FeatureMap& b, const char* where) {
  if (a.res != b.res || a.channels != b.channels)
    throw error(std::string("sgc: skip-connection shape mismatch at ") + where);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] += b.values[i];
}

}  // namespace

// --- folding ---------------------------------------------------------------

void FoldingLayer::init(int in, int hidden, SeededRng rng) {
  fc1.in = in;
  fc1.out = hidden;
  fc1.init_xavier(rng.derive("fc1"));
  bn_scale.assign(hidden, 1.0);
  bn_shift.assign(hidden, 0.0);
  fc2.in = hidden;
  fc2.out = 3;
  fc2.init_xavier(rng.derive("fc2"));
}

void FoldingLayer::zero() {
  fc1.zero();
  fc2.zero();
  std::fill(bn_scale.begin(), bn_scale.end(), 0.0);
  std::fill(bn_shift.begin(), bn_shift.end(), 0.0);
}

namespace {

// fc1 -> BN -> ReLU -> fc2 on a raw buffer; keeps temporaries in caller
// scratch so the per-point loop stays allocation-free.
void folding_layer_eval(const FoldingLayer& l, const double* in, double* out3,
                        std::vector<double>& scratch) {
  const int h = l.fc1.out;
  scratch.resize(h);
  for (int i = 0; i < h; ++i) {
    const double* row = l.fc1.w.data() + static_cast<std::size_t>(i) * l.fc1.in;
    double acc = l.fc1.b[i];
    for (int j = 0; j < l.fc1.in; ++j) acc += row[j] * in[j];
    acc = bn_affine(acc, l.bn_scale[i], l.bn_shift[i]);
    scratch[i] = acc > 0.0 ? acc : 0.0;
  }
  for (int k = 0; k < 3; ++k) {
    const double* row = l.fc2.w.data() + static_cast<std::size_t>(k) * h;
    double acc = l.fc2.b[k];
    for (int j = 0; j < h; ++j) acc += row[j] * scratch[j];
    out3[k] = acc;
  }
}

std::vector<double> folding_grid(const FoldingConfig& cfg) {
  std::vector<double> g(cfg.u);
  for (int i = 0; i < cfg.u; ++i)
    g[i] = cfg.u == 1 ? 0.0
                      : -cfg.grid_extent +
                            2.0 * cfg.grid_extent * i / (cfg.u - 1);
  return g;
}

}  // namespace

PointCloud folding_densify(const PointCloud& coarse,
                           const std::vector<double>& feats,
                           std::size_t feat_width, const FoldingLayer& fold1,
                           const FoldingLayer& fold2,
                           const FoldingConfig& cfg) {
  cfg.validate();
  const std::size_t n = coarse.size();
  if (feats.size() != n * feat_width)
    throw error("folding: feature matrix is " + std::to_string(feats.size()) +
                " values, expected " + std::to_string(n * feat_width));
  if (fold1.fc1.in != static_cast<int>(feat_width) + 5)
    throw error("folding: layer 1 expects " + std::to_string(fold1.fc1.in) +
                " inputs, got " + std::to_string(feat_width + 5));
  if (fold2.fc1.in != static_cast<int>(feat_width) + 6)
    throw error("folding: layer 2 expects " + std::to_string(fold2.fc1.in) +
                " inputs, got " + std::to_string(feat_width + 6));

  const auto grid = folding_grid(cfg);
  const auto r = static_cast<std::size_t>(cfg.r);

  PointCloud out;
  out.frame = coarse.frame;
  out.points.resize(n * r);

  parallel_for(0, n * r, [&](std::size_t oi) {
    thread_local std::vector<double> in1, in2, scratch;
    const std::size_t ci = oi / r;
    const auto j = static_cast<int>(oi % r);
    const Point3& p = coarse.points[ci];
    const double* f = feats.data() + ci * feat_width;

    in1.resize(feat_width + 5);
    std::copy(f, f + feat_width, in1.begin());
    in1[feat_width + 0] = p.x;
    in1[feat_width + 1] = p.y;
    in1[feat_width + 2] = p.z;
    in1[feat_width + 3] = grid[j / cfg.u];
    in1[feat_width + 4] = grid[j % cfg.u];

    double o1[3];
    folding_layer_eval(fold1, in1.data(), o1, scratch);

    in2.resize(feat_width + 6);
    std::copy(f, f + feat_width, in2.begin());
    in2[feat_width + 0] = p.x;
    in2[feat_width + 1] = p.y;
    in2[feat_width + 2] = p.z;
    in2[feat_width + 3] = o1[0];
    in2[feat_width + 4] = o1[1];
    in2[feat_width + 5] = o1[2];

    double m[3];
    folding_layer_eval(fold2, in2.data(), m, scratch);
    out.points[oi] = {p.x + m[0], p.y + m[1], p.z + m[2]};
  });
  return out;
}

PointCloud sample_coarse(const PointCloud& points, std::size_t n,
                         SeededRng& rng, bool* deficit) {
  if (points.empty()) throw error("sample_coarse: empty input");
  const std::size_t m = points.size();
  if (deficit) *deficit = m < n;

  std::vector<std::size_t> ids;
  if (m >= n) {
    ids.resize(m);
    for (std::size_t i = 0; i < m; ++i) ids[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.next_below(m - i);
      std::swap(ids[i], ids[j]);
    }
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
  } else {
    ids.resize(m);
    for (std::size_t i = 0; i < m; ++i) ids[i] = i;
    for (std::size_t i = m; i < n; ++i) ids.push_back(rng.next_below(m));
  }
  return points.select(ids);
}

// --- parameters --------------------------------------------------------------

SgcParams SgcParams::random(std::uint64_t seed) {
  SgcParams p;
  p.seed = seed;
  const SeededRng root(seed);

  int in_ch = 1;
  for (int i = 0; i < 4; ++i) {
    p.conv[i].in_ch = in_ch;
    p.conv[i].out_ch = kEncoderChannels[i];
    p.conv[i].init_xavier(root.derive("conv" + std::to_string(i)));
    in_ch = kEncoderChannels[i];
  }

  p.fc_enc1 = {40000, 8000, root.derive("fc_enc1").state_hash(), 1.0};
  p.fc_enc2 = {8000, 4000, root.derive("fc_enc2").state_hash(), 1.0};
  p.fc_dec1 = {4000, 8000, root.derive("fc_dec1").state_hash(), 1.0};
  p.fc_dec2 = {8000, 40000, root.derive("fc_dec2").state_hash(), 1.0};

  in_ch = 320;
  for (int i = 0; i < 4; ++i) {
    p.tconv[i].in_ch = in_ch;
    p.tconv[i].out_ch = kDecoderChannels[i];
    p.tconv[i].init_xavier(root.derive("tconv" + std::to_string(i)));
    in_ch = kDecoderChannels[i];
  }

  const int mlp_dims[4] = {static_cast<int>(kCubicFeatureWidth), 560, 560, 280};
  for (int i = 0; i < 3; ++i) {
    p.mlps[i].in = mlp_dims[i];
    p.mlps[i].out = mlp_dims[i + 1];
    p.mlps[i].init_xavier(root.derive("mlps" + std::to_string(i)));
  }

  p.fold1.init(285, 128, root.derive("fold1"));
  p.fold2.init(286, 128, root.derive("fold2"));
  return p;
}

void SgcParams::zero_decoder() {
  fc_dec1.scale = 0.0;
  fc_dec2.scale = 0.0;
  for (auto& t : tconv) t.zero();
  for (auto& m : mlps) m.zero();
  zero_folding();
}

void SgcParams::zero_folding() {
  fold1.zero();
  fold2.zero();
}

// --- forward ------------------------------------------------------------------

SgcForwardResult sgc_forward(const PointCloud& gapped, const SgcParams& params,
                             SeededRng& rng) {
  if (gapped.empty()) throw error("sgc: empty input cloud");
  params.folding_cfg.validate();

  SgcForwardResult res;
  auto& inter = res.intermediates;
  auto record = [&](const char* name, int spatial, int channels) {
    inter.shapes.push_back({name, spatial, channels});
  };

  // Encoder.
  const DenseGrid grid0 =
      gridding(gapped, kGridResolution, params.gridding_norm);
  FeatureMap g0(kGridResolution, 1);
  g0.values = grid0.values;
  record("input_grid", kGridResolution, 1);

  std::array<FeatureMap, 4> enc;
  {
    const FeatureMap* cur = &g0;
    for (int i = 0; i < 4; ++i) {
      FeatureMap conv_out = conv3d(*cur, params.conv[i]);
      bn_act(conv_out, params.conv[i].bn_scale, params.conv[i].bn_shift,
             Act::leaky_relu);
      enc[i] = maxpool2(conv_out);
      const int expect = kGridResolution >> (i + 1);
      if (enc[i].res != expect || enc[i].channels != kEncoderChannels[i])
        throw error("sgc: encoder block " + std::to_string(i + 1) +
                    " produced " + std::to_string(enc[i].res) + "^3 x " +
                    std::to_string(enc[i].channels) + ", expected " +
                    std::to_string(expect) + "^3 x " +
                    std::to_string(kEncoderChannels[i]));
      record(("enc" + std::to_string(i + 1)).c_str(), enc[i].res,
             enc[i].channels);
      cur = &enc[i];
    }
  }

  if (enc[3].values.size() != 40000)
    throw error("sgc: flatten expected 40000 values");
  const std::vector<double> f1 = params.fc_enc1.forward(enc[3].values);
  std::vector<double> global_feature = params.fc_enc2.forward(f1);
  if (global_feature.size() != kGlobalFeatureLen)
    throw error("sgc: global feature length mismatch");
  inter.global_feature_len = global_feature.size();
  record("global_feature", 0, static_cast<int>(global_feature.size()));

  // Decoder: FC expansion, reshape to 320 x 5^3, additive skips.
  std::vector<double> d1v = params.fc_dec1.forward(global_feature);
  for (auto& v : d1v) v = v > 0.0 ? v : 0.0;  // ReLU (dropout off: inference)
  const std::vector<double> d2v = params.fc_dec2.forward(d1v);

  FeatureMap dec(5, 320);
  dec.values = d2v;
  add_inplace(dec, enc[3], "decoder reshape");
  record("dec_reshape", 5, 320);

  std::array<const FeatureMap*, 3> cubic_maps{};
  FeatureMap cur = std::move(dec);
  std::array<FeatureMap, 4> dec_maps;
  for (int i = 0; i < 4; ++i) {
    FeatureMap t = tconv3d(cur, params.tconv[i]);
    bn_act(t, params.tconv[i].bn_scale, params.tconv[i].bn_shift, Act::relu);
    // Skip sources mirror the encoder: enc3, enc2, enc1, then the raw grid.
    add_inplace(t, i < 3 ? enc[2 - i] : g0,
                ("decoder block " + std::to_string(i + 1)).c_str());
    const int expect = 10 << i;
    if (t.res != expect || t.channels != kDecoderChannels[i])
      throw error("sgc: decoder block " + std::to_string(i + 1) + " produced " +
                  std::to_string(t.res) + "^3 x " + std::to_string(t.channels) +
                  ", expected " + std::to_string(expect) + "^3 x " +
                  std::to_string(kDecoderChannels[i]));
    record(("dec" + std::to_string(i + 1)).c_str(), t.res, t.channels);
    dec_maps[i] = std::move(t);
    cur = dec_maps[i];  // copy; dec1..3 are reused for cubic sampling
  }
  cubic_maps = {&dec_maps[0], &dec_maps[1], &dec_maps[2]};

  // Coarse cloud via gridding reverse + random selection.
  DenseGrid out_grid(kGridResolution);
  out_grid.values = dec_maps[3].values;
  const PointCloud reversed = gridding_reverse(out_grid);
  inter.reverse_point_count = reversed.size();

  SeededRng coarse_rng = rng.derive("coarse");
  res.coarse =
      sample_coarse(reversed, kCoarseCount, coarse_rng, &inter.coarse_deficit);
  inter.coarse_count = res.coarse.size();
  record("coarse", 0, static_cast<int>(res.coarse.size()));

  // MLPs module: cubic features -> 280-dim per-point features.
  const std::vector<double> cubic = cubic_feature_sampling(
      res.coarse.points, {cubic_maps[0], cubic_maps[1], cubic_maps[2]});
  inter.cubic_feature_width = cubic.size() / res.coarse.size();
  if (inter.cubic_feature_width != kCubicFeatureWidth)
    throw error("sgc: cubic feature width " +
                std::to_string(inter.cubic_feature_width) + ", expected " +
                std::to_string(kCubicFeatureWidth));

  const std::size_t n = res.coarse.size();
  std::vector<double> feats(n * kMlpsFeatureLen);
  parallel_for(0, n, [&](std::size_t pi) {
    thread_local std::vector<double> x, y;
    x.assign(cubic.begin() + pi * kCubicFeatureWidth,
             cubic.begin() + (pi + 1) * kCubicFeatureWidth);
    for (const auto& layer : params.mlps) {
      y = layer.forward(x);
      for (auto& v : y) v = gelu(v);
      x = y;
    }
    std::copy(x.begin(), x.end(), feats.begin() + pi * kMlpsFeatureLen);
  });
  inter.mlps_feature_len = kMlpsFeatureLen;
  record("mlps_features", 0, static_cast<int>(kMlpsFeatureLen));

  res.output = folding_densify(res.coarse, feats, kMlpsFeatureLen,
                               params.fold1, params.fold2, params.folding_cfg);
  inter.output_count = res.output.size();
  record("output", 0, static_cast<int>(res.output.size()));
  return res;
}

// --- parameter serialization ---------------------------------------------------

namespace {

struct TensorRef {
  std::string name;
  std::vector<double>* data;
};

std::vector<TensorRef> tensor_refs(SgcParams& p) {
  std::vector<TensorRef> refs;
  for (int i = 0; i < 4; ++i) {
    const std::string base = "conv" + std::to_string(i);
    refs.push_back({base + ".w", &p.conv[i].w});
    refs.push_back({base + ".b", &p.conv[i].b});
    refs.push_back({base + ".bn_scale", &p.conv[i].bn_scale});
    refs.push_back({base + ".bn_shift", &p.conv[i].bn_shift});
  }
  for (int i = 0; i < 4; ++i) {
    const std::string base = "tconv" + std::to_string(i);
    refs.push_back({base + ".w", &p.tconv[i].w});
    refs.push_back({base + ".b", &p.tconv[i].b});
    refs.push_back({base + ".bn_scale", &p.tconv[i].bn_scale});
    refs.push_back({base + ".bn_shift", &p.tconv[i].bn_shift});
  }
  for (int i = 0; i < 3; ++i) {
    const std::string base = "mlps" + std::to_string(i);
    refs.push_back({base + ".w", &p.mlps[i].w});
    refs.push_back({base + ".b", &p.mlps[i].b});
  }
  const std::pair<const char*, FoldingLayer*> folds[] = {{"fold1", &p.fold1},
                                                         {"fold2", &p.fold2}};
  for (const auto& [label, fold] : folds) {
    const std::string base = label;
    refs.push_back({base + ".fc1.w", &fold->fc1.w});
    refs.push_back({base + ".fc1.b", &fold->fc1.b});
    refs.push_back({base + ".bn_scale", &fold->bn_scale});
    refs.push_back({base + ".bn_shift", &fold->bn_shift});
    refs.push_back({base + ".fc2.w", &fold->fc2.w});
    refs.push_back({base + ".fc2.b", &fold->fc2.b});
  }
  return refs;
}

json streamed_json(const StreamedDense& d) {
  return json{
      {"in", d.in}, {"out", d.out}, {"seed", d.seed}, {"scale", d.scale}};
}

StreamedDense streamed_from_json(const json& j) {
  return {j.at("in").get<int>(), j.at("out").get<int>(),
          j.at("seed").get<std::uint64_t>(), j.at("scale").get<double>()};
}

}  // namespace

void SgcParams::save(const std::string& base_path) const {
  auto& self = const_cast<SgcParams&>(*this);  // refs are read-only here
  const auto refs = tensor_refs(self);

  std::ofstream blob(base_path + ".bin", std::ios::binary);
  if (!blob) throw error("cannot write " + base_path + ".bin");
  json manifest;
  manifest["format"] = "sgc-params-v1";
  manifest["seed"] = seed;
  manifest["gridding_norm"] =
      gridding_norm == GriddingNorm::sum ? "sum" : "mean";
  manifest["folding"] = {{"r", folding_cfg.r},
                         {"u", folding_cfg.u},
                         {"extent", folding_cfg.grid_extent}};
  manifest["streamed"] = {{"fc_enc1", streamed_json(fc_enc1)},
                          {"fc_enc2", streamed_json(fc_enc2)},
                          {"fc_dec1", streamed_json(fc_dec1)},
                          {"fc_dec2", streamed_json(fc_dec2)}};
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& ref : refs) {
    blob.write(reinterpret_cast<const char*>(ref.data->data()),
               static_cast<std::streamsize>(ref.data->size() * 8));
    tensors.push_back(
        {{"name", ref.name}, {"offset", offset}, {"count", ref.data->size()}});
    offset += ref.data->size();
  }
  manifest["tensors"] = tensors;
  if (!blob) throw error("sgc params: blob write failed");

  std::ofstream mf(base_path + ".json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw error("sgc params: manifest write failed");
}

SgcParams SgcParams::load(const std::string& base_path) {
  std::ifstream mf(base_path + ".json");
  if (!mf) throw error("cannot open " + base_path + ".json");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw error("sgc params: bad manifest: " + std::string(e.what()));
  }

  // Build the architecture, then overwrite tensor contents from the blob.
  SgcParams p = SgcParams::random(manifest.at("seed").get<std::uint64_t>());
  p.gridding_norm = manifest.at("gridding_norm").get<std::string>() == "mean"
                        ? GriddingNorm::mean
                        : GriddingNorm::sum;
  p.folding_cfg.r = manifest.at("folding").at("r").get<int>();
  p.folding_cfg.u = manifest.at("folding").at("u").get<int>();
  p.folding_cfg.grid_extent = manifest.at("folding").at("extent").get<double>();
  p.fc_enc1 = streamed_from_json(manifest.at("streamed").at("fc_enc1"));
  p.fc_enc2 = streamed_from_json(manifest.at("streamed").at("fc_enc2"));
  p.fc_dec1 = streamed_from_json(manifest.at("streamed").at("fc_dec1"));
  p.fc_dec2 = streamed_from_json(manifest.at("streamed").at("fc_dec2"));

  const auto refs = tensor_refs(p);
  std::ifstream blob(base_path + ".bin", std::ios::binary);
  if (!blob) throw error("cannot open " + base_path + ".bin");
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto count = entry.at("count").get<std::size_t>();
    const auto it =
        std::find_if(refs.begin(), refs.end(),
                     [&](const TensorRef& r) { return r.name == name; });
    if (it == refs.end()) throw error("sgc params: unknown tensor " + name);
    if (it->data->size() != count)
      throw error("sgc params: tensor " + name + " has " +
                  std::to_string(count) + " values, expected " +
                  std::to_string(it->data->size()));
    blob.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>() * 8));
    blob.read(reinterpret_cast<char*>(it->data->data()),
              static_cast<std::streamsize>(count * 8));
    if (!blob) throw error("sgc params: truncated blob at " + name);
  }
  return p;
}

// --- folding backward (gradient checks) ---------------------------------------

std::size_t fold_param_count(const FoldingLayer& l) {
  return l.fc1.w.size() + l.fc1.b.size() + l.bn_scale.size() +
         l.bn_shift.size() + l.fc2.w.size() + l.fc2.b.size();
}

namespace {

struct FoldingLayerCache {
  std::vector<double> in, a1, r1;  // input, pre-BN activations, post-ReLU
  double out[3];
};

void folding_layer_eval_cached(const FoldingLayer& l, FoldingLayerCache& c) {
  const int h = l.fc1.out;
  c.a1.resize(h);
  c.r1.resize(h);
  for (int i = 0; i < h; ++i) {
    const double* row = l.fc1.w.data() + static_cast<std::size_t>(i) * l.fc1.in;
    double acc = l.fc1.b[i];
    for (int j = 0; j < l.fc1.in; ++j) acc += row[j] * c.in[j];
    c.a1[i] = acc;
    const double n = bn_affine(acc, l.bn_scale[i], l.bn_shift[i]);
    c.r1[i] = n > 0.0 ? n : 0.0;
  }
  for (int k = 0; k < 3; ++k) {
    const double* row = l.fc2.w.data() + static_cast<std::size_t>(k) * h;
    double acc = l.fc2.b[k];
    for (int j = 0; j < h; ++j) acc += row[j] * c.r1[j];
    c.out[k] = acc;
  }
}

// Accumulates parameter gradients for one layer; returns d(loss)/d(input)
// in din (resized). Gradient slab layout: fc1.w, fc1.b, bn_scale, bn_shift,
// fc2.w, fc2.b.
void folding_layer_backward(const FoldingLayer& l, const FoldingLayerCache& c,
                            const double dout[3], double* gslab,
                            std::vector<double>& din) {
  const int h = l.fc1.out, in = l.fc1.in;
  double* g_fc1w = gslab;
  double* g_fc1b = g_fc1w + static_cast<std::size_t>(h) * in;
  double* g_bns = g_fc1b + h;
  double* g_bnt = g_bns + h;
  double* g_fc2w = g_bnt + h;
  double* g_fc2b = g_fc2w + static_cast<std::size_t>(3) * h;

  thread_local std::vector<double> dr1;
  dr1.assign(h, 0.0);
  for (int k = 0; k < 3; ++k) {
    g_fc2b[k] += dout[k];
    const double* row = l.fc2.w.data() + static_cast<std::size_t>(k) * h;
    for (int j = 0; j < h; ++j) {
      g_fc2w[static_cast<std::size_t>(k) * h + j] += dout[k] * c.r1[j];
      dr1[j] += dout[k] * row[j];
    }
  }

  din.assign(in, 0.0);
  for (int i = 0; i < h; ++i) {
    const double n = bn_affine(c.a1[i], l.bn_scale[i], l.bn_shift[i]);
    if (n <= 0.0) continue;  // ReLU gate
    const double dn = dr1[i];
    g_bns[i] += dn * c.a1[i] * kBnInvStd;
    g_bnt[i] += dn;
    const double da = dn * l.bn_scale[i] * kBnInvStd;
    g_fc1b[i] += da;
    const double* row = l.fc1.w.data() + static_cast<std::size_t>(i) * in;
    double* gw = g_fc1w + static_cast<std::size_t>(i) * in;
    for (int j = 0; j < in; ++j) {
      gw[j] += da * c.in[j];
      din[j] += da * row[j];
    }
  }
}

}  // namespace

std::vector<double> folding_weight_grad(
    const PointCloud& coarse, const std::vector<double>& feats,
    std::size_t feat_width, const FoldingLayer& fold1,
    const FoldingLayer& fold2, const FoldingConfig& cfg,
    const std::vector<Vec3>& upstream) {
  cfg.validate();
  const std::size_t n = coarse.size();
  const auto r = static_cast<std::size_t>(cfg.r);
  if (upstream.size() != n * r)
    throw error("folding_weight_grad: upstream length mismatch");
  const auto grid = folding_grid(cfg);

  const std::size_t n1 = fold_param_count(fold1);
  std::vector<double> grads(n1 + fold_param_count(fold2), 0.0);

  FoldingLayerCache c1, c2;
  std::vector<double> din;
  for (std::size_t oi = 0; oi < n * r; ++oi) {
    const std::size_t ci = oi / r;
    const auto j = static_cast<int>(oi % r);
    const Point3& p = coarse.points[ci];
    const double* f = feats.data() + ci * feat_width;

    c1.in.resize(feat_width + 5);
    std::copy(f, f + feat_width, c1.in.begin());
    c1.in[feat_width + 0] = p.x;
    c1.in[feat_width + 1] = p.y;
    c1.in[feat_width + 2] = p.z;
    c1.in[feat_width + 3] = grid[static_cast<std::size_t>(j) / cfg.u];
    c1.in[feat_width + 4] = grid[static_cast<std::size_t>(j) % cfg.u];
    folding_layer_eval_cached(fold1, c1);

    c2.in.resize(feat_width + 6);
    std::copy(f, f + feat_width, c2.in.begin());
    c2.in[feat_width + 0] = p.x;
    c2.in[feat_width + 1] = p.y;
    c2.in[feat_width + 2] = p.z;
    c2.in[feat_width + 3] = c1.out[0];
    c2.in[feat_width + 4] = c1.out[1];
    c2.in[feat_width + 5] = c1.out[2];
    folding_layer_eval_cached(fold2, c2);

    const double dM[3] = {upstream[oi].x, upstream[oi].y, upstream[oi].z};
    folding_layer_backward(fold2, c2, dM, grads.data() + n1, din);
    const double do1[3] = {din[feat_width + 3], din[feat_width + 4],
                           din[feat_width + 5]};
    folding_layer_backward(fold1, c1, do1, grads.data(), din);
  }
  return grads;
}

// --- gradient checks ------------------------------------------------------------

namespace {

// Relative for O(1)+ gradients, absolute below that; the unit floor keeps
// finite-difference roundoff noise on near-zero entries from dominating.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Points strictly inside cells (fraction in [0.1, 0.9]) so the central
// difference never straddles a weight kink.
PointCloud interior_points(int res, std::size_t count, SeededRng& rng) {
  PointCloud cloud;
  cloud.frame = Frame::normalized;
  const double h = 2.0 / (res - 1);
  for (std::size_t i = 0; i < count; ++i) {
    Point3 p;
    for (int a = 0; a < 3; ++a) {
      const auto cell = static_cast<int>(rng.next_below(res - 1));
      p[a] = -1.0 + (cell + rng.uniform(0.1, 0.9)) * h;
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

double check_gridding(int trials, double eps, SeededRng& rng) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    SeededRng r = rng.derive(static_cast<std::uint64_t>(t));
    const int res = 4 + static_cast<int>(r.next_below(5));
    const PointCloud cloud = interior_points(res, 5 + r.next_below(11), r);
    std::vector<double> coeff(static_cast<std::size_t>(res) * res * res);
    for (auto& c : coeff) c = r.uniform(-1.0, 1.0);

    const auto loss = [&](const PointCloud& pc) {
      const DenseGrid g = gridding(pc, res);
      double L = 0.0;
      for (std::size_t i = 0; i < coeff.size(); ++i) L += coeff[i] * g.values[i];
      return L;
    };
    const auto analytic = gridding_grad(cloud, coeff, res);
    for (std::size_t pi = 0; pi < cloud.size(); ++pi) {
      for (int a = 0; a < 3; ++a) {
        PointCloud plus = cloud, minus = cloud;
        plus.points[pi][a] += eps;
        minus.points[pi][a] -= eps;
        const double fd = (loss(plus) - loss(minus)) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[pi][a], fd));
      }
    }
  }
  return worst;
}

double check_gridding_reverse(int trials, double eps, SeededRng& rng) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    SeededRng r = rng.derive(static_cast<std::uint64_t>(t));
    const int res = 4 + static_cast<int>(r.next_below(5));
    DenseGrid grid(res);
    // Strictly positive values: the emission pattern is stable under +-eps.
    for (auto& v : grid.values) v = r.uniform(0.5, 1.5);

    const PointCloud base = gridding_reverse(grid);
    std::vector<Vec3> coeff(base.size());
    for (auto& c : coeff)
      c = {r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)};

    const auto loss = [&](const DenseGrid& g) {
      const PointCloud pc = gridding_reverse(g);
      double L = 0.0;
      for (std::size_t i = 0; i < pc.size(); ++i)
        L += coeff[i].dot(pc.points[i]);
      return L;
    };
    const auto analytic = gridding_reverse_grad(grid, coeff);
    for (std::size_t vi = 0; vi < grid.values.size(); ++vi) {
      DenseGrid plus = grid, minus = grid;
      plus.values[vi] += eps;
      minus.values[vi] -= eps;
      const double fd = (loss(plus) - loss(minus)) / (2.0 * eps);
      worst = std::max(worst, rel_err(analytic[vi], fd));
    }
  }
  return worst;
}

double check_cubic(int trials, double eps, SeededRng& rng) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    SeededRng r = rng.derive(static_cast<std::uint64_t>(t));
    FeatureMap m1(4 + static_cast<int>(r.next_below(3)),
                  2 + static_cast<int>(r.next_below(2)));
    FeatureMap m2(4 + static_cast<int>(r.next_below(3)),
                  2 + static_cast<int>(r.next_below(2)));
    for (auto& v : m1.values) v = r.uniform(-1.0, 1.0);
    for (auto& v : m2.values) v = r.uniform(-1.0, 1.0);
    const PointCloud pts = interior_points(m1.res, 5 + r.next_below(6), r);

    const std::size_t width = 8 * (m1.channels + m2.channels);
    std::vector<double> coeff(pts.size() * width);
    for (auto& c : coeff) c = r.uniform(-1.0, 1.0);

    const auto loss = [&](const FeatureMap& a, const FeatureMap& b) {
      const auto f = cubic_feature_sampling(pts.points, {&a, &b});
      double L = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) L += coeff[i] * f[i];
      return L;
    };
    const auto analytic =
        cubic_feature_sampling_grad(pts.points, {&m1, &m2}, coeff);
    for (int which = 0; which < 2; ++which) {
      FeatureMap& target = which == 0 ? m1 : m2;
      for (std::size_t vi = 0; vi < target.values.size(); ++vi) {
        const double save = target.values[vi];
        target.values[vi] = save + eps;
        const double lp = loss(m1, m2);
        target.values[vi] = save - eps;
        const double lm = loss(m1, m2);
        target.values[vi] = save;
        const double fd = (lp - lm) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[which][vi], fd));
      }
    }
  }
  return worst;
}

double check_folding(int trials, double eps, SeededRng& rng) {
  double worst = 0.0;
  constexpr std::size_t kFeat = 6;
  constexpr int kHidden = 8;
  FoldingConfig cfg;  // r = 9, u = 3

  for (int t = 0; t < trials; ++t) {
    SeededRng r = rng.derive(static_cast<std::uint64_t>(t));
    FoldingLayer f1, f2;
    f1.init(kFeat + 5, kHidden, r.derive("f1"));
    f2.init(kFeat + 6, kHidden, r.derive("f2"));
    // Random BN parameters exercise those gradients too.
    for (auto& v : f1.bn_scale) v = r.uniform(0.5, 1.5);
    for (auto& v : f1.bn_shift) v = r.uniform(-0.2, 0.2);
    for (auto& v : f2.bn_scale) v = r.uniform(0.5, 1.5);
    for (auto& v : f2.bn_shift) v = r.uniform(-0.2, 0.2);

    PointCloud coarse;
    coarse.frame = Frame::normalized;
    const std::size_t n = 2 + r.next_below(3);
    for (std::size_t i = 0; i < n; ++i)
      coarse.points.push_back(
          {r.uniform(-0.9, 0.9), r.uniform(-0.9, 0.9), r.uniform(-0.9, 0.9)});
    std::vector<double> feats(n * kFeat);
    for (auto& v : feats) v = r.uniform(-1.0, 1.0);
    std::vector<Vec3> coeff(n * static_cast<std::size_t>(cfg.r));
    for (auto& c : coeff)
      c = {r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)};

    const auto loss = [&](const FoldingLayer& a, const FoldingLayer& b) {
      const PointCloud out = folding_densify(coarse, feats, kFeat, a, b, cfg);
      double L = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i)
        L += coeff[i].dot(out.points[i]);
      return L;
    };
    const auto analytic =
        folding_weight_grad(coarse, feats, kFeat, f1, f2, cfg, coeff);

    std::size_t gi = 0;
    for (FoldingLayer* layer : {&f1, &f2}) {
      for (std::vector<double>* tensor :
           {&layer->fc1.w, &layer->fc1.b, &layer->bn_scale, &layer->bn_shift,
            &layer->fc2.w, &layer->fc2.b}) {
        for (auto& v : *tensor) {
          const double save = v;
          v = save + eps;
          const double lp = loss(f1, f2);
          v = save - eps;
          const double lm = loss(f1, f2);
          v = save;
          const double fd = (lp - lm) / (2.0 * eps);
          worst = std::max(worst, rel_err(analytic[gi++], fd));
        }
      }
    }
    if (gi != analytic.size())
      throw error("folding grad check: parameter walk out of sync");
  }
  return worst;
}

}  // namespace

GradCheckReport grad_check(const std::string& kernel, int trials, double eps,
                           SeededRng& rng) {
  if (!(eps > 0.0)) throw error("grad_check: eps must be positive");
  if (trials < 1) throw error("grad_check: trials must be >= 1");

  GradCheckReport report;
  report.kernel = kernel;
  report.trials = trials;
  if (kernel == "gridding")
    report.max_rel_error = check_gridding(trials, eps, rng);
  else if (kernel == "gridding_reverse")
    report.max_rel_error = check_gridding_reverse(trials, eps, rng);
  else if (kernel == "cubic_feature_sampling")
    report.max_rel_error = check_cubic(trials, eps, rng);
  else if (kernel == "folding")
    report.max_rel_error = check_folding(trials, eps, rng);
  else
    throw error("grad_check: unknown kernel '" + kernel + "'");
  return report;
}

}  // namespace occl
