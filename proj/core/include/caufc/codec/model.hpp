#pragma once

// Learned transform codec for aligned token matrices, single input channel.
// Analysis: three 5x5 convs (stride 2,2,1) to an 8-channel latent. The hyper
// path models per-element Gaussian scales of the latent: 3x3 convs over |y|
// down to a 4-channel hyper latent coded with a per-channel piecewise-linear
// CDF. Synthesis mirrors analysis with nearest-neighbor upsampling. All
// activations are leaky (slope 0.2); parameters are f32, math is double.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "caufc/common.hpp"

namespace caufc {

struct Conv {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;    // convolution stride (decoder-side layers always 1)
  int upsample = 1;  // nearest-neighbor factor applied before a decoder-side conv
  std::vector<float> w;  // [out][in][ky][kx]
  std::vector<float> b;  // [out]

  size_t w_index(int oc, int ic, int ky, int kx) const {
    return ((static_cast<size_t>(oc) * in_ch + ic) * kernel + ky) * kernel + kx;
  }
};

// Monotone piecewise-linear CDF per hyper channel. Knots are fixed on a
// uniform grid over [-radius, radius]; the learnable part is one softplus
// weight per segment, normalized to total mass 1. CDF is pinned to 0 below
// the first knot and 1 above the last.
struct FactorizedPrior {
  int channels = 0;
  int radius = 0;        // integer symbol support is [-radius, radius]
  double spacing = 0.5;  // knot spacing
  std::vector<float> w;  // [channels][segments]

  int segments() const { return static_cast<int>(std::lround(2 * radius / spacing)); }
  const float* channel_w(int ch) const { return w.data() + static_cast<size_t>(ch) * segments(); }
  float* channel_w(int ch) { return w.data() + static_cast<size_t>(ch) * segments(); }
};

struct CodecModel {
  static constexpr double kScaleFloor = 0.04;
  static constexpr int kStrideProduct = 4;  // analysis downsampling in each axis
  static constexpr int kHyperStride = 2;    // extra downsampling of the hyper path

  std::vector<Conv> analysis;         // 1->32 s2, 32->32 s2, 32->8 s1
  std::vector<Conv> hyper_analysis;   // 8->16 s2, 16->4 s1
  std::vector<Conv> hyper_synthesis;  // 4->16 s1, [up2] 16->8 s1
  std::vector<Conv> synthesis;        // 8->32 s1, [up2] 32->32 s1, [up2] 32->1 s1
  FactorizedPrior factorized;         // 4 channels, radius 30

  int latent_channels() const { return analysis.back().out_ch; }
  int hyper_channels() const { return factorized.channels; }

  // All parameter arrays in a fixed order; gradients, the optimizer, the
  // hash and the file format all share this enumeration.
  std::vector<const std::vector<float>*> param_arrays() const;
  std::vector<std::vector<float>*> param_arrays();
  size_t param_count() const;

  // FNV-1a over the serialized f32 parameter bytes in array order.
  uint64_t hash() const;

  static CodecModel init(uint64_t seed);
};

// CAFM container: magic | version | layer table | f32 parameters | hash.
std::vector<uint8_t> encode_model(const CodecModel& m);
CodecModel decode_model(const std::vector<uint8_t>& bytes);
void save_model(const CodecModel& m, const std::filesystem::path& path);
CodecModel load_model(const std::filesystem::path& path);

}  // namespace caufc
