#pragma once

// Forward/backward passes of the codec. Training uses additive uniform
// noise as the quantizer relaxation; evaluation rounds to nearest and clamps
// to the coding support. Gradients are computed analytically for every
// parameter and checked against finite differences in the test suite.

#include <cstdint>
#include <vector>

#include "caufc/alignment.hpp"
#include "caufc/codec/model.hpp"

namespace caufc {

// Channel-major dense activation grid (double precision).
struct Grid {
  int ch = 0, rows = 0, cols = 0;
  std::vector<double> v;

  void resize(int c, int r, int co) {
    ch = c;
    rows = r;
    cols = co;
    v.assign(static_cast<size_t>(c) * r * co, 0.0);
  }
  size_t idx(int c, int y, int x) const {
    return (static_cast<size_t>(c) * rows + y) * cols + x;
  }
  double at(int c, int y, int x) const { return v[idx(c, y, x)]; }
  double& at(int c, int y, int x) { return v[idx(c, y, x)]; }
  size_t count() const { return v.size(); }
};

enum class QuantMode { TrainNoise, EvalRound };

// Per-element quantizer noise in [-0.5, 0.5), sized to the latent grids.
struct NoiseBuffers {
  std::vector<double> y, z;
};

NoiseBuffers make_noise(uint64_t seed, uint64_t step, size_t y_count, size_t z_count);

// Latent grid geometry for a rows x cols token input (after padding).
struct LatentShape {
  int y_ch = 0, y_rows = 0, y_cols = 0;
  int z_ch = 0, z_rows = 0, z_cols = 0;
  size_t y_count() const { return static_cast<size_t>(y_ch) * y_rows * y_cols; }
  size_t z_count() const { return static_cast<size_t>(z_ch) * z_rows * z_cols; }
};

LatentShape latent_shape(const CodecModel& model, int rows, int cols);

// Every intermediate needed to run backward.
struct Trace {
  Grid x_pad;
  Grid a1, h1, a2, h2, y;
  Grid ay_pad;
  Grid b1, g1, z, z_hat;
  Grid s1, t1, u1, raw;
  Grid sigma;  // cropped to the main latent's spatial size
  Grid y_hat;
  Grid d1, e1, v1, d2, e2, v2, xh;
  int rows0 = 0, cols0 = 0;
};

struct ForwardResult {
  TokenMatrix x_hat;  // reconstruction cropped to the input shape
  Grid y_hat, z_hat, sigma;
  double rate_y_bits = 0.0;
  double rate_z_bits = 0.0;
  double sum_se = 0.0;  // squared error vs the input tokens
  size_t numel = 0;

  double bits_estimate() const { return rate_y_bits + rate_z_bits; }
  double bpfp() const { return bits_estimate() / static_cast<double>(numel); }
  double mse() const { return sum_se / static_cast<double>(numel); }
};

// x must be an aligned token matrix (values in [0,1]) of at least 4x4.
// `noise` applies only in TrainNoise mode (absent = zero noise); `trace`
// captures intermediates when backward() will follow.
ForwardResult forward(const CodecModel& model, const TokenMatrix& x, QuantMode mode,
                      const NoiseBuffers* noise = nullptr, Trace* trace = nullptr);

// Probability the zero-mean scale-sigma Gaussian assigns to the unit
// quantization bin around y_hat; clamped below at 2^-32.
double gaussian_likelihood(double y_hat, double sigma);

// Same for the piecewise-linear factorized prior of one hyper channel.
double factorized_likelihood(const CodecModel& model, int channel, double z_hat);

// Symbol support radius used when coding a latent with scale sigma.
int gaussian_support_radius(double sigma);

// Parameter gradients laid out parallel to CodecModel::param_arrays().
struct Gradients {
  std::vector<std::vector<double>> arrays;

  static Gradients zeros_like(const CodecModel& m);
  void accumulate(const Gradients& other, double scale);
  void scale(double s);
};

// Gradient of  loss = bits_estimate/numel + lambda * sum_se  for a
// TrainNoise-mode trace.
Gradients backward(const CodecModel& model, const Trace& trace, const TokenMatrix& x, double lambda);

// The scalar objective the trainer minimizes (see ForwardResult fields).
double rd_loss_value(double bpfp, double distortion, double lambda);

}  // namespace caufc
