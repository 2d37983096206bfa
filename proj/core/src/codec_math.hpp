#pragma once

// Internal kernels shared by the codec translation units: convolution
// forward/backward, padding, upsampling, activations and the likelihood
// math with its derivatives. Not installed.

#include <cmath>

#include "caufc/codec/forward.hpp"

namespace caufc::detail {

inline constexpr double kLn2 = 0.6931471805599453;
inline constexpr double kInvSqrt2 = 0.7071067811865476;
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;
inline constexpr double kMinLikelihood = 0x1.0p-32;
inline constexpr double kLeakySlope = 0.2;

inline double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double leaky_grad(double pre) { return pre > 0.0 ? 1.0 : kLeakySlope; }

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Standard normal mass over [(|v|-0.5)/sigma, (|v|+0.5)/sigma]; exact
// symmetry in v by construction.
inline double gaussian_bin_prob(double v, double sigma) {
  double av = std::abs(v);
  double a = (av - 0.5) / sigma;
  double b = (av + 0.5) / sigma;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) - std::erf(a * kInvSqrt2));
}

// d/dv and d/dsigma of the unclamped bin probability.
inline void gaussian_bin_prob_grad(double v, double sigma, double& d_v, double& d_sigma) {
  double a = (v - 0.5) / sigma;
  double b = (v + 0.5) / sigma;
  double pa = normal_pdf(a), pb = normal_pdf(b);
  d_v = (pb - pa) / sigma;
  d_sigma = (pa * a - pb * b) / sigma;
}

// ---------------------------------------------------------------------------
// Factorized prior scratch: softplus weights, prefix sums, total mass.

struct FactorizedWork {
  int channels = 0;
  int segments = 0;
  double spacing = 0.0;
  double t0 = 0.0;  // first knot
  std::vector<double> sp;      // [ch][seg]
  std::vector<double> prefix;  // [ch][seg], mass strictly below segment j
  std::vector<double> total;   // [ch]

  explicit FactorizedWork(const FactorizedPrior& f);

  // CDF value plus locating info: j = segment index (-1 below, segments
  // above the knot range), frac = position inside segment j.
  struct Point {
    double cdf = 0.0;
    int j = 0;
    double frac = 0.0;
  };
  Point eval(int ch, double t) const;

  // Density at t (0 outside the knot range).
  double density(int ch, const Point& p) const;
};

// ---------------------------------------------------------------------------
// Grid ops.

// Pads bottom/right so rows%row_mult == 0 and cols%col_mult == 0, mirroring
// about the last row/column (edge-replicating when the source is too small).
void pad_to_multiple(const Grid& in, int row_mult, int col_mult, Grid& out);
// Accumulates gradients of the padded grid back onto the source.
void pad_to_multiple_backward(const Grid& d_out, int rows, int cols, Grid& d_in);

void conv_forward(const Grid& in, const Conv& layer, Grid& out);
// d_in may be null when the input gradient is not needed.
void conv_backward(const Grid& in, const Conv& layer, const Grid& d_out, Grid* d_in,
                   std::vector<double>& d_w, std::vector<double>& d_b);

void upsample2(const Grid& in, Grid& out);
void upsample2_backward(const Grid& d_out, Grid& d_in);  // d_in must be pre-sized

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace caufc::detail
