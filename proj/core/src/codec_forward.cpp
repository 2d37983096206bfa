#include "caufc/codec/forward.hpp"

#include <algorithm>
#include <cmath>

#include "codec_math.hpp"

namespace caufc {

using detail::FactorizedWork;

namespace detail {

FactorizedWork::FactorizedWork(const FactorizedPrior& f) {
  channels = f.channels;
  segments = f.segments();
  spacing = f.spacing;
  t0 = -static_cast<double>(f.radius);
  sp.resize(static_cast<size_t>(channels) * segments);
  prefix.resize(sp.size());
  total.resize(channels);
  for (int ch = 0; ch < channels; ++ch) {
    const float* w = f.channel_w(ch);
    double run = 0.0;
    for (int j = 0; j < segments; ++j) {
      size_t at = static_cast<size_t>(ch) * segments + j;
      prefix[at] = run;
      sp[at] = softplus(static_cast<double>(w[j]));
      run += sp[at];
    }
    total[ch] = run;
  }
}

FactorizedWork::Point FactorizedWork::eval(int ch, double t) const {
  Point p;
  double pos = (t - t0) / spacing;
  if (pos <= 0.0) {
    p.cdf = 0.0;
    p.j = -1;
    return p;
  }
  if (pos >= segments) {
    p.cdf = 1.0;
    p.j = segments;
    return p;
  }
  int j = static_cast<int>(pos);
  if (j >= segments) j = segments - 1;
  size_t at = static_cast<size_t>(ch) * segments + j;
  p.j = j;
  p.frac = pos - j;
  p.cdf = (prefix[at] + sp[at] * p.frac) / total[ch];
  return p;
}

double FactorizedWork::density(int ch, const Point& p) const {
  if (p.j < 0 || p.j >= segments) return 0.0;
  size_t at = static_cast<size_t>(ch) * segments + p.j;
  return sp[at] / (total[ch] * spacing);
}

void pad_to_multiple(const Grid& in, int row_mult, int col_mult, Grid& out) {
  int rows = ceil_div(in.rows, row_mult) * row_mult;
  int cols = ceil_div(in.cols, col_mult) * col_mult;
  out.resize(in.ch, rows, cols);
  for (int c = 0; c < in.ch; ++c) {
    for (int y = 0; y < rows; ++y) {
      int sy = y < in.rows ? y : std::max(0, 2 * in.rows - 2 - y);
      const double* src = &in.v[in.idx(c, sy, 0)];
      double* dst = &out.v[out.idx(c, y, 0)];
      for (int x = 0; x < cols; ++x) {
        int sx = x < in.cols ? x : std::max(0, 2 * in.cols - 2 - x);
        dst[x] = src[sx];
      }
    }
  }
}

void pad_to_multiple_backward(const Grid& d_out, int rows, int cols, Grid& d_in) {
  d_in.resize(d_out.ch, rows, cols);
  for (int c = 0; c < d_out.ch; ++c) {
    for (int y = 0; y < d_out.rows; ++y) {
      int sy = y < rows ? y : std::max(0, 2 * rows - 2 - y);
      const double* src = &d_out.v[d_out.idx(c, y, 0)];
      double* dst = &d_in.v[d_in.idx(c, sy, 0)];
      for (int x = 0; x < d_out.cols; ++x) {
        int sx = x < cols ? x : std::max(0, 2 * cols - 2 - x);
        dst[sx] += src[x];
      }
    }
  }
}

void conv_forward(const Grid& in, const Conv& layer, Grid& out) {
  const int s = layer.stride;
  const int k = layer.kernel;
  const int p = k / 2;
  out.resize(layer.out_ch, ceil_div(in.rows, s), ceil_div(in.cols, s));

  for (int oc = 0; oc < layer.out_ch; ++oc) {
    double bias = layer.b[oc];
    double* obase = &out.v[out.idx(oc, 0, 0)];
    std::fill(obase, obase + static_cast<size_t>(out.rows) * out.cols, bias);
  }

  // All k taps of one kernel row are applied in a single pass over the
  // output row; the interior needs no bounds checks.
  const int interior_lo = ceil_div(p, s);
  const int interior_hi = (in.cols - 1 - p) / s;  // may underflow small inputs
  for (int oc = 0; oc < layer.out_ch; ++oc) {
    for (int ic = 0; ic < in.ch; ++ic) {
      for (int ky = 0; ky < k; ++ky) {
        double wrow[16];
        for (int kx = 0; kx < k; ++kx) {
          wrow[kx] = static_cast<double>(layer.w[layer.w_index(oc, ic, ky, kx)]);
        }
        for (int oy = 0; oy < out.rows; ++oy) {
          int iy = oy * s + ky - p;
          if (iy < 0 || iy >= in.rows) continue;
          const double* irow = &in.v[in.idx(ic, iy, 0)];
          double* orow = &out.v[out.idx(oc, oy, 0)];

          int lo = std::max(0, interior_lo);
          int hi = std::min(out.cols - 1, interior_hi);
          for (int ox = 0; ox < std::min(lo, out.cols); ++ox) {
            double acc = 0.0;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * s + kx - p;
              if (ix >= 0 && ix < in.cols) acc += wrow[kx] * irow[ix];
            }
            orow[ox] += acc;
          }
          if (k == 5) {
            const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2], w3 = wrow[3], w4 = wrow[4];
            for (int ox = lo; ox <= hi; ++ox) {
              const double* q = irow + ox * s - p;
              orow[ox] += w0 * q[0] + w1 * q[1] + w2 * q[2] + w3 * q[3] + w4 * q[4];
            }
          } else if (k == 3) {
            const double w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
            for (int ox = lo; ox <= hi; ++ox) {
              const double* q = irow + ox * s - p;
              orow[ox] += w0 * q[0] + w1 * q[1] + w2 * q[2];
            }
          } else {
            for (int ox = lo; ox <= hi; ++ox) {
              const double* q = irow + ox * s - p;
              double acc = 0.0;
              for (int kx = 0; kx < k; ++kx) acc += wrow[kx] * q[kx];
              orow[ox] += acc;
            }
          }
          for (int ox = std::max(hi + 1, lo); ox < out.cols; ++ox) {
            double acc = 0.0;
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * s + kx - p;
              if (ix >= 0 && ix < in.cols) acc += wrow[kx] * irow[ix];
            }
            orow[ox] += acc;
          }
        }
      }
    }
  }
}

void conv_backward(const Grid& in, const Conv& layer, const Grid& d_out, Grid* d_in,
                   std::vector<double>& d_w, std::vector<double>& d_b) {
  const int s = layer.stride;
  const int k = layer.kernel;
  const int p = k / 2;

  for (int oc = 0; oc < layer.out_ch; ++oc) {
    const double* drow = &d_out.v[d_out.idx(oc, 0, 0)];
    double acc = 0.0;
    size_t n = static_cast<size_t>(d_out.rows) * d_out.cols;
    for (size_t i = 0; i < n; ++i) acc += drow[i];
    d_b[oc] += acc;
  }

  const int interior_lo = ceil_div(p, s);
  const int interior_hi = (in.cols - 1 - p) / s;
  std::vector<double> wacc(static_cast<size_t>(k));
  for (int oc = 0; oc < layer.out_ch; ++oc) {
    for (int ic = 0; ic < in.ch; ++ic) {
      for (int ky = 0; ky < k; ++ky) {
        double wrow[16];
        for (int kx = 0; kx < k; ++kx) {
          wrow[kx] = static_cast<double>(layer.w[layer.w_index(oc, ic, ky, kx)]);
        }
        std::fill(wacc.begin(), wacc.end(), 0.0);
        for (int oy = 0; oy < d_out.rows; ++oy) {
          int iy = oy * s + ky - p;
          if (iy < 0 || iy >= in.rows) continue;
          const double* irow = &in.v[in.idx(ic, iy, 0)];
          const double* drow = &d_out.v[d_out.idx(oc, oy, 0)];

          // Weight gradients: all taps in one pass, guarded only at the rim.
          int lo = std::max(0, interior_lo);
          int hi = std::min(d_out.cols - 1, interior_hi);
          for (int ox = 0; ox < std::min(lo, d_out.cols); ++ox) {
            double d = drow[ox];
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * s + kx - p;
              if (ix >= 0 && ix < in.cols) wacc[kx] += d * irow[ix];
            }
          }
          if (k == 5) {
            double a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0;
            for (int ox = lo; ox <= hi; ++ox) {
              double d = drow[ox];
              const double* q = irow + ox * s - p;
              a0 += d * q[0];
              a1 += d * q[1];
              a2 += d * q[2];
              a3 += d * q[3];
              a4 += d * q[4];
            }
            wacc[0] += a0;
            wacc[1] += a1;
            wacc[2] += a2;
            wacc[3] += a3;
            wacc[4] += a4;
          } else {
            for (int ox = lo; ox <= hi; ++ox) {
              double d = drow[ox];
              const double* q = irow + ox * s - p;
              for (int kx = 0; kx < k; ++kx) wacc[kx] += d * q[kx];
            }
          }
          for (int ox = std::max(hi + 1, lo); ox < d_out.cols; ++ox) {
            double d = drow[ox];
            for (int kx = 0; kx < k; ++kx) {
              int ix = ox * s + kx - p;
              if (ix >= 0 && ix < in.cols) wacc[kx] += d * irow[ix];
            }
          }

          // Input gradients: one saxpy per tap over its exact valid span,
          // so writes never overlap within a pass.
          if (d_in) {
            double* grow = &d_in->v[d_in->idx(ic, iy, 0)];
            for (int kx = 0; kx < k; ++kx) {
              int off = kx - p;
              int ox_lo = off < 0 ? ceil_div(-off, s) : 0;
              int ox_hi = std::min(d_out.cols - 1, (in.cols - 1 - off) / s);
              double wgt = wrow[kx];
              if (s == 1) {
                double* gp = grow + off;
                for (int ox = ox_lo; ox <= ox_hi; ++ox) gp[ox] += wgt * drow[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) grow[ox * s + off] += wgt * drow[ox];
              }
            }
          }
        }
        for (int kx = 0; kx < k; ++kx) d_w[layer.w_index(oc, ic, ky, kx)] += wacc[kx];
      }
    }
  }
}

void upsample2(const Grid& in, Grid& out) {
  out.resize(in.ch, in.rows * 2, in.cols * 2);
  for (int c = 0; c < in.ch; ++c) {
    for (int y = 0; y < out.rows; ++y) {
      const double* irow = &in.v[in.idx(c, y / 2, 0)];
      double* orow = &out.v[out.idx(c, y, 0)];
      for (int x = 0; x < out.cols; ++x) orow[x] = irow[x / 2];
    }
  }
}

void upsample2_backward(const Grid& d_out, Grid& d_in) {
  for (int c = 0; c < d_in.ch; ++c) {
    for (int y = 0; y < d_out.rows; ++y) {
      const double* drow = &d_out.v[d_out.idx(c, y, 0)];
      double* grow = &d_in.v[d_in.idx(c, y / 2, 0)];
      for (int x = 0; x < d_out.cols; ++x) grow[x / 2] += drow[x];
    }
  }
}

}  // namespace detail

namespace {

using namespace detail;

void apply_leaky(const Grid& in, Grid& out) {
  out.ch = in.ch;
  out.rows = in.rows;
  out.cols = in.cols;
  out.v.resize(in.v.size());
  for (size_t i = 0; i < in.v.size(); ++i) out.v[i] = leaky(in.v[i]);
}

}  // namespace

LatentShape latent_shape(const CodecModel& model, int rows, int cols) {
  LatentShape s;
  int rp = ceil_div(rows, CodecModel::kStrideProduct) * CodecModel::kStrideProduct;
  int cp = ceil_div(cols, CodecModel::kStrideProduct) * CodecModel::kStrideProduct;
  s.y_ch = model.latent_channels();
  s.y_rows = rp / CodecModel::kStrideProduct;
  s.y_cols = cp / CodecModel::kStrideProduct;
  int er = ceil_div(s.y_rows, CodecModel::kHyperStride) * CodecModel::kHyperStride;
  int ec = ceil_div(s.y_cols, CodecModel::kHyperStride) * CodecModel::kHyperStride;
  s.z_ch = model.hyper_channels();
  s.z_rows = er / CodecModel::kHyperStride;
  s.z_cols = ec / CodecModel::kHyperStride;
  return s;
}

NoiseBuffers make_noise(uint64_t seed, uint64_t step, size_t y_count, size_t z_count) {
  NoiseBuffers n;
  SplitMix rng = SplitMix::stream(seed, 0x6e6f6973656bull ^ step);
  n.y.resize(y_count);
  for (auto& v : n.y) v = rng.next_unit() - 0.5;
  n.z.resize(z_count);
  for (auto& v : n.z) v = rng.next_unit() - 0.5;
  return n;
}

double gaussian_likelihood(double y_hat, double sigma) {
  if (sigma < CodecModel::kScaleFloor) fail("gaussian_likelihood: sigma below scale floor");
  return std::max(gaussian_bin_prob(y_hat, sigma), kMinLikelihood);
}

double factorized_likelihood(const CodecModel& model, int channel, double z_hat) {
  if (channel < 0 || channel >= model.factorized.channels) fail("factorized_likelihood: bad channel");
  FactorizedWork work(model.factorized);
  double p = work.eval(channel, z_hat + 0.5).cdf - work.eval(channel, z_hat - 0.5).cdf;
  return std::max(p, kMinLikelihood);
}

int gaussian_support_radius(double sigma) {
  int r = static_cast<int>(std::ceil(6.0 * sigma)) + 1;
  return std::min(r, 512);
}

ForwardResult forward(const CodecModel& model, const TokenMatrix& x, QuantMode mode,
                      const NoiseBuffers* noise, Trace* trace) {
  x.validate();
  if (x.rows < 4 || x.cols < 4) {
    fail("codec forward: input " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
         " is below the 4x4 receptive minimum");
  }

  Trace local;
  Trace& t = trace ? *trace : local;
  t.rows0 = static_cast<int>(x.rows);
  t.cols0 = static_cast<int>(x.cols);

  Grid x0;
  x0.resize(1, t.rows0, t.cols0);
  for (size_t i = 0; i < x.data.size(); ++i) x0.v[i] = static_cast<double>(x.data[i]);

  pad_to_multiple(x0, CodecModel::kStrideProduct, CodecModel::kStrideProduct, t.x_pad);

  conv_forward(t.x_pad, model.analysis[0], t.a1);
  apply_leaky(t.a1, t.h1);
  conv_forward(t.h1, model.analysis[1], t.a2);
  apply_leaky(t.a2, t.h2);
  conv_forward(t.h2, model.analysis[2], t.y);

  // Hyper path sees |y|, padded so its stride-2 conv divides evenly.
  Grid ay;
  ay.ch = t.y.ch;
  ay.rows = t.y.rows;
  ay.cols = t.y.cols;
  ay.v.resize(t.y.v.size());
  for (size_t i = 0; i < t.y.v.size(); ++i) ay.v[i] = std::abs(t.y.v[i]);
  pad_to_multiple(ay, CodecModel::kHyperStride, CodecModel::kHyperStride, t.ay_pad);

  conv_forward(t.ay_pad, model.hyper_analysis[0], t.b1);
  apply_leaky(t.b1, t.g1);
  conv_forward(t.g1, model.hyper_analysis[1], t.z);

  // Quantize the hyper latent.
  t.z_hat.resize(t.z.ch, t.z.rows, t.z.cols);
  if (mode == QuantMode::TrainNoise) {
    for (size_t i = 0; i < t.z.v.size(); ++i) {
      double u = (noise && i < noise->z.size()) ? noise->z[i] : 0.0;
      t.z_hat.v[i] = t.z.v[i] + u;
    }
  } else {
    const double radius = model.factorized.radius;
    for (size_t i = 0; i < t.z.v.size(); ++i) {
      t.z_hat.v[i] = std::clamp(std::nearbyint(t.z.v[i]), -radius, radius);
    }
  }

  conv_forward(t.z_hat, model.hyper_synthesis[0], t.s1);
  apply_leaky(t.s1, t.t1);
  upsample2(t.t1, t.u1);
  conv_forward(t.u1, model.hyper_synthesis[1], t.raw);

  // Crop the scale map to the latent's spatial size and floor it.
  t.sigma.resize(t.y.ch, t.y.rows, t.y.cols);
  for (int c = 0; c < t.y.ch; ++c) {
    for (int y = 0; y < t.y.rows; ++y) {
      for (int xx = 0; xx < t.y.cols; ++xx) {
        t.sigma.at(c, y, xx) = CodecModel::kScaleFloor + softplus(t.raw.at(c, y, xx));
      }
    }
  }

  // Quantize the main latent; the clamp radius follows the local scale so
  // coding support stays consistent between estimate and payload.
  t.y_hat.resize(t.y.ch, t.y.rows, t.y.cols);
  if (mode == QuantMode::TrainNoise) {
    for (size_t i = 0; i < t.y.v.size(); ++i) {
      double u = (noise && i < noise->y.size()) ? noise->y[i] : 0.0;
      t.y_hat.v[i] = t.y.v[i] + u;
    }
  } else {
    for (size_t i = 0; i < t.y.v.size(); ++i) {
      double r = gaussian_support_radius(t.sigma.v[i]);
      t.y_hat.v[i] = std::clamp(std::nearbyint(t.y.v[i]), -r, r);
    }
  }

  conv_forward(t.y_hat, model.synthesis[0], t.d1);
  apply_leaky(t.d1, t.e1);
  upsample2(t.e1, t.v1);
  conv_forward(t.v1, model.synthesis[1], t.d2);
  apply_leaky(t.d2, t.e2);
  upsample2(t.e2, t.v2);
  conv_forward(t.v2, model.synthesis[2], t.xh);

  ForwardResult out;
  out.numel = x.element_count();
  out.x_hat.rows = x.rows;
  out.x_hat.cols = x.cols;
  out.x_hat.cnn_origin = x.cnn_origin;
  out.x_hat.arch = x.arch;
  out.x_hat.label = x.label;
  out.x_hat.data.resize(out.numel);
  for (int y = 0; y < t.rows0; ++y) {
    for (int xx = 0; xx < t.cols0; ++xx) {
      double rec = t.xh.at(0, y, xx);
      double ref = x0.at(0, y, xx);
      out.sum_se += (rec - ref) * (rec - ref);
      out.x_hat.data[static_cast<size_t>(y) * t.cols0 + xx] = static_cast<float>(rec);
    }
  }

  FactorizedWork fwork(model.factorized);
  for (int c = 0; c < t.z_hat.ch; ++c) {
    for (int y = 0; y < t.z_hat.rows; ++y) {
      for (int xx = 0; xx < t.z_hat.cols; ++xx) {
        double zh = t.z_hat.at(c, y, xx);
        double p = fwork.eval(c, zh + 0.5).cdf - fwork.eval(c, zh - 0.5).cdf;
        out.rate_z_bits += -std::log2(std::max(p, kMinLikelihood));
      }
    }
  }
  for (size_t i = 0; i < t.y_hat.v.size(); ++i) {
    double p = std::max(gaussian_bin_prob(t.y_hat.v[i], t.sigma.v[i]), kMinLikelihood);
    out.rate_y_bits += -std::log2(p);
  }

  if (!std::isfinite(out.rate_y_bits) || !std::isfinite(out.rate_z_bits) ||
      !std::isfinite(out.sum_se)) {
    fail("codec forward: non-finite activations (training diverged?)");
  }

  out.y_hat = t.y_hat;
  out.z_hat = t.z_hat;
  out.sigma = t.sigma;
  return out;
}

double rd_loss_value(double bpfp, double distortion, double lambda) {
  return bpfp + lambda * distortion;
}

}  // namespace caufc
