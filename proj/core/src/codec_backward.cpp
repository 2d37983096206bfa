#include <algorithm>
#include <cmath>

#include "caufc/codec/forward.hpp"
#include "codec_math.hpp"

namespace caufc {

using namespace detail;

Gradients Gradients::zeros_like(const CodecModel& m) {
  Gradients g;
  for (const auto* arr : m.param_arrays()) g.arrays.emplace_back(arr->size(), 0.0);
  return g;
}

void Gradients::accumulate(const Gradients& other, double s) {
  for (size_t a = 0; a < arrays.size(); ++a) {
    const auto& src = other.arrays[a];
    auto& dst = arrays[a];
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  }
}

void Gradients::scale(double s) {
  for (auto& arr : arrays) {
    for (auto& v : arr) v *= s;
  }
}

namespace {

struct GradSlots {
  // Index of each array inside Gradients::arrays, following param order:
  // analysis(w,b)x3, hyper_analysis x2, hyper_synthesis x2, synthesis x3,
  // factorized.
  static constexpr int kAnalysis = 0;
  static constexpr int kHyperAnalysis = 6;
  static constexpr int kHyperSynthesis = 10;
  static constexpr int kSynthesis = 14;
  static constexpr int kFactorized = 20;
};

void leaky_backward(const Grid& pre, const Grid& d_post, Grid& d_pre) {
  d_pre.resize(pre.ch, pre.rows, pre.cols);
  for (size_t i = 0; i < pre.v.size(); ++i) d_pre.v[i] = d_post.v[i] * leaky_grad(pre.v[i]);
}

}  // namespace

Gradients backward(const CodecModel& model, const Trace& t, const TokenMatrix& x, double lambda) {
  Gradients g = Gradients::zeros_like(model);
  const double inv_n = 1.0 / static_cast<double>(x.element_count());

  // --- distortion head: d loss / d x_hat over the cropped region ---
  Grid d_xh;
  d_xh.resize(1, t.xh.rows, t.xh.cols);
  for (int y = 0; y < t.rows0; ++y) {
    for (int xx = 0; xx < t.cols0; ++xx) {
      double rec = t.xh.at(0, y, xx);
      double ref = static_cast<double>(x.data[static_cast<size_t>(y) * t.cols0 + xx]);
      d_xh.at(0, y, xx) = 2.0 * lambda * (rec - ref);
    }
  }

  // --- synthesis backward ---
  Grid d_v2;
  d_v2.resize(t.v2.ch, t.v2.rows, t.v2.cols);
  conv_backward(t.v2, model.synthesis[2], d_xh, &d_v2, g.arrays[GradSlots::kSynthesis + 4],
                g.arrays[GradSlots::kSynthesis + 5]);
  Grid d_e2;
  d_e2.resize(t.e2.ch, t.e2.rows, t.e2.cols);
  upsample2_backward(d_v2, d_e2);
  Grid d_d2;
  leaky_backward(t.d2, d_e2, d_d2);

  Grid d_v1;
  d_v1.resize(t.v1.ch, t.v1.rows, t.v1.cols);
  conv_backward(t.v1, model.synthesis[1], d_d2, &d_v1, g.arrays[GradSlots::kSynthesis + 2],
                g.arrays[GradSlots::kSynthesis + 3]);
  Grid d_e1;
  d_e1.resize(t.e1.ch, t.e1.rows, t.e1.cols);
  upsample2_backward(d_v1, d_e1);
  Grid d_d1;
  leaky_backward(t.d1, d_e1, d_d1);

  Grid d_y_hat;
  d_y_hat.resize(t.y_hat.ch, t.y_hat.rows, t.y_hat.cols);
  conv_backward(t.y_hat, model.synthesis[0], d_d1, &d_y_hat, g.arrays[GradSlots::kSynthesis + 0],
                g.arrays[GradSlots::kSynthesis + 1]);

  // --- main-latent rate term: d/d y_hat and d/d sigma ---
  Grid d_sigma;
  d_sigma.resize(t.sigma.ch, t.sigma.rows, t.sigma.cols);
  for (size_t i = 0; i < t.y_hat.v.size(); ++i) {
    double v = t.y_hat.v[i];
    double s = t.sigma.v[i];
    double p = gaussian_bin_prob(v, s);
    if (p > kMinLikelihood) {
      double dv, ds;
      gaussian_bin_prob_grad(v, s, dv, ds);
      double coef = -inv_n / (p * kLn2);
      d_y_hat.v[i] += coef * dv;
      d_sigma.v[i] = coef * ds;
    }
  }

  // --- scale head backward: sigma = floor + softplus(raw) ---
  Grid d_raw;
  d_raw.resize(t.raw.ch, t.raw.rows, t.raw.cols);
  for (int c = 0; c < t.sigma.ch; ++c) {
    for (int y = 0; y < t.sigma.rows; ++y) {
      for (int xx = 0; xx < t.sigma.cols; ++xx) {
        d_raw.at(c, y, xx) = d_sigma.at(c, y, xx) * sigmoid(t.raw.at(c, y, xx));
      }
    }
  }

  Grid d_u1;
  d_u1.resize(t.u1.ch, t.u1.rows, t.u1.cols);
  conv_backward(t.u1, model.hyper_synthesis[1], d_raw, &d_u1,
                g.arrays[GradSlots::kHyperSynthesis + 2], g.arrays[GradSlots::kHyperSynthesis + 3]);
  Grid d_t1;
  d_t1.resize(t.t1.ch, t.t1.rows, t.t1.cols);
  upsample2_backward(d_u1, d_t1);
  Grid d_s1;
  leaky_backward(t.s1, d_t1, d_s1);

  Grid d_z_hat;
  d_z_hat.resize(t.z_hat.ch, t.z_hat.rows, t.z_hat.cols);
  conv_backward(t.z_hat, model.hyper_synthesis[0], d_s1, &d_z_hat,
                g.arrays[GradSlots::kHyperSynthesis + 0], g.arrays[GradSlots::kHyperSynthesis + 1]);

  // --- hyper-latent rate term: d/d z_hat plus factorized weight grads ---
  FactorizedWork fwork(model.factorized);
  const int segs = fwork.segments;
  auto& d_fw = g.arrays[GradSlots::kFactorized];
  std::vector<double> global_coef(fwork.channels, 0.0);
  for (int c = 0; c < t.z_hat.ch; ++c) {
    for (int y = 0; y < t.z_hat.rows; ++y) {
      for (int xx = 0; xx < t.z_hat.cols; ++xx) {
        double zh = t.z_hat.at(c, y, xx);
        auto lo = fwork.eval(c, zh - 0.5);
        auto hi = fwork.eval(c, zh + 0.5);
        double p = hi.cdf - lo.cdf;
        if (p <= kMinLikelihood) continue;
        double coef = -inv_n / (p * kLn2);
        d_z_hat.at(c, y, xx) += coef * (fwork.density(c, hi) - fwork.density(c, lo));

        // Sparse part of d p / d w_k: only segments touched by the bin.
        int k_lo = std::max(0, lo.j);
        int k_hi = std::min(segs - 1, hi.j);
        for (int k = k_lo; k <= k_hi; ++k) {
          double i_hi = k < hi.j ? 1.0 : (k == hi.j ? hi.frac : 0.0);
          double i_lo = k < lo.j ? 1.0 : (k == lo.j ? lo.frac : 0.0);
          double delta = i_hi - i_lo;
          if (delta != 0.0) {
            d_fw[static_cast<size_t>(c) * segs + k] += coef * delta;
          }
        }
        // Rank-one part (-p per weight) folds into one scalar per channel.
        global_coef[c] += coef * p;
      }
    }
  }
  for (int c = 0; c < fwork.channels; ++c) {
    const float* w = model.factorized.channel_w(c);
    double inv_total = 1.0 / fwork.total[c];
    for (int k = 0; k < segs; ++k) {
      size_t at = static_cast<size_t>(c) * segs + k;
      // Both parts carry sigmoid(w_k)/S.
      d_fw[at] = (d_fw[at] - global_coef[c]) * sigmoid(static_cast<double>(w[k])) * inv_total;
    }
  }

  // --- hyper analysis backward ---
  Grid d_g1;
  d_g1.resize(t.g1.ch, t.g1.rows, t.g1.cols);
  conv_backward(t.g1, model.hyper_analysis[1], d_z_hat, &d_g1,
                g.arrays[GradSlots::kHyperAnalysis + 2], g.arrays[GradSlots::kHyperAnalysis + 3]);
  Grid d_b1;
  leaky_backward(t.b1, d_g1, d_b1);
  Grid d_ay_pad;
  d_ay_pad.resize(t.ay_pad.ch, t.ay_pad.rows, t.ay_pad.cols);
  conv_backward(t.ay_pad, model.hyper_analysis[0], d_b1, &d_ay_pad,
                g.arrays[GradSlots::kHyperAnalysis + 0], g.arrays[GradSlots::kHyperAnalysis + 1]);

  Grid d_ay;
  pad_to_multiple_backward(d_ay_pad, t.y.rows, t.y.cols, d_ay);

  // --- join heads into the main latent: noise quantizer is identity ---
  Grid d_y = d_y_hat;
  for (size_t i = 0; i < t.y.v.size(); ++i) {
    double s = t.y.v[i] > 0.0 ? 1.0 : (t.y.v[i] < 0.0 ? -1.0 : 0.0);
    d_y.v[i] += d_ay.v[i] * s;
  }

  // --- analysis backward ---
  Grid d_h2;
  d_h2.resize(t.h2.ch, t.h2.rows, t.h2.cols);
  conv_backward(t.h2, model.analysis[2], d_y, &d_h2, g.arrays[GradSlots::kAnalysis + 4],
                g.arrays[GradSlots::kAnalysis + 5]);
  Grid d_a2;
  leaky_backward(t.a2, d_h2, d_a2);
  Grid d_h1;
  d_h1.resize(t.h1.ch, t.h1.rows, t.h1.cols);
  conv_backward(t.h1, model.analysis[1], d_a2, &d_h1, g.arrays[GradSlots::kAnalysis + 2],
                g.arrays[GradSlots::kAnalysis + 3]);
  Grid d_a1;
  leaky_backward(t.a1, d_h1, d_a1);
  conv_backward(t.x_pad, model.analysis[0], d_a1, nullptr, g.arrays[GradSlots::kAnalysis + 0],
                g.arrays[GradSlots::kAnalysis + 1]);

  for (const auto& arr : g.arrays) {
    for (double v : arr) {
      if (!std::isfinite(v)) fail("codec backward: non-finite gradient (training diverged?)");
    }
  }
  return g;
}

}  // namespace caufc
