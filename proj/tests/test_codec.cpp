#include <cmath>

#include "caufc/codec/bitstream.hpp"
#include "caufc/codec/forward.hpp"
#include "caufc/codec/model.hpp"
#include "doctest.h"
#include "grad_oracle.hpp"
#include "test_util.hpp"

using namespace caufc;

namespace {

// Independent quadrature oracle: composite Simpson over the unit bin of a
// zero-mean Gaussian with scale sigma. No erf anywhere.
double simpson_bin_mass(double center, double sigma, int steps = 4001) {
  auto pdf = [&](double x) {
    double t = x / sigma;
    return std::exp(-0.5 * t * t) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
  };
  double a = center - 0.5, b = center + 0.5;
  double h = (b - a) / (steps - 1);
  double acc = pdf(a) + pdf(b);
  for (int i = 1; i < steps - 1; ++i) acc += pdf(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

TokenMatrix random_tokens(uint32_t rows, uint32_t cols, uint64_t seed) {
  SplitMix rng(seed);
  TokenMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.resize(m.element_count());
  for (auto& v : m.data) v = static_cast<float>(rng.next_unit());
  return m;
}

}  // namespace

TEST_CASE("gaussian likelihood matches the quadrature oracle") {
  // The frozen value for the unit bin around zero at sigma=1.
  CHECK(gaussian_likelihood(0.0, 1.0) == doctest::Approx(0.382925).epsilon(1e-5));

  for (double v : {0.0, 0.5, 1.0, 3.0, -2.0}) {
    for (double s : {0.05, 0.5, 1.0, 4.0}) {
      double oracle = simpson_bin_mass(v, s);
      double got = gaussian_likelihood(v, s);
      CHECK(std::abs(got - std::max(oracle, 0x1.0p-32)) <= 1e-7);
    }
  }
}

TEST_CASE("gaussian likelihood symmetry and limits") {
  for (double v : {0.25, 1.0, 2.5, 7.0}) {
    CHECK(gaussian_likelihood(v, 1.3) == gaussian_likelihood(-v, 1.3));
  }
  // Large sigma: mass of a unit bin tends to width/(sigma*sqrt(2*pi)).
  double s = 1e6;
  double want = 1.0 / (s * std::sqrt(2.0 * 3.14159265358979323846));
  CHECK(gaussian_likelihood(0.0, s) == doctest::Approx(want).epsilon(1e-3));
  CHECK(gaussian_likelihood(0.0, s) > 0.0);
  // Far tail clamps to the floor instead of zero.
  CHECK(gaussian_likelihood(5000.0, 0.05) == 0x1.0p-32);
  // Sigma below the floor is a caller bug.
  CHECK_THROWS_AS(gaussian_likelihood(0.0, 0.001), Error);
}

TEST_CASE("factorized prior: fresh model is symmetric and integrates to one") {
  CodecModel m = CodecModel::init(1);
  FactorizedPrior& f = m.factorized;
  // c(0) = 0.5 read off through bin probabilities: mass below zero equals
  // mass above by symmetry of equal segment weights.
  double below = 0.0, above = 0.0, total = 0.0;
  for (int s = -f.radius; s <= f.radius; ++s) {
    double p = factorized_likelihood(m, 0, static_cast<double>(s));
    total += p;
    if (s < 0) below += p;
    if (s > 0) above += p;
  }
  CHECK(below == doctest::Approx(above).epsilon(1e-12));
  // Direct-summation oracle: integer bins tile the knot range exactly.
  CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("factorized prior stays monotone for random weights") {
  CodecModel m = CodecModel::init(2);
  SplitMix rng(77);
  for (auto& w : m.factorized.w) w = static_cast<float>(3.0 * rng.next_gaussian());
  for (int ch = 0; ch < m.factorized.channels; ++ch) {
    double prev = -1.0;
    double run = 0.0;
    for (int s = -m.factorized.radius; s <= m.factorized.radius; ++s) {
      run += factorized_likelihood(m, ch, static_cast<double>(s));
      CHECK(run >= prev);  // cumulative sums never decrease
      prev = run;
    }
    CHECK(run <= 1.0 + 1e-6);
  }
  CHECK_THROWS_AS(factorized_likelihood(m, 99, 0.0), Error);
}

TEST_CASE("latent shapes follow the stride arithmetic (49x2048 pads to 52)") {
  CodecModel m = CodecModel::init(3);
  LatentShape s = latent_shape(m, 49, 2048);
  CHECK(s.y_rows == 13);  // 52 / 4
  CHECK(s.y_cols == 512);
  CHECK(s.y_ch == 8);
  CHECK(s.z_rows == 7);  // y rows padded 13 -> 14, then / 2
  CHECK(s.z_cols == 256);
  CHECK(s.z_ch == 4);
}

TEST_CASE("forward pads, crops and reports nonnegative rates") {
  CodecModel m = CodecModel::init(4);
  TokenMatrix x = random_tokens(13, 18, 5);
  Trace tr;
  ForwardResult r = forward(m, x, QuantMode::EvalRound, nullptr, &tr);
  CHECK(tr.x_pad.rows == 16);
  CHECK(tr.x_pad.cols == 20);
  CHECK(r.x_hat.rows == 13);
  CHECK(r.x_hat.cols == 18);
  CHECK(r.rate_y_bits >= 0.0);
  CHECK(r.rate_z_bits >= 0.0);
  CHECK(r.numel == 13 * 18);
  for (double v : r.sigma.v) CHECK(v >= CodecModel::kScaleFloor);
}

TEST_CASE("forward rejects inputs below the receptive minimum") {
  CodecModel m = CodecModel::init(5);
  TokenMatrix x = random_tokens(2, 2, 6);
  CHECK_THROWS_WITH_AS(forward(m, x, QuantMode::EvalRound), doctest::Contains("minimum"), Error);
}

TEST_CASE("quantizer agreement: zero noise on integer latents equals rounding") {
  CodecModel m = CodecModel::init(6);
  // Zero all conv weights and pin integer biases so both latents are exact
  // integers; then TrainNoise-with-zero-noise and EvalRound must coincide.
  for (auto* arr : m.param_arrays()) std::fill(arr->begin(), arr->end(), 0.0f);
  const float y_bias[8] = {2, -1, 0, 3, 1, -2, 0, 1};
  for (int oc = 0; oc < 8; ++oc) m.analysis[2].b[oc] = y_bias[oc];
  const float z_bias[4] = {1, 0, -2, 2};
  for (int oc = 0; oc < 4; ++oc) m.hyper_analysis[1].b[oc] = z_bias[oc];

  TokenMatrix x = random_tokens(8, 8, 7);
  ForwardResult noise0 = forward(m, x, QuantMode::TrainNoise, nullptr);
  ForwardResult rounded = forward(m, x, QuantMode::EvalRound);
  CHECK(noise0.y_hat.v == rounded.y_hat.v);
  CHECK(noise0.z_hat.v == rounded.z_hat.v);
  CHECK(noise0.x_hat.data == rounded.x_hat.data);
  CHECK(noise0.rate_y_bits == doctest::Approx(rounded.rate_y_bits).epsilon(1e-12));
}

TEST_CASE("eval rounding always lands on the nearest integer") {
  CodecModel m = CodecModel::init(8);
  TokenMatrix x = random_tokens(12, 12, 9);
  Trace tr;
  forward(m, x, QuantMode::EvalRound, nullptr, &tr);
  for (size_t i = 0; i < tr.y.v.size(); ++i) {
    double q = tr.y_hat.v[i];
    CHECK(q == std::nearbyint(q));  // integral
    CHECK(std::abs(tr.y.v[i] - q) <= 0.5 + 1e-12);
  }
}

TEST_CASE("rd loss arithmetic") {
  CHECK(rd_loss_value(0.5, 2.0, 0.01) == doctest::Approx(0.52).epsilon(1e-12));
  CHECK(rd_loss_value(0.37, 0.0, 0.01) == doctest::Approx(0.37));  // zero distortion
  CHECK(rd_loss_value(0.37, 123.0, 0.0) == doctest::Approx(0.37));  // rate-only
}

TEST_CASE("gradient check: analytic backward matches central differences") {
  CodecModel model = CodecModel::init(11);
  TokenMatrix x = random_tokens(8, 8, 12);
  const double lambda = 0.02;
  LatentShape shape = latent_shape(model, 8, 8);
  NoiseBuffers noise = make_noise(99, 0, shape.y_count(), shape.z_count());

  Trace trace;
  forward(model, x, QuantMode::TrainNoise, &noise, &trace);
  Gradients g = backward(model, trace, x, lambda);

  auto params = model.param_arrays();
  REQUIRE(g.arrays.size() == params.size());

  SplitMix pick(314159);
  size_t checked = 0, skipped = 0;
  for (size_t a = 0; a < params.size(); ++a) {
    auto& arr = *params[a];
    REQUIRE(g.arrays[a].size() == arr.size());
    // A few entries per array keeps the unit test quick; the acceptance
    // suite sweeps a 10% sample of every array.
    size_t probes = std::min<size_t>(arr.size(), 3);
    for (size_t t = 0; t < probes; ++t) {
      size_t i = pick.next_u64() % arr.size();
      auto probe = gradcheck::fd_probe(model, arr, i, x, lambda, noise);
      if (!probe.valid) {
        ++skipped;  // window straddles an activation kink
        continue;
      }
      double rel = std::abs(g.arrays[a][i] - probe.fd) / std::max(1e-8, std::abs(probe.fd));
      INFO("array ", a, " index ", i, " analytic ", g.arrays[a][i], " fd ", probe.fd);
      CHECK(rel <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 40);
  CHECK(skipped <= checked / 4);
}

TEST_CASE("distortion gradient: zero input and weights give zero analysis grads") {
  CodecModel model = CodecModel::init(13);
  for (auto* arr : model.param_arrays()) std::fill(arr->begin(), arr->end(), 0.0f);
  TokenMatrix x;
  x.rows = 8;
  x.cols = 8;
  x.data.assign(64, 0.0f);

  LatentShape shape = latent_shape(model, 8, 8);
  NoiseBuffers noise = make_noise(5, 0, shape.y_count(), shape.z_count());

  auto grads_at = [&](double lambda) {
    Trace tr;
    forward(model, x, QuantMode::TrainNoise, &noise, &tr);
    return backward(model, tr, x, lambda);
  };
  Gradients with = grads_at(1.0);
  Gradients without = grads_at(0.0);
  // The distortion contribution is the lambda difference; analysis weights
  // must receive none of it here.
  for (int slot = 0; slot < 6; ++slot) {
    for (size_t i = 0; i < with.arrays[slot].size(); ++i) {
      CHECK(with.arrays[slot][i] - without.arrays[slot][i] == doctest::Approx(0.0).epsilon(1e-15));
    }
  }
}

TEST_CASE("distortion gradient scales linearly in lambda") {
  CodecModel model = CodecModel::init(17);
  TokenMatrix x = random_tokens(8, 8, 18);
  LatentShape shape = latent_shape(model, 8, 8);
  NoiseBuffers noise = make_noise(6, 0, shape.y_count(), shape.z_count());

  auto grads_at = [&](double lambda) {
    Trace tr;
    forward(model, x, QuantMode::TrainNoise, &noise, &tr);
    return backward(model, tr, x, lambda);
  };
  Gradients g0 = grads_at(0.0);
  Gradients g1 = grads_at(0.01);
  Gradients g2 = grads_at(0.02);
  for (size_t a = 0; a < g0.arrays.size(); ++a) {
    for (size_t i = 0; i < g0.arrays[a].size(); ++i) {
      double d1 = g1.arrays[a][i] - g0.arrays[a][i];
      double d2 = g2.arrays[a][i] - g0.arrays[a][i];
      CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("model save/load round-trip preserves the hash") {
  testutil::TempDir tmp;
  CodecModel m = CodecModel::init(21);
  auto path = tmp.path() / "model.cafm";
  save_model(m, path);
  CodecModel back = load_model(path);
  CHECK(back.hash() == m.hash());
  CHECK(back.factorized.radius == m.factorized.radius);
  CHECK(back.analysis[0].w == m.analysis[0].w);
  CHECK(encode_model(back) == encode_model(m));
}

TEST_CASE("model hash tracks every parameter byte") {
  CodecModel m = CodecModel::init(22);
  uint64_t h0 = m.hash();
  m.synthesis[1].w[123] += 1e-6f;
  CHECK(m.hash() != h0);
}

TEST_CASE("corrupt model files are rejected") {
  testutil::TempDir tmp;
  CodecModel m = CodecModel::init(23);
  auto bytes = encode_model(m);
  bytes[bytes.size() / 2] ^= 0x40;  // flip a parameter bit
  CHECK_THROWS_WITH_AS(decode_model(bytes), doctest::Contains("hash"), Error);
  bytes = encode_model(m);
  bytes[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_model(bytes), doctest::Contains("magic"), Error);
}
