#pragma once

// Finite-difference oracle for the codec backward pass, independent of the
// analytic gradient code. Central differences start at the nominal 1e-3
// step; the quotient is accepted once two successive step sizes agree,
// which rejects probes whose window straddles an activation kink (the loss
// is only piecewise smooth in leaky/abs nonlinearities). Perturbed values
// are re-read after f32 rounding so the divisor is the realized step.

#include <cmath>

#include "caufc/codec/forward.hpp"

namespace gradcheck {

struct Probe {
  bool valid = false;
  double fd = 0.0;
};

inline Probe fd_probe(caufc::CodecModel& model, std::vector<float>& arr, size_t index,
                      const caufc::TokenMatrix& x, double lambda,
                      const caufc::NoiseBuffers& noise) {
  using namespace caufc;
  auto loss_now = [&]() {
    ForwardResult r = forward(model, x, QuantMode::TrainNoise, &noise);
    return rd_loss_value(r.bpfp(), r.sum_se, lambda);
  };

  const float orig = arr[index];
  double prev = 0.0;
  bool have_prev = false;
  Probe out;
  for (double h : {1e-3, 1e-4, 1e-5}) {
    arr[index] = static_cast<float>(static_cast<double>(orig) + h);
    double hi_v = static_cast<double>(arr[index]);
    double f_hi = loss_now();
    arr[index] = static_cast<float>(static_cast<double>(orig) - h);
    double lo_v = static_cast<double>(arr[index]);
    double f_lo = loss_now();
    arr[index] = orig;
    double fd = (f_hi - f_lo) / (hi_v - lo_v);
    if (have_prev && std::abs(fd - prev) <= std::max(1e-7, 2e-4 * std::abs(fd))) {
      out.valid = true;
      out.fd = fd;
      return out;
    }
    prev = fd;
    have_prev = true;
  }
  return out;
}

}  // namespace gradcheck
