#include "caufc/alignment.hpp"

#include <algorithm>
#include <cmath>

namespace caufc {

void AlignmentSpec::validate() const {
  if (!(trunc_lo < trunc_hi)) fail("alignment spec: trunc_lo must be < trunc_hi");
  if (!(norm_lo < norm_hi)) fail("alignment spec: norm_lo must be < norm_hi");
  if (!std::isfinite(trunc_lo) || !std::isfinite(trunc_hi) || !std::isfinite(norm_lo) ||
      !std::isfinite(norm_hi)) {
    fail("alignment spec: bounds must be finite");
  }
  if (mode == NormMode::Standard) {
    if (norm_lo != trunc_lo || norm_hi != trunc_hi) {
      fail("alignment spec: standard mode requires norm bounds equal to truncation bounds");
    }
  } else {
    if (!(norm_lo <= trunc_lo)) {
      fail("alignment spec: shifted mode requires norm_lo <= trunc_lo");
    }
  }
}

AlignmentSpec AlignmentSpec::vit_default() {
  return AlignmentSpec{-5.0, 5.0, NormMode::Standard, -5.0, 5.0};
}

AlignmentSpec AlignmentSpec::cnn_default() {
  return AlignmentSpec{0.0, 5.0, NormMode::Shifted, -5.0, 5.0};
}

void AlignmentSpec::serialize(std::vector<uint8_t>& out) const {
  put_u8(out, static_cast<uint8_t>(mode));
  put_f32(out, static_cast<float>(trunc_lo));
  put_f32(out, static_cast<float>(trunc_hi));
  put_f32(out, static_cast<float>(norm_lo));
  put_f32(out, static_cast<float>(norm_hi));
}

AlignmentSpec AlignmentSpec::deserialize(ByteReader& r) {
  AlignmentSpec s;
  uint8_t mode_raw = r.u8("norm mode");
  if (mode_raw > 1) fail("bad normalization mode byte " + std::to_string(mode_raw));
  s.mode = static_cast<NormMode>(mode_raw);
  s.trunc_lo = r.f32("trunc_lo");
  s.trunc_hi = r.f32("trunc_hi");
  s.norm_lo = r.f32("norm_lo");
  s.norm_hi = r.f32("norm_hi");
  s.validate();
  return s;
}

void TokenMatrix::validate() const {
  if (rows == 0 || cols == 0) fail("token matrix has a zero dimension");
  if (data.size() != element_count()) fail("token matrix data length mismatch");
  if (cnn_origin) {
    const auto& o = *cnn_origin;
    if (static_cast<uint64_t>(o.h) * o.w != rows || o.n != cols) {
      fail("token matrix origin mismatch: expected " + std::to_string(o.h * o.w) + "x" +
           std::to_string(o.n) + ", matrix is " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
}

TokenMatrix tokenize(const FeatureTensor& t) {
  t.validate();
  TokenMatrix m;
  m.arch = t.arch;
  m.label = t.label;
  if (t.layout == Layout::Tokens2D) {
    m.rows = t.dims[0];
    m.cols = t.dims[1];
    m.data = t.data;
    m.cnn_origin = std::nullopt;
    return m;
  }
  uint32_t n = t.dims[0], h = t.dims[1], w = t.dims[2];
  m.rows = h * w;
  m.cols = n;
  m.cnn_origin = CnnShape{n, h, w};
  m.data.resize(m.element_count());
  // Gather all channel values at one spatial location into one token:
  // token r = h_i*W + w_i, column c = channel index.
  const size_t plane = static_cast<size_t>(h) * w;
  for (uint32_t c = 0; c < n; ++c) {
    const float* src = t.data.data() + static_cast<size_t>(c) * plane;
    for (size_t r = 0; r < plane; ++r) {
      m.data[r * n + c] = src[r];
    }
  }
  return m;
}

FeatureTensor detokenize(const TokenMatrix& m) {
  m.validate();
  FeatureTensor t;
  t.arch = m.arch;
  t.label = m.label;
  if (!m.cnn_origin) {
    t.layout = Layout::Tokens2D;
    t.dims = {m.rows, m.cols};
    t.data = m.data;
    return t;
  }
  const auto& o = *m.cnn_origin;
  t.layout = Layout::ChannelMajor3D;
  t.dims = {o.n, o.h, o.w};
  t.data.resize(m.element_count());
  const size_t plane = static_cast<size_t>(o.h) * o.w;
  for (uint32_t c = 0; c < o.n; ++c) {
    float* dst = t.data.data() + static_cast<size_t>(c) * plane;
    for (size_t r = 0; r < plane; ++r) {
      dst[r] = m.data[r * o.n + c];
    }
  }
  return t;
}

TokenMatrix truncate(TokenMatrix m, double lo, double hi) {
  if (!(lo < hi)) fail("truncate: lo must be < hi");
  m.validate();
  const float flo = static_cast<float>(lo), fhi = static_cast<float>(hi);
  for (float& v : m.data) v = std::clamp(v, flo, fhi);
  return m;
}

TokenMatrix normalize(TokenMatrix m, const AlignmentSpec& spec) {
  spec.validate();
  m.validate();
  const double width = spec.norm_hi - spec.norm_lo;
  for (float& v : m.data) {
    if (v < spec.trunc_lo || v > spec.trunc_hi) {
      fail("normalize: element " + std::to_string(v) + " outside truncation range [" +
           std::to_string(spec.trunc_lo) + ", " + std::to_string(spec.trunc_hi) +
           "]; truncate first");
    }
    v = static_cast<float>((static_cast<double>(v) - spec.norm_lo) / width);
  }
  return m;
}

TokenMatrix denormalize(TokenMatrix m, const AlignmentSpec& spec) {
  spec.validate();
  m.validate();
  const double width = spec.norm_hi - spec.norm_lo;
  for (float& v : m.data) {
    v = static_cast<float>(static_cast<double>(v) * width + spec.norm_lo);
  }
  return m;
}

TokenMatrix align(const FeatureTensor& t, const AlignmentSpec& spec) {
  return normalize(truncate(tokenize(t), spec.trunc_lo, spec.trunc_hi), spec);
}

FeatureTensor unalign(const TokenMatrix& m, const AlignmentSpec& spec) {
  return detokenize(denormalize(m, spec));
}

}  // namespace caufc
