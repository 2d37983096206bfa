#pragma once

// Two-step distribution alignment: format alignment turns any feature into
// a 2D token matrix (one token per spatial location for channel-major maps),
// value alignment clips to a fixed range and maps it affinely into [0, 1].
// Everything except the clip is exactly invertible.

#include <cstdint>
#include <optional>
#include <vector>

#include "caufc/tensor.hpp"

namespace caufc {

enum class NormMode : uint8_t { Standard = 0, Shifted = 1 };

struct AlignmentSpec {
  double trunc_lo = -5.0;
  double trunc_hi = 5.0;
  NormMode mode = NormMode::Standard;
  double norm_lo = -5.0;
  double norm_hi = 5.0;

  void validate() const;

  // Presets matching the default operating points: token features keep
  // their own bounds, channel-major features borrow the lower bound of the
  // token range so their one-sided mass lands in the upper half of [0,1].
  static AlignmentSpec vit_default();
  static AlignmentSpec cnn_default();

  void serialize(std::vector<uint8_t>& out) const;  // mode u8 | 4 x f32 LE
  static AlignmentSpec deserialize(ByteReader& r);

  bool operator==(const AlignmentSpec&) const = default;
};

struct CnnShape {
  uint32_t n = 0, h = 0, w = 0;
  bool operator==(const CnnShape&) const = default;
};

// M' x L' matrix of tokens. origin records how to fold the matrix back into
// the source layout; arch/label ride along so a full round-trip loses nothing.
struct TokenMatrix {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<float> data;  // row-major, rows*cols
  std::optional<CnnShape> cnn_origin;  // nullopt = native token layout
  Arch arch = Arch::Unknown;
  std::optional<uint32_t> label;

  size_t element_count() const { return static_cast<size_t>(rows) * cols; }
  float& at(uint32_t r, uint32_t c) { return data[static_cast<size_t>(r) * cols + c]; }
  float at(uint32_t r, uint32_t c) const { return data[static_cast<size_t>(r) * cols + c]; }
  void validate() const;
};

// (N,H,W) -> (H*W) x N with row index h*W+w; token layouts pass through.
TokenMatrix tokenize(const FeatureTensor& t);

// Exact inverse of tokenize, including layout and dims.
FeatureTensor detokenize(const TokenMatrix& m);

// Clamp every element into [lo, hi]. Idempotent; the only lossy step.
TokenMatrix truncate(TokenMatrix m, double lo, double hi);

// x -> (x - norm_lo) / (norm_hi - norm_lo). Elements must already sit inside
// the truncation range, otherwise truncate() was skipped and we refuse.
TokenMatrix normalize(TokenMatrix m, const AlignmentSpec& spec);

// Inverse affine map; round-trips within 1e-6 absolute.
TokenMatrix denormalize(TokenMatrix m, const AlignmentSpec& spec);

// normalize(truncate(tokenize(t))).
TokenMatrix align(const FeatureTensor& t, const AlignmentSpec& spec);

// detokenize(denormalize(m)); inverts align() exactly for in-range values.
FeatureTensor unalign(const TokenMatrix& m, const AlignmentSpec& spec);

}  // namespace caufc
