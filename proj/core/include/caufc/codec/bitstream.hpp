#pragma once

// Self-describing compressed container (CAFB):
//   magic "CAFB" | version u8 | model_hash u64 |
//   alignment spec (mode u8, trunc_lo/trunc_hi/norm_lo/norm_hi f32) |
//   layout u8 | dims u32 x (3|2) | pad_info u16 x 2 (token rows, cols) |
//   z payload length u32 + bytes | y payload length u32 + bytes
//
// The hyper latent is coded first with the per-channel factorized tables;
// the main latent follows under Gaussian tables conditioned on the decoded
// hyper latent, so the decoder can rebuild every table it needs in order.

#include <filesystem>

#include "caufc/alignment.hpp"
#include "caufc/codec/forward.hpp"
#include "caufc/codec/model.hpp"

namespace caufc {

inline constexpr uint8_t kBitstreamVersion = 1;

struct Bitstream {
  uint64_t model_hash = 0;
  AlignmentSpec spec;
  Layout layout = Layout::Tokens2D;
  std::vector<uint32_t> dims;
  uint16_t token_rows = 0;  // pre-padding token matrix shape
  uint16_t token_cols = 0;
  std::vector<uint8_t> z_payload;
  std::vector<uint8_t> y_payload;

  size_t payload_bits() const { return 8 * (z_payload.size() + y_payload.size()); }
};

std::vector<uint8_t> encode_bitstream(const Bitstream& b);
Bitstream decode_bitstream(const std::vector<uint8_t>& bytes);
void write_bitstream(const Bitstream& b, const std::filesystem::path& path);
Bitstream read_bitstream(const std::filesystem::path& path);

struct EncodeStats {
  double bits_estimate = 0.0;
  size_t payload_bits = 0;
  double mse = 0.0;  // vs the original tensor, in its original value domain
  size_t numel = 0;
  double bpfp() const { return static_cast<double>(payload_bits) / static_cast<double>(numel); }
};

Bitstream encode(const CodecModel& model, const FeatureTensor& t, const AlignmentSpec& spec,
                 EncodeStats* stats = nullptr);

// Rebuilds the feature in its original layout; fails fast on a model-hash
// mismatch so the wrong model can never silently decode.
FeatureTensor decode(const CodecModel& model, const Bitstream& b);

// Decoder-side building blocks, shared with encode() so both ends follow
// bit-identical arithmetic.
Grid scales_from_hyper(const CodecModel& model, const Grid& z_hat, int y_rows, int y_cols);
TokenMatrix synthesize_tokens(const CodecModel& model, const Grid& y_hat, int rows, int cols);

}  // namespace caufc
