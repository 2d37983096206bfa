#pragma once

// Quantized cumulative-frequency tables for the range coder. Probabilities
// are scaled to a fixed 16-bit total; every in-support symbol keeps at least
// one frequency unit so no interval ever collapses.

#include <cstdint>
#include <span>
#include <vector>

#include "caufc/common.hpp"

namespace caufc::entropy {

inline constexpr uint32_t kFreqBits = 16;
inline constexpr uint32_t kFreqTotal = 1u << kFreqBits;  // 65536
inline constexpr double kMinProb = 0x1.0p-32;            // likelihood floor

struct CdfTable {
  int32_t s_min = 0;
  // size = support + 1, cum.front() == 0, cum.back() == kFreqTotal,
  // strictly increasing.
  std::vector<uint32_t> cum;

  size_t support() const { return cum.size() - 1; }
  int32_t s_max() const { return s_min + static_cast<int32_t>(cum.size()) - 2; }

  bool contains(int32_t s) const { return s >= s_min && s <= s_max(); }

  uint32_t lo(int32_t s) const { return cum[static_cast<size_t>(s - s_min)]; }
  uint32_t hi(int32_t s) const { return cum[static_cast<size_t>(s - s_min) + 1]; }

  // Quantized code length of symbol s in bits.
  double bits(int32_t s) const;

  void validate() const;
};

// Largest-remainder quantization of `probabilities` (support starts at
// s_min). Inputs must be finite and >= kMinProb; they are normalized before
// scaling. Deterministic: ties break on the lower symbol index.
CdfTable build_table(std::span<const double> probabilities, int32_t s_min);

}  // namespace caufc::entropy
