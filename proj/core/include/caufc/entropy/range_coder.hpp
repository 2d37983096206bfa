#pragma once

// Byte-oriented 32-bit range coder over 16-bit cumulative frequency tables.
// Carry handling follows the classic cache/pending-0xFF scheme; the decoder
// tracks (code - low) so carries never reach it. Single-symbol tables cost
// zero coder operations at both ends, making degenerate alphabets free.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "caufc/entropy/cdf_table.hpp"

namespace caufc::entropy {

class RangeEncoder {
public:
  void encode(int32_t symbol, const CdfTable& table);

  // Flushes the coder state; no further encodes are allowed.
  std::vector<uint8_t> finish();

private:
  void shift_low();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_count_ = 1;
  bool finished_ = false;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  int32_t decode(const CdfTable& table);

private:
  uint8_t next_byte();

  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t code_ = 0;
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

// Whole-sequence helpers. The table for position i is tables(i); a uniform
// span overload covers the common cases.
std::vector<uint8_t> encode_symbols(std::span<const int32_t> symbols,
                                    const std::function<const CdfTable&(size_t)>& tables);
std::vector<uint8_t> encode_symbols(std::span<const int32_t> symbols, const CdfTable& table);

std::vector<int32_t> decode_symbols(std::span<const uint8_t> bytes, size_t count,
                                    const std::function<const CdfTable&(size_t)>& tables);
std::vector<int32_t> decode_symbols(std::span<const uint8_t> bytes, size_t count,
                                    const CdfTable& table);

}  // namespace caufc::entropy
