#include "caufc/entropy/range_coder.hpp"

#include <algorithm>

namespace caufc::entropy {

namespace {
constexpr uint32_t kTop = 1u << 24;
}

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t byte = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(byte + carry));
      byte = 0xFF;
    } while (--cache_count_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_count_;
  low_ = (low_ << 8) & 0xFFFFFFFFull;
}

void RangeEncoder::encode(int32_t symbol, const CdfTable& table) {
  if (finished_) fail("range encoder: encode after finish");
  if (!table.contains(symbol)) {
    fail("range encoder: symbol " + std::to_string(symbol) + " outside table support [" +
         std::to_string(table.s_min) + ", " + std::to_string(table.s_max()) + "]");
  }
  if (table.support() == 1) return;  // width 65536: zero information, zero state change

  uint32_t lo = table.lo(symbol);
  uint32_t hi = table.hi(symbol);
  uint32_t r = range_ >> kFreqBits;
  low_ += static_cast<uint64_t>(r) * lo;
  // The top interval absorbs the truncation remainder of range/total.
  range_ = (hi == kFreqTotal) ? range_ - r * lo : r * (hi - lo);
  while (range_ < kTop) {
    shift_low();
    range_ <<= 8;
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  if (finished_) fail("range encoder: double finish");
  finished_ = true;
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : data_(bytes) {
  uint8_t lead = next_byte();
  if (lead != 0) fail("range decoder: corrupt stream (bad leading byte)");
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= data_.size()) fail("range decoder: truncated stream");
  return data_[pos_++];
}

int32_t RangeDecoder::decode(const CdfTable& table) {
  if (table.support() == 1) return table.s_min;  // mirrors the encoder skip

  uint32_t r = range_ >> kFreqBits;
  // Values beyond total-1 fall in the remainder absorbed by the top
  // interval and identify its symbol.
  uint32_t target = std::min(code_ / r, kFreqTotal - 1);

  // Find s with cum[s] <= target < cum[s+1].
  auto it = std::upper_bound(table.cum.begin(), table.cum.end(), target);
  size_t idx = static_cast<size_t>(it - table.cum.begin()) - 1;
  if (idx + 1 >= table.cum.size()) fail("range decoder: corrupt stream (target out of table)");

  uint32_t lo = table.cum[idx];
  uint32_t hi = table.cum[idx + 1];
  code_ -= r * lo;
  range_ = (hi == kFreqTotal) ? range_ - r * lo : r * (hi - lo);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  // A healthy stream keeps the decoder offset strictly inside the range.
  if (code_ >= range_) fail("range decoder: corrupt stream (interval violation)");
  return table.s_min + static_cast<int32_t>(idx);
}

std::vector<uint8_t> encode_symbols(std::span<const int32_t> symbols,
                                    const std::function<const CdfTable&(size_t)>& tables) {
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], tables(i));
  return enc.finish();
}

std::vector<uint8_t> encode_symbols(std::span<const int32_t> symbols, const CdfTable& table) {
  return encode_symbols(symbols, [&](size_t) -> const CdfTable& { return table; });
}

std::vector<int32_t> decode_symbols(std::span<const uint8_t> bytes, size_t count,
                                    const std::function<const CdfTable&(size_t)>& tables) {
  RangeDecoder dec(bytes);
  std::vector<int32_t> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = dec.decode(tables(i));
  return out;
}

std::vector<int32_t> decode_symbols(std::span<const uint8_t> bytes, size_t count,
                                    const CdfTable& table) {
  return decode_symbols(bytes, count, [&](size_t) -> const CdfTable& { return table; });
}

}  // namespace caufc::entropy
