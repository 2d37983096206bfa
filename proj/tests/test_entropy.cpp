#include <cmath>
#include <numeric>

#include "caufc/entropy/range_coder.hpp"
#include "doctest.h"

using namespace caufc;
using namespace caufc::entropy;

namespace {

std::vector<double> random_distribution(SplitMix& rng, size_t n, double floor = 1e-4) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    v = floor + rng.next_unit();
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

// Draw a symbol from the quantized table, matching its exact probabilities.
int32_t draw_symbol(const CdfTable& t, SplitMix& rng) {
  uint32_t u = static_cast<uint32_t>(rng.next_u64() % kFreqTotal);
  size_t idx = 0;
  while (t.cum[idx + 1] <= u) ++idx;
  return t.s_min + static_cast<int32_t>(idx);
}

}  // namespace

TEST_CASE("build_table: two equal symbols split the range exactly") {
  std::vector<double> p = {0.5, 0.5};
  auto t = build_table(p, 0);
  CHECK(t.cum == std::vector<uint32_t>{0, 32768, 65536});
}

TEST_CASE("build_table: single-symbol support fills the whole range") {
  std::vector<double> p = {1.0};
  auto t = build_table(p, 7);
  CHECK(t.cum == std::vector<uint32_t>{0, 65536});
  CHECK(t.s_min == 7);
  CHECK(t.bits(7) == 0.0);

  // Encoding only degenerate symbols produces a flush-only stream.
  std::vector<int32_t> syms(100, 7);
  auto bytes = encode_symbols(syms, t);
  CHECK(bytes.size() <= 8);
  auto back = decode_symbols(bytes, syms.size(), t);
  CHECK(back == syms);
}

TEST_CASE("build_table: 256 equal symbols each get width 256") {
  std::vector<double> p(256, 1.0 / 256.0);
  auto t = build_table(p, -128);
  for (size_t i = 0; i < 256; ++i) CHECK(t.cum[i + 1] - t.cum[i] == 256);
}

TEST_CASE("build_table rejects bad input") {
  std::vector<double> none;
  CHECK_THROWS_AS(build_table(none, 0), Error);
  std::vector<double> tiny = {0.5, 1e-20};  // below the 2^-32 floor
  CHECK_THROWS_AS(build_table(tiny, 0), Error);
  std::vector<double> inf = {0.5, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(build_table(inf, 0), Error);
}

TEST_CASE("build_table quantization: argmax kept, probabilities move < 2^-10") {
  SplitMix rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    size_t n = 2 + rng.next_u64() % 1023;
    auto p = random_distribution(rng, n, 1.0 / 16384.0);  // all >= 2^-14
    auto t = build_table(p, 0);
    size_t argmax_p = 0;
    uint32_t max_w = 0;
    for (size_t i = 0; i < n; ++i) {
      if (p[i] > p[argmax_p]) argmax_p = i;
      max_w = std::max(max_w, t.cum[i + 1] - t.cum[i]);
    }
    // The most probable symbol keeps a maximal interval up to sub-unit
    // ties: probabilities within one frequency unit may swap by one.
    CHECK(t.cum[argmax_p + 1] - t.cum[argmax_p] + 1 >= max_w);
    for (size_t i = 0; i < n; ++i) {
      double q = static_cast<double>(t.cum[i + 1] - t.cum[i]) / kFreqTotal;
      CHECK(std::abs(q - p[i]) <= 0x1.0p-10);
    }
  }
}

TEST_CASE("empty sequence is a flush-only stream") {
  std::vector<double> p = {0.25, 0.75};
  auto t = build_table(p, 0);
  std::vector<int32_t> none;
  auto bytes = encode_symbols(none, t);
  CHECK(bytes.size() <= 8);
  CHECK(decode_symbols(bytes, 0, t).empty());
}

TEST_CASE("deterministic bytes for identical input") {
  SplitMix rng(7);
  auto p = random_distribution(rng, 64);
  auto t = build_table(p, -32);
  std::vector<int32_t> syms;
  for (int i = 0; i < 4096; ++i) syms.push_back(draw_symbol(t, rng));
  auto a = encode_symbols(syms, t);
  auto b = encode_symbols(syms, t);
  CHECK(a == b);
}

TEST_CASE("lossless round-trip over randomized tables and symbols") {
  SplitMix rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    size_t alphabet = 1 + rng.next_u64() % 300;
    int32_t s_min = static_cast<int32_t>(rng.next_u64() % 64) - 32;
    auto p = random_distribution(rng, alphabet);
    auto t = build_table(p, s_min);
    size_t count = rng.next_u64() % 5000;
    std::vector<int32_t> syms(count);
    for (auto& s : syms) s = draw_symbol(t, rng);
    auto bytes = encode_symbols(syms, t);
    auto back = decode_symbols(bytes, count, t);
    REQUIRE(back == syms);
  }
}

TEST_CASE("lossless round-trip with per-position tables") {
  SplitMix rng(55);
  std::vector<CdfTable> tables;
  for (int i = 0; i < 7; ++i) {
    auto p = random_distribution(rng, 3 + 40 * i);
    tables.push_back(build_table(p, -static_cast<int32_t>(i)));
  }
  std::vector<int32_t> syms(20000);
  for (size_t i = 0; i < syms.size(); ++i) syms[i] = draw_symbol(tables[i % 7], rng);
  auto pick = [&](size_t i) -> const CdfTable& { return tables[i % 7]; };
  auto bytes = encode_symbols(syms, pick);
  auto back = decode_symbols(bytes, syms.size(), pick);
  CHECK(back == syms);
}

TEST_CASE("coded length stays within 1% of the quantized entropy plus 8 bytes") {
  SplitMix rng(2718);
  auto p = random_distribution(rng, 256);
  // Sharpen the distribution so the bound is non-trivial.
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = p[i] * p[i] + 1e-6;
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  auto t = build_table(p, 0);

  const size_t n = 100000;
  std::vector<int32_t> syms(n);
  double ideal_bits = 0.0;  // oracle: quantized Shannon bound, summed directly
  for (auto& s : syms) {
    s = draw_symbol(t, rng);
    ideal_bits += t.bits(s);
  }
  auto bytes = encode_symbols(syms, t);
  double actual_bits = 8.0 * static_cast<double>(bytes.size());
  CHECK(actual_bits <= ideal_bits * 1.01 + 64.0);
  CHECK(actual_bits >= ideal_bits * 0.99 - 64.0);

  // Per-call contract: length <= ceil(sum -log2 p_quantized) bits + 8 bytes.
  CHECK(bytes.size() <= static_cast<size_t>(std::ceil(ideal_bits / 8.0)) + 8);
}

TEST_CASE("out-of-support symbols are rejected") {
  std::vector<double> p = {0.5, 0.5};
  auto t = build_table(p, 0);
  std::vector<int32_t> syms = {0, 1, 2};
  CHECK_THROWS_WITH_AS(encode_symbols(syms, t), doctest::Contains("support"), Error);
}

TEST_CASE("truncated stream raises an error instead of garbage") {
  SplitMix rng(4);
  auto p = random_distribution(rng, 128);
  auto t = build_table(p, 0);
  std::vector<int32_t> syms(3000);
  for (auto& s : syms) s = draw_symbol(t, rng);
  auto bytes = encode_symbols(syms, t);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_symbols(bytes, syms.size(), t), Error);
}

TEST_CASE("large-alphabet stress round-trip") {
  SplitMix rng(31337);
  auto p = random_distribution(rng, 1024);
  auto t = build_table(p, -512);
  std::vector<int32_t> syms(200000);
  for (auto& s : syms) s = draw_symbol(t, rng);
  auto bytes = encode_symbols(syms, t);
  CHECK(decode_symbols(bytes, syms.size(), t) == syms);
}
