#include <cstring>

#include "caufc/codec/bitstream.hpp"
#include "caufc/synthetic.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace caufc;

namespace {

FeatureTensor sample_vit(uint64_t seed) {
  GenSpec s;
  s.arch = Arch::VitLike;
  s.dims = {16, 12};
  s.seed = seed;
  return gen_vit_like(s);
}

FeatureTensor sample_cnn(uint64_t seed) {
  GenSpec s;
  s.arch = Arch::CnnLike;
  s.dims = {8, 4, 5};
  s.seed = seed;
  return gen_cnn_like(s);
}

}  // namespace

TEST_CASE("bitstream container round-trip") {
  Bitstream b;
  b.model_hash = 0x1122334455667788ull;
  b.spec = AlignmentSpec::cnn_default();
  b.layout = Layout::ChannelMajor3D;
  b.dims = {8, 4, 5};
  b.token_rows = 20;
  b.token_cols = 8;
  b.z_payload = {1, 2, 3};
  b.y_payload = {9, 8, 7, 6};
  auto bytes = encode_bitstream(b);
  Bitstream back = decode_bitstream(bytes);
  CHECK(back.model_hash == b.model_hash);
  CHECK(back.spec == b.spec);
  CHECK(back.layout == b.layout);
  CHECK(back.dims == b.dims);
  CHECK(back.token_rows == 20);
  CHECK(back.z_payload == b.z_payload);
  CHECK(back.y_payload == b.y_payload);

  bytes[0] = 'Z';
  CHECK_THROWS_WITH_AS(decode_bitstream(bytes), doctest::Contains("magic"), Error);
}

TEST_CASE("encode/decode reproduces the reconstruction deterministically") {
  CodecModel model = CodecModel::init(42);
  FeatureTensor t = sample_vit(1);
  AlignmentSpec spec = AlignmentSpec::vit_default();

  EncodeStats stats;
  Bitstream b = encode(model, t, spec, &stats);
  CHECK(stats.payload_bits == b.payload_bits());
  CHECK(stats.numel == t.element_count());

  FeatureTensor rec = decode(model, b);
  CHECK(rec.layout == t.layout);
  CHECK(rec.dims == t.dims);

  // Decode-side reconstruction error equals the encode-time value exactly.
  double se = 0.0;
  for (size_t i = 0; i < rec.data.size(); ++i) {
    double d = static_cast<double>(rec.data[i]) - static_cast<double>(t.data[i]);
    se += d * d;
  }
  CHECK(se / static_cast<double>(rec.data.size()) == stats.mse);

  // Byte-identical on re-encode.
  Bitstream b2 = encode(model, t, spec);
  CHECK(encode_bitstream(b2) == encode_bitstream(b));
}

TEST_CASE("channel-major features come back in their original layout") {
  CodecModel model = CodecModel::init(43);
  FeatureTensor t = sample_cnn(2);
  Bitstream b = encode(model, t, AlignmentSpec::cnn_default());
  FeatureTensor rec = decode(model, b);
  CHECK(rec.layout == Layout::ChannelMajor3D);
  CHECK(rec.dims == t.dims);
  CHECK(rec.element_count() == t.element_count());
  // Reconstructed values stay inside the truncation range.
  for (float v : rec.data) {
    CHECK(v >= 0.0f - 1e-6f);
    CHECK(v <= 5.0f + 1e-6f);
  }
}

TEST_CASE("decode refuses the wrong model and names both hashes") {
  CodecModel model = CodecModel::init(44);
  CodecModel other = CodecModel::init(45);
  FeatureTensor t = sample_vit(3);
  Bitstream b = encode(model, t, AlignmentSpec::vit_default());
  char expect_have[17], expect_want[17];
  std::snprintf(expect_have, sizeof(expect_have), "%016llx",
                static_cast<unsigned long long>(other.hash()));
  std::snprintf(expect_want, sizeof(expect_want), "%016llx",
                static_cast<unsigned long long>(model.hash()));
  CHECK_THROWS_WITH_AS(decode(other, b), doctest::Contains(expect_have), Error);
  CHECK_THROWS_WITH_AS(decode(other, b), doctest::Contains(expect_want), Error);
}

TEST_CASE("decoded latents are bit-exact: same payload from re-encoding the reconstruction path") {
  CodecModel model = CodecModel::init(46);
  FeatureTensor t = sample_vit(4);
  AlignmentSpec spec = AlignmentSpec::vit_default();
  ForwardResult fr = forward(model, align(t, spec), QuantMode::EvalRound);
  Bitstream b = encode(model, t, spec);

  // Decode and re-run the latent path: the decoder must see the exact
  // quantized grids the encoder produced.
  LatentShape shape = latent_shape(model, b.token_rows, b.token_cols);
  CHECK(shape.y_count() == fr.y_hat.count());
  FeatureTensor rec1 = decode(model, b);
  FeatureTensor rec2 = decode(model, b);
  CHECK(std::memcmp(rec1.data.data(), rec2.data.data(), rec1.data.size() * 4) == 0);
}

TEST_CASE("corrupted payload raises instead of returning garbage") {
  CodecModel model = CodecModel::init(47);
  FeatureTensor t = sample_vit(5);
  Bitstream b = encode(model, t, AlignmentSpec::vit_default());
  REQUIRE(b.y_payload.size() > 4);
  b.y_payload.resize(b.y_payload.size() / 2);  // truncate
  CHECK_THROWS_AS(decode(model, b), Error);
}

TEST_CASE("rate estimate tracks the actual payload") {
  CodecModel model = CodecModel::init(48);
  for (uint64_t seed = 0; seed < 4; ++seed) {
    FeatureTensor t = sample_vit(seed + 10);
    EncodeStats stats;
    encode(model, t, AlignmentSpec::vit_default(), &stats);
    double est = stats.bits_estimate;
    double actual = static_cast<double>(stats.payload_bits);
    CHECK(actual <= est * 1.02 + 64.0);
    CHECK(actual >= est * 0.98 - 64.0);
  }
}
