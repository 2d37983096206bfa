#include <cmath>
#include <fstream>

#include "caufc/tensor_io.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace caufc;

namespace {

FeatureTensor tokens2x2() {
  FeatureTensor t;
  t.layout = Layout::Tokens2D;
  t.arch = Arch::VitLike;
  t.dims = {2, 2};
  t.data = {1.0f, 2.0f, 3.0f, 4.0f};
  return t;
}

FeatureTensor random_tensor(SplitMix& rng) {
  FeatureTensor t;
  bool three_d = rng.next_u64() % 2 == 0;
  t.layout = three_d ? Layout::ChannelMajor3D : Layout::Tokens2D;
  t.arch = static_cast<Arch>(rng.next_u64() % 3);
  auto dim = [&](uint32_t lo, uint32_t hi) {
    return lo + static_cast<uint32_t>(rng.next_u64() % (hi - lo + 1));
  };
  if (three_d) {
    t.dims = {dim(1, 8), dim(1, 6), dim(1, 6)};
  } else {
    t.dims = {dim(1, 12), dim(1, 12)};
  }
  if (rng.next_u64() % 2 == 0) t.label = static_cast<uint32_t>(rng.next_u64() % 5);
  t.data.resize(t.element_count());
  for (auto& v : t.data) v = static_cast<float>(rng.next_gaussian() * 3.0);
  return t;
}

}  // namespace

TEST_CASE("caft encode layout: 2x2 token tensor") {
  auto bytes = encode_caft(tokens2x2());
  // 4 magic + 1 version + 1 layout + 1 arch + 1 ndims + 2*4 dims = 16 header
  // bytes, then 4 floats = 16 payload bytes.
  CHECK(bytes.size() == 32);
  CHECK(bytes[0] == 'C');
  CHECK(bytes[1] == 'A');
  CHECK(bytes[2] == 'F');
  CHECK(bytes[3] == 'T');
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[5] == 1);  // Tokens2D
  CHECK(bytes[6] == 1);  // vit
  CHECK(bytes[7] == 2);  // ndims

  auto back = decode_caft(bytes);
  CHECK(back.layout == Layout::Tokens2D);
  CHECK(back.dims == std::vector<uint32_t>{2, 2});
  CHECK(back.data == tokens2x2().data);
}

TEST_CASE("caft payload size for a 2048x7x7 map stack") {
  FeatureTensor t;
  t.layout = Layout::ChannelMajor3D;
  t.arch = Arch::CnnLike;
  t.dims = {2048, 7, 7};
  t.data.assign(t.element_count(), 0.5f);
  auto bytes = encode_caft(t);
  size_t header = 8 + 3 * 4;
  CHECK(bytes.size() - header == 401408);
}

TEST_CASE("caft write refuses non-finite values and leaves no file") {
  testutil::TempDir tmp;
  FeatureTensor t = tokens2x2();
  t.data[2] = std::nanf("");
  auto path = tmp.path() / "bad.caft";
  CHECK_THROWS_AS(write_caft(t, path), Error);
  CHECK(!std::filesystem::exists(path));
}

TEST_CASE("caft read rejects bad magic") {
  auto bytes = encode_caft(tokens2x2());
  bytes[0] = 'X';
  bytes[1] = 'X';
  bytes[2] = 'X';
  bytes[3] = 'X';
  CHECK_THROWS_WITH_AS(decode_caft(bytes), doctest::Contains("magic"), Error);
}

TEST_CASE("caft read rejects truncated payload") {
  FeatureTensor t;
  t.layout = Layout::Tokens2D;
  t.arch = Arch::Unknown;
  t.dims = {2, 3};
  t.data.assign(6, 1.0f);
  auto bytes = encode_caft(t);
  bytes.resize(bytes.size() - 4);  // payload now 20 bytes, dims say 24
  CHECK_THROWS_WITH_AS(decode_caft(bytes), doctest::Contains("size mismatch"), Error);
}

TEST_CASE("caft read rejects layout/ndims mismatch") {
  auto bytes = encode_caft(tokens2x2());
  bytes[5] = 0;  // claim ChannelMajor3D while ndims stays 2
  CHECK_THROWS_AS(decode_caft(bytes), Error);
}

TEST_CASE("caft round-trip identity on random tensors") {
  testutil::TempDir tmp;
  SplitMix rng(42);
  for (int i = 0; i < 60; ++i) {
    FeatureTensor t = random_tensor(rng);
    auto path = tmp.path() / ("t" + std::to_string(i) + ".caft");
    write_caft(t, path);
    FeatureTensor back = read_caft(path);
    CHECK(back.layout == t.layout);
    CHECK(back.arch == t.arch);
    CHECK(back.dims == t.dims);
    REQUIRE(back.data.size() == t.data.size());
    // Bit-for-bit, not approximate.
    CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0);
  }
}

TEST_CASE("manifest preserves order and validates entries") {
  testutil::TempDir tmp;
  for (int i = 0; i < 3; ++i) {
    FeatureTensor t = tokens2x2();
    t.label = static_cast<uint32_t>(i % 2);
    write_caft(t, tmp.path() / ("f" + std::to_string(i) + ".caft"));
  }
  std::ofstream out(tmp.path() / "manifest.txt");
  out << "# comment line\n";
  out << "f0.caft\tvit\t0\n";
  out << "f1.caft\tcnn\t1\n";
  out << "f2.caft\tunknown\t-\n";
  out.close();

  auto m = load_manifest(tmp.path() / "manifest.txt");
  REQUIRE(m.entries.size() == 3);
  CHECK(m.entries[0].path == "f0.caft");
  CHECK(m.entries[0].arch == Arch::VitLike);
  CHECK(m.entries[0].label == 0u);
  CHECK(m.entries[1].arch == Arch::CnnLike);
  CHECK(m.entries[2].arch == Arch::Unknown);
  CHECK(!m.entries[2].label.has_value());
}

TEST_CASE("manifest error names the offending line") {
  testutil::TempDir tmp;
  write_caft(tokens2x2(), tmp.path() / "ok.caft");
  std::ofstream out(tmp.path() / "manifest.txt");
  out << "ok.caft\tvit\t-\n";
  out << "missing.caft\tcnn\t-\n";
  out.close();
  CHECK_THROWS_WITH_AS(load_manifest(tmp.path() / "manifest.txt"), doctest::Contains("line 2"),
                       Error);
}

TEST_CASE("empty manifest is valid") {
  testutil::TempDir tmp;
  std::ofstream(tmp.path() / "manifest.txt") << "# nothing here\n";
  auto m = load_manifest(tmp.path() / "manifest.txt");
  CHECK(m.entries.empty());
}

TEST_CASE("manifest labels must be dense from zero") {
  testutil::TempDir tmp;
  FeatureTensor t = tokens2x2();
  write_caft(t, tmp.path() / "a.caft");
  write_caft(t, tmp.path() / "b.caft");
  std::ofstream out(tmp.path() / "manifest.txt");
  out << "a.caft\tvit\t0\n";
  out << "b.caft\tvit\t2\n";  // class 1 missing
  out.close();
  CHECK_THROWS_WITH_AS(load_manifest(tmp.path() / "manifest.txt"), doctest::Contains("dense"),
                       Error);
}

TEST_CASE("manifest save/load round-trip") {
  testutil::TempDir tmp;
  write_caft(tokens2x2(), tmp.path() / "x.caft");
  DatasetManifest m;
  m.root = tmp.path();
  m.entries.push_back({"x.caft", Arch::VitLike, 0});
  save_manifest(m, tmp.path() / "manifest.txt");
  auto back = load_manifest(tmp.path() / "manifest.txt");
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].path == "x.caft");
  CHECK(back.entries[0].label == 0u);
}
