#pragma once

// Shared plumbing: error type, little-endian buffer IO, FNV hashing,
// a counter-based deterministic RNG, atomic file writes and a bounded
// parallel map. Everything here is platform-independent and allocation
// friendly; the heavy lifting lives in the individual modules.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace caufc {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

// ---------------------------------------------------------------------------
// Little-endian primitives over growable byte buffers.

inline void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

inline void put_magic(std::vector<uint8_t>& out, const char* m) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(m[i]));
}

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

// Cursor over an immutable byte buffer. Throws on under-run so truncated
// files surface as errors instead of garbage.
struct ByteReader {
  const uint8_t* data = nullptr;
  size_t size = 0;
  size_t pos = 0;

  ByteReader(const uint8_t* d, size_t n) : data(d), size(n) {}
  explicit ByteReader(const std::vector<uint8_t>& buf) : data(buf.data()), size(buf.size()) {}

  size_t remaining() const { return size - pos; }

  void require(size_t n, const char* what) const {
    if (remaining() < n) fail(std::string("truncated input while reading ") + what);
  }

  uint8_t u8(const char* what = "u8") {
    require(1, what);
    return data[pos++];
  }
  uint16_t u16(const char* what = "u16") {
    require(2, what);
    uint16_t v = static_cast<uint16_t>(data[pos]) | static_cast<uint16_t>(data[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what = "u32") {
    require(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what = "u64") {
    require(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what = "f32") {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::vector<uint8_t> bytes(size_t n, const char* what = "bytes") {
    require(n, what);
    std::vector<uint8_t> out(data + pos, data + pos + n);
    pos += n;
    return out;
  }
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit, used for model content hashes.

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// SplitMix-style generator. Streams are derived from (seed, stream id) so
// independent consumers (per-tensor noise, per-class centroids, training
// noise) never share state and parallel generation matches serial.

struct SplitMix {
  uint64_t state;

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  explicit SplitMix(uint64_t seed) : state(seed) {}

  static SplitMix stream(uint64_t seed, uint64_t stream_id) {
    return SplitMix(mix(seed) ^ mix(stream_id * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull));
  }

  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of precision.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; two uniforms per draw, no cached value.
  double next_gaussian();
};

// ---------------------------------------------------------------------------
// Thread helpers. CAUFC_THREADS caps the worker count (0 or unset = auto).

int resolve_threads(size_t work_items);

// Static block partition; fn(i) must not touch shared mutable state unless
// the call sites reduce results in index order afterwards.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

// ---------------------------------------------------------------------------
// Atomic file IO: write to a temp sibling, rename on success, so consumers
// never observe partial output.

void write_file_atomic(const std::filesystem::path& path, const void* data, size_t n);
void write_file_atomic(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<uint8_t> read_file(const std::filesystem::path& path);

}  // namespace caufc
