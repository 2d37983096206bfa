#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "caufc/common.hpp"

namespace caufc {

// Memory layout of a feature array. ChannelMajor3D is the (N,H,W) map stack
// a convolutional backbone emits; Tokens2D is an (M,L) token sequence.
enum class Layout : uint8_t { ChannelMajor3D = 0, Tokens2D = 1 };

enum class Arch : uint8_t { CnnLike = 0, VitLike = 1, Unknown = 2 };

const char* arch_name(Arch a);
std::optional<Arch> arch_from_name(const std::string& s);

// A raw feature array plus its layout/architecture tags. Immutable by
// convention once constructed; safe to share across threads.
struct FeatureTensor {
  Layout layout = Layout::Tokens2D;
  Arch arch = Arch::Unknown;
  std::vector<uint32_t> dims;   // 3 entries (N,H,W) or 2 entries (M,L)
  std::vector<float> data;      // row-major, length == product of dims
  std::optional<uint32_t> label;

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }

  // Throws Error when any structural invariant is broken: dims/layout
  // mismatch, zero-sized axes, wrong data length, or non-finite values.
  void validate() const;
};

}  // namespace caufc
