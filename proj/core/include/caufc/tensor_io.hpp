#pragma once

// CAFT container and dataset manifests.
//
// CAFT file layout (little-endian):
//   magic "CAFT" | version u8 = 1 | layout u8 | arch u8 | ndims u8 |
//   dims: ndims x u32 | payload: f32 row-major
//
// Manifest: UTF-8 text, one entry per line,
//   <relative-path>\t<cnn|vit|unknown>\t<label-or-->
// lines starting with '#' are ignored.

#include <filesystem>
#include <string>
#include <vector>

#include "caufc/tensor.hpp"

namespace caufc {

inline constexpr uint8_t kCaftVersion = 1;

std::vector<uint8_t> encode_caft(const FeatureTensor& t);
FeatureTensor decode_caft(const std::vector<uint8_t>& bytes);

// Validates, then writes atomically; on error no file is left behind.
void write_caft(const FeatureTensor& t, const std::filesystem::path& path);
FeatureTensor read_caft(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;  // relative to the manifest root
  Arch arch = Arch::Unknown;
  std::optional<uint32_t> label;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(size_t i) const { return root / entries[i].path; }
};

// Parses and validates: every referenced file must exist and carry a sane
// CAFT header; labels, when present, must be dense class ids starting at 0.
DatasetManifest load_manifest(const std::filesystem::path& path);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

// Combines several manifests into one rooted at out_root, rewriting entry
// paths relative to the new root. Order: inputs in sequence.
DatasetManifest merge_manifests(const std::vector<std::filesystem::path>& manifest_paths,
                                const std::filesystem::path& out_root);

}  // namespace caufc
