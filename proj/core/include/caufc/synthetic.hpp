#pragma once

// Deterministic synthetic feature generator. Marginals follow the two
// documented shapes: channel-major features are rectified Gaussians (about
// half the samples exactly zero, bulk below 5), token features follow a
// symmetric heavy-tailed mixture (narrow core, rare wide excursions).
// Class structure is a per-class additive centroid so a nearest-centroid
// probe has a known ground truth.

#include <filesystem>

#include "caufc/tensor.hpp"
#include "caufc/tensor_io.hpp"

namespace caufc {

struct GenSpec {
  Arch arch = Arch::VitLike;
  std::vector<uint32_t> dims;
  uint32_t n_classes = 1;
  double centroid_scale = 0.0;
  double noise_scale = 1.0;  // multiplier on the per-arch base noise shape
  uint64_t seed = 0;

  // Distribution shape knobs; defaults produce the documented marginals.
  double cnn_sigma = 1.7;
  double vit_core_weight = 0.97;
  double vit_core_sigma = 1.2;
  double vit_tail_sigma = 6.0;

  void validate() const;
};

// Tensor #index of the dataset defined by spec. Label = index % n_classes,
// value = clamp-free noise around that class's centroid (rectified for
// channel-major features). Streams are keyed on (seed, index) so parallel
// and serial generation agree byte-for-byte.
FeatureTensor gen_tensor(const GenSpec& spec, uint64_t index);

// Single-tensor convenience wrappers (index 0) with layout checks.
FeatureTensor gen_cnn_like(const GenSpec& spec);
FeatureTensor gen_vit_like(const GenSpec& spec);

// Writes `count` CAFT files plus manifest.txt into out_dir; labels are
// round-robin so per-class counts differ by at most one.
DatasetManifest gen_dataset(const GenSpec& spec, uint64_t count, const std::filesystem::path& out_dir);

// Ground-truth class centroids in pooled-token space: the noiseless tensor
// of each class, tokenized, averaged over rows. One row per class.
std::vector<std::vector<float>> class_centroids_pooled(const GenSpec& spec);

// Same centroids packed as a (n_classes x token_width) token tensor so they
// can travel as a regular CAFT file.
FeatureTensor class_centroids_tensor(const GenSpec& spec);

}  // namespace caufc
