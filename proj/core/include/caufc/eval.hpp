#pragma once

// Rate/distortion/accuracy metrics and curve emission. The proxy task is
// nearest-centroid classification on mean-pooled tokens against the
// generator's ground-truth centroids: deterministic, training-free and
// monotone in reconstruction fidelity.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "caufc/codec/bitstream.hpp"
#include "caufc/tensor.hpp"
#include "caufc/tensor_io.hpp"

namespace caufc {

struct RDRecord {
  double lambda = 0.0;
  Arch arch = Arch::Unknown;
  double bpfp = 0.0;
  double mse = 0.0;
  double accuracy = 0.0;
  uint64_t n_features = 0;
};

// Payload bits divided by the original element count. Header bits are
// deliberately excluded; report them separately if needed.
double bpfp(const Bitstream& b, const FeatureTensor& original);

// Two-sample Kolmogorov-Smirnov distance between empirical CDFs, in [0,1].
double ks_distance(std::span<const float> a, std::span<const float> b);

// Mean over token rows: one L'-vector per feature.
std::vector<float> pool_tokens(const TokenMatrix& m);

// Fraction of pooled feature vectors whose nearest centroid (Euclidean)
// matches the label; ties break toward the lowest class id.
double nearest_centroid_accuracy(const std::vector<std::vector<float>>& pooled,
                                 const std::vector<uint32_t>& labels,
                                 const std::vector<std::vector<float>>& centroids);

// Mean absolute value; zero means fully concentrated latents.
double mean_abs(std::span<const double> values);

// Mean |quantized main latent| over a dataset after alignment with spec.
double latent_concentration(const CodecModel& model, const DatasetManifest& manifest,
                            const AlignmentSpec& cnn_spec, const AlignmentSpec& vit_spec);

std::string rd_records_csv(const std::vector<RDRecord>& records);
std::vector<RDRecord> parse_rd_records_csv(const std::string& text);

// CSV (schema lambda,arch,bpfp,mse,accuracy,n) plus a minimal fixed-size
// SVG: accuracy over bpfp, one polyline per architecture, points sorted by
// bpfp. Both byte-deterministic for identical inputs.
void rd_curve(const std::vector<RDRecord>& records, const std::filesystem::path& csv_path,
              const std::filesystem::path& svg_path);

}  // namespace caufc
