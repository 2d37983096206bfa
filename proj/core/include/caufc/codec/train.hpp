#pragma once

// Rate-distortion training over a mixed-architecture dataset. Batches are
// drawn so the long-run cnn:vit ratio matches the config; the learning rate
// follows a reduce-on-plateau schedule against a held-out validation split
// and training stops once it reaches lr_min. The returned model is the
// validation-best snapshot. Single optimizer, deterministic per seed.

#include <filesystem>
#include <utility>

#include "caufc/alignment.hpp"
#include "caufc/codec/forward.hpp"
#include "caufc/codec/model.hpp"
#include "caufc/tensor_io.hpp"

namespace caufc {

struct TrainingConfig {
  double lambda = 0.001;
  std::pair<int, int> ratio_cnn_to_vit{1, 1};
  double lr_init = 1e-4;
  double lr_min = 1e-8;
  double plateau_factor = 0.5;
  int plateau_patience = 20;
  int batch_size = 8;
  uint64_t seed = 0;
  std::pair<int, int> val_counts{100, 100};  // held-out cnn/vit features
  int max_epochs = 100000;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  CodecModel model;  // lowest-validation-loss snapshot
  std::vector<EpochLog> log;
  double best_val_loss = 0.0;
  int best_epoch = 0;
};

// Alignment applied per entry by architecture before the codec sees it.
TrainResult train(CodecModel model, const DatasetManifest& manifest, const TrainingConfig& config,
                  const AlignmentSpec& cnn_spec, const AlignmentSpec& vit_spec);

std::string training_log_csv(const std::vector<EpochLog>& log);

// Published pairing of trade-off points with cnn:vit sampling ratios:
// 0.001->1:1, 0.003->1:2, 0.005->1:3, 0.01->1:5 (nearest grid point for
// anything in between). The token-feature share grows with lambda.
std::pair<int, int> recommended_ratio(double lambda);

}  // namespace caufc
