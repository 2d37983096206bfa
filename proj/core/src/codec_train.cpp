#include "caufc/codec/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace caufc {

namespace {

// Adam state, one slot per parameter array.
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<double>> m, v;

  explicit Adam(const CodecModel& model) {
    for (const auto* arr : model.param_arrays()) {
      m.emplace_back(arr->size(), 0.0);
      v.emplace_back(arr->size(), 0.0);
    }
  }

  void update(CodecModel& model, const Gradients& g, double lr) {
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto params = model.param_arrays();
    for (size_t a = 0; a < params.size(); ++a) {
      auto& p = *params[a];
      const auto& grad = g.arrays[a];
      for (size_t i = 0; i < p.size(); ++i) {
        m[a][i] = beta1 * m[a][i] + (1.0 - beta1) * grad[i];
        v[a][i] = beta2 * v[a][i] + (1.0 - beta2) * grad[i] * grad[i];
        double mh = m[a][i] / bc1;
        double vh = v[a][i] / bc2;
        p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }
};

struct Sample {
  TokenMatrix tokens;
  Arch arch;
};

// Deterministic interleave keeping drawn counts proportional to a:b.
Arch next_arch(int64_t drawn_cnn, int64_t drawn_vit, int a, int b) {
  return drawn_cnn * b <= drawn_vit * a ? Arch::CnnLike : Arch::VitLike;
}

class Pool {
public:
  Pool(std::vector<size_t> ids, uint64_t seed, uint64_t tag)
      : ids_(std::move(ids)), rng_(SplitMix::stream(seed, tag)) {
    reshuffle();
  }

  size_t draw() {
    if (cursor_ >= ids_.size()) reshuffle();
    return ids_[cursor_++];
  }

private:
  void reshuffle() {
    for (size_t i = ids_.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng_.next_u64() % i);
      std::swap(ids_[i - 1], ids_[j]);
    }
    cursor_ = 0;
  }

  std::vector<size_t> ids_;
  SplitMix rng_;
  size_t cursor_ = 0;
};

}  // namespace

void TrainingConfig::validate() const {
  if (!(lambda > 0.0)) fail("training config: lambda must be > 0");
  if (ratio_cnn_to_vit.first < 1 || ratio_cnn_to_vit.second < 1) {
    fail("training config: ratio parts must be >= 1");
  }
  if (!(lr_min < lr_init)) fail("training config: lr_min must be < lr_init");
  if (!(lr_init > 0.0)) fail("training config: lr_init must be > 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    fail("training config: plateau_factor must be in (0,1)");
  }
  if (plateau_patience < 0) fail("training config: plateau_patience must be >= 0");
  if (batch_size < 1) fail("training config: batch_size must be >= 1");
  if (val_counts.first < 1 || val_counts.second < 1) {
    fail("training config: validation counts must be >= 1");
  }
  if (max_epochs < 1) fail("training config: max_epochs must be >= 1");
}

TrainResult train(CodecModel model, const DatasetManifest& manifest, const TrainingConfig& config,
                  const AlignmentSpec& cnn_spec, const AlignmentSpec& vit_spec) {
  config.validate();
  cnn_spec.validate();
  vit_spec.validate();

  // Load and align everything up front; desk-scale datasets fit in memory.
  std::vector<Sample> samples(manifest.entries.size());
  parallel_for(manifest.entries.size(), [&](size_t i) {
    FeatureTensor t = read_caft(manifest.resolve(i));
    const AlignmentSpec& spec = manifest.entries[i].arch == Arch::CnnLike ? cnn_spec : vit_spec;
    samples[i] = Sample{align(t, spec), manifest.entries[i].arch};
  });

  // Validation split: the first val_counts entries of each architecture in
  // manifest order; the remainder trains.
  std::vector<size_t> val_ids, train_cnn, train_vit;
  int need_cnn = config.val_counts.first, need_vit = config.val_counts.second;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].arch == Arch::CnnLike) {
      if (need_cnn > 0) {
        val_ids.push_back(i);
        --need_cnn;
      } else {
        train_cnn.push_back(i);
      }
    } else {
      if (need_vit > 0) {
        val_ids.push_back(i);
        --need_vit;
      } else {
        train_vit.push_back(i);
      }
    }
  }
  if (need_cnn > 0 || need_vit > 0) {
    fail("train: manifest too small for the requested validation split (needs " +
         std::to_string(config.val_counts.first) + " cnn + " +
         std::to_string(config.val_counts.second) + " vit)");
  }
  if (train_cnn.empty() || train_vit.empty()) {
    fail("train: training pool must contain both architectures");
  }

  Pool cnn_pool(train_cnn, config.seed, 0x636e6eull);
  Pool vit_pool(train_vit, config.seed, 0x766974ull);

  auto val_loss_of = [&](const CodecModel& m) {
    std::vector<double> losses(val_ids.size());
    parallel_for(val_ids.size(), [&](size_t i) {
      const auto& s = samples[val_ids[i]];
      ForwardResult r = forward(m, s.tokens, QuantMode::EvalRound);
      losses[i] = rd_loss_value(r.bpfp(), r.sum_se, config.lambda);
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(losses.size());
  };

  const size_t train_total = train_cnn.size() + train_vit.size();
  const size_t batches_per_epoch = (train_total + config.batch_size - 1) / config.batch_size;

  Adam opt(model);
  TrainResult result;
  result.model = model;
  result.best_val_loss = val_loss_of(model);
  result.best_epoch = 0;

  double lr = config.lr_init;
  int bad_epochs = 0;
  int64_t drawn_cnn = 0, drawn_vit = 0;
  uint64_t global_step = 0;
  bool at_floor = false;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    size_t epoch_features = 0;

    for (size_t batch = 0; batch < batches_per_epoch; ++batch) {
      // Pick this batch's features with the deterministic arch interleave.
      std::vector<size_t> ids(static_cast<size_t>(config.batch_size));
      for (auto& id : ids) {
        Arch a = next_arch(drawn_cnn, drawn_vit,
                           config.ratio_cnn_to_vit.first, config.ratio_cnn_to_vit.second);
        if (a == Arch::CnnLike) {
          id = cnn_pool.draw();
          ++drawn_cnn;
        } else {
          id = vit_pool.draw();
          ++drawn_vit;
        }
      }
      uint64_t step_base = global_step;
      global_step += ids.size();

      // Per-feature losses/gradients computed independently, reduced in
      // slot order so thread count never changes the result.
      std::vector<double> losses(ids.size());
      std::vector<Gradients> grads(ids.size());
      parallel_for(ids.size(), [&](size_t i) {
        const Sample& s = samples[ids[i]];
        Trace trace;
        LatentShape shape = latent_shape(model, static_cast<int>(s.tokens.rows),
                                         static_cast<int>(s.tokens.cols));
        NoiseBuffers noise =
            make_noise(config.seed, step_base + i, shape.y_count(), shape.z_count());
        ForwardResult r = forward(model, s.tokens, QuantMode::TrainNoise, &noise, &trace);
        losses[i] = rd_loss_value(r.bpfp(), r.sum_se, config.lambda);
        grads[i] = backward(model, trace, s.tokens, config.lambda);
      });

      Gradients total = Gradients::zeros_like(model);
      double batch_loss = 0.0;
      for (size_t i = 0; i < ids.size(); ++i) {
        total.accumulate(grads[i], 1.0 / static_cast<double>(ids.size()));
        batch_loss += losses[i];
      }
      opt.update(model, total, lr);
      epoch_loss += batch_loss;
      epoch_features += ids.size();
    }

    double val = val_loss_of(model);
    result.log.push_back(EpochLog{epoch, epoch_loss / static_cast<double>(epoch_features), val, lr});

    if (val < result.best_val_loss) {
      result.best_val_loss = val;
      result.best_epoch = epoch;
      result.model = model;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
    }

    if (at_floor) break;  // one epoch at the floor rate, then stop

    if (bad_epochs > config.plateau_patience) {
      lr *= config.plateau_factor;
      bad_epochs = 0;
      if (lr <= config.lr_min) at_floor = true;
    }
  }

  return result;
}

std::pair<int, int> recommended_ratio(double lambda) {
  const double grid[4] = {0.001, 0.003, 0.005, 0.01};
  const std::pair<int, int> ratios[4] = {{1, 1}, {1, 2}, {1, 3}, {1, 5}};
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (std::abs(lambda - grid[i]) < std::abs(lambda - grid[best])) best = i;
  }
  return ratios[best];
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
    out << buf;
  }
  return out.str();
}

}  // namespace caufc
