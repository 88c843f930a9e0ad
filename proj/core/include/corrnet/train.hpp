#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "corrnet/data.hpp"
#include "corrnet/network.hpp"

namespace corrnet {

/// Linear warm-up from 0 to lr_max over `warmup_steps`, then half-cosine
/// decay to 0 at `total_steps`.
double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double lr_max);

struct TrainConfig {
  int epochs = 60;
  int warmup_epochs = 10;
  double lr_max = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 16;
  int clip_len = 8;
  std::uint64_t seed = 0;
  std::string netspec = "corrnet-tiny";
  std::string data;       // training set path
  std::string test_data;  // optional held-out set
  bool jitter = true;
  double crop_scale = 1.0;  // > 1 enables random resized crops
  int eval_clips = 1;       // clips per video for the per-epoch test accuracy

  /// Throws ConfigError on out-of-range fields.
  void validate() const;

  /// key=value lines, one per field; stored in checkpoints.
  [[nodiscard]] std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
};

struct NamedTensor {
  std::string name;
  NDTensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Complete training state after `epoch` finished epochs.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::string netspec_text;
  std::string config_text;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> buffers;
  std::vector<NamedTensor> momentum;
  int epoch = 0;
  std::string rng_state;

  [[nodiscard]] const NDTensor& parameter(const std::string& name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the network stored in a checkpoint with its trained weights.
Network network_from_checkpoint(const Checkpoint& ck);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;  // NaN when no test set is given
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

/// Subtracts the pixel mean and stacks clips into N x C x L x H x W.
NDTensor make_batch(const std::vector<NDTensor>& clips);

/// SGD with momentum over a Network. Each epoch draws its shuffling and
/// clip-sampling randomness from (seed, epoch), so resuming from a
/// checkpoint replays exactly what an uninterrupted run would have done.
class Trainer {
 public:
  Trainer(NetSpec spec, TrainConfig cfg, const Dataset& train, const Dataset* test = nullptr);

  /// Restores parameters, buffers, momentum and epoch counter.
  void restore(const Checkpoint& ck);

  /// Runs one epoch. Throws NumericError before any parameter update when
  /// the loss or a gradient is non-finite.
  EpochMetrics run_epoch();

  /// Runs epochs until `cfg.epochs` have completed.
  std::vector<EpochMetrics> run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  [[nodiscard]] Checkpoint checkpoint() const;
  [[nodiscard]] int epoch() const { return epoch_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  Network& network() { return net_; }

 private:
  void sgd_step(double lr);

  TrainConfig cfg_;
  Network net_;
  const Dataset& train_;
  const Dataset* test_;
  std::vector<NDTensor> velocity_;
  int epoch_ = 0;
  std::string rng_state_;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<int> predictions;
};

/// Video-level top-1 accuracy: softmax outputs of `n_clips` uniformly spaced
/// clips are averaged per video. Throws ConfigError when the network's class
/// count differs from the dataset's.
EvalResult evaluate(Network& net, const Dataset& data, int clip_len, int n_clips);

/// Averages per-clip logits (one row per clip) into class probabilities.
std::vector<double> average_softmax(const NDTensor& clip_logits);

}  // namespace corrnet
