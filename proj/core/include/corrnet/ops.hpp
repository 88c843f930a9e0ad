#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "corrnet/autograd.hpp"
#include "corrnet/conv.hpp"
#include "corrnet/correlation.hpp"

namespace corrnet {

enum class Mode { train, eval };

/// Per-channel batch normalization state: affine parameters plus running
/// statistics. Batch statistics are taken over (N, L, H, W).
struct BatchNormStats {
  NDTensor gamma;
  NDTensor beta;
  NDTensor running_mean;
  NDTensor running_var;
  double momentum = 0.9;  // weight kept on the running value
  double eps = 1e-5;

  static BatchNormStats identity(std::size_t channels);
};

// Plain (tape-free) primitives.

/// Batch norm followed by max(0, .). Train mode normalizes with batch
/// statistics and updates the running ones; eval mode uses running stats.
NDTensor batchnorm_relu(const NDTensor& x, BatchNormStats& stats, Mode mode);

/// Kernel 3x1x1, stride 2, padding 1 max pooling along time:
/// L' = ceil(L / 2). Ties resolve to the earliest frame.
NDTensor temporal_maxpool3(const NDTensor& x);

/// Mean over (L, H, W) followed by a bias-free linear map. `x` is
/// C x L x H x W (returns num_classes) or batched (returns N x num_classes).
NDTensor global_avgpool_fc(const NDTensor& x, const NDTensor& weights);

struct XentResult {
  double loss;
  NDTensor d_logits;
};

/// -log softmax(logits)[label] and its gradient softmax - onehot.
XentResult softmax_xent(const NDTensor& logits, std::size_t label);

/// Records ReLU/max-pool branch decisions while alive, so a finite-difference
/// probe can tell whether two forwards took the same piecewise-linear branch.
class ScopedActivationPattern {
 public:
  ScopedActivationPattern();
  ~ScopedActivationPattern();
  ScopedActivationPattern(const ScopedActivationPattern&) = delete;
  ScopedActivationPattern& operator=(const ScopedActivationPattern&) = delete;

  [[nodiscard]] std::uint64_t hash() const;

 private:
  bool saved_enabled_;
  std::uint64_t saved_hash_;
};

// Tape-recorded ops used by networks. Activations are batched
// (N x C x L x H x W).
namespace ops {

Var conv3d(Tape& tape, const Var& x, const Var& kernel, Int3 stride, Int3 pad);

/// Batch norm with learnable gamma/beta held as variables; running stats live
/// in `stats` (its gamma/beta fields are ignored).
Var batchnorm(Tape& tape, const Var& x, const Var& gamma, const Var& beta,
              BatchNormStats& stats, Mode mode);
Var relu(Tape& tape, const Var& x);
Var add(Tape& tape, const Var& a, const Var& b);
Var concat_channels(Tape& tape, const Var& a, const Var& b);
Var temporal_maxpool3(Tape& tape, const Var& x);

/// N x C x L x H x W -> N x C.
Var global_avgpool(Tape& tape, const Var& x);
/// (N x C) times weights (classes x C) transposed -> N x classes.
Var linear(Tape& tape, const Var& x, const Var& weights);

Var correlation(Tape& tape, const Var& x, const Var& filter, const CorrelationConfig& cfg);

/// Mean cross-entropy over the batch; returns a one-element variable.
Var softmax_xent(Tape& tape, const Var& logits, std::span<const std::size_t> labels);

}  // namespace ops

}  // namespace corrnet
