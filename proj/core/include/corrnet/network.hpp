#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "corrnet/netspec.hpp"
#include "corrnet/ops.hpp"

namespace corrnet {

struct NamedParameter {
  std::string name;
  Var var;
};

/// Non-trainable state that still belongs in a checkpoint (running stats).
struct NamedBuffer {
  std::string name;
  NDTensor* tensor;
};

/// A network assembled from a NetSpec. Owns its parameters; not safe for
/// concurrent mutation.
class Network {
 public:
  Network(NetSpec spec, std::uint64_t seed);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  /// `input` is N x C x L x H x W; returns N x num_classes logits.
  Var forward(Tape& tape, const Var& input, Mode mode);

  /// Eval-mode logits without recording gradients.
  NDTensor predict(const NDTensor& batch);

  /// Eval-mode pass that records the output shape of the stem, every block
  /// and the head ("head.fc"), in execution order.
  std::vector<std::pair<std::string, Shape>> trace_shapes(const NDTensor& batch);

  [[nodiscard]] const NetSpec& spec() const;
  [[nodiscard]] const std::vector<NamedParameter>& parameters() const;
  [[nodiscard]] std::vector<NamedBuffer> buffers();
  [[nodiscard]] std::size_t parameter_count() const;

  /// Throws ConfigError when no parameter has that name.
  [[nodiscard]] Var parameter(const std::string& name) const;

  /// Names of correlation blocks ("res2.1", ...).
  [[nodiscard]] std::vector<std::string> correlation_blocks() const;

  /// Configuration of the correlation operator inside block `block`.
  [[nodiscard]] CorrelationConfig correlation_config(const std::string& block) const;

  /// Current filter weights (L x C x K x K) of a correlation block, including
  /// frozen all-ones filters that are not registered as parameters.
  [[nodiscard]] NDTensor correlation_filter(const std::string& block) const;

  /// Zeroes the kernel of the channel-restoring 1x1x1 convolution of a
  /// correlation_sum block.
  void zero_restore_conv(const std::string& block);

 private:
  Var run(Tape& tape, const Var& input, Mode mode,
          std::vector<std::pair<std::string, Shape>>* trace);

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace corrnet
