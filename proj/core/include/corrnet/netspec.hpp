#pragma once

#include <optional>
#include <string>
#include <vector>

#include "corrnet/conv.hpp"

namespace corrnet {

enum class BlockKind { bottleneck_2plus1d, bottleneck_2d, correlation_sum, correlation_concat };

std::string to_string(BlockKind kind);
BlockKind parse_block_kind(const std::string& s);

/// Correlation settings carried by a block. Channels and clip length are
/// filled in from the block's position when the network is assembled.
struct CorrelationSettings {
  int kernel = 3;
  int dilation = 1;
  int groups = 1;
  bool learnable = true;
  friend bool operator==(const CorrelationSettings&, const CorrelationSettings&) = default;
};

/// One block. For residual kinds (in, mid, out) are the bottleneck widths;
/// for correlation kinds `in == out == C` and `mid` is the reduced width fed
/// to the correlation operator.
struct BlockSpec {
  BlockKind kind = BlockKind::bottleneck_2plus1d;
  int in = 0;
  int mid = 0;
  int out = 0;
  Int3 stride{};
  std::optional<CorrelationSettings> corr;

  [[nodiscard]] bool is_correlation() const {
    return kind == BlockKind::correlation_sum || kind == BlockKind::correlation_concat;
  }
  [[nodiscard]] bool has_projection() const {
    return !is_correlation() && (in != out || stride != Int3{});
  }
  /// Channels produced by the correlation operator, G * K * K.
  [[nodiscard]] int correlation_channels() const;

  void validate() const;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct StageSpec {
  std::string name;
  std::vector<BlockSpec> blocks;
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct InputShape {
  int channels = 3;
  int length = 8;
  int height = 32;
  int width = 32;
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

/// Declarative network description.
///
/// The stem is a 1x7x7 convolution with stride (1, 2, 2); `stem_channels == 0`
/// means no stem (the head then sees the raw input). Correlation blocks may
/// only live in stages listed in `corr_insertions`, which must be a subset of
/// {res2, res3, res4}.
struct NetSpec {
  std::string name = "net";
  InputShape input{};
  int stem_channels = 16;
  std::vector<StageSpec> stages;
  std::vector<std::string> corr_insertions;
  int num_classes = 8;

  void validate() const;
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

inline constexpr Int3 kStemKernel{1, 7, 7};
inline constexpr Int3 kStemStride{1, 2, 2};
inline constexpr Int3 kStemPad{0, 3, 3};

/// Line-oriented text form, first line `netspec v1`.
std::string to_text(const NetSpec& spec);
NetSpec netspec_from_text(const std::string& text);
NetSpec load_netspec(const std::string& path);
void save_netspec(const NetSpec& spec, const std::string& path);

enum class BaselineKind { r2d, r2plus1d };
enum class Scale { tiny, paper26 };

BaselineKind parse_baseline_kind(const std::string& s);

/// Knobs of the correlation network used by the ablations.
struct CorrNetOptions {
  int kernel = 3;
  int dilation = 1;
  int group_size = 4;  // g; ignored when grouping is off
  bool grouping = true;
  bool learnable = true;
  BlockKind block = BlockKind::correlation_sum;
  int num_classes = 8;
};

NetSpec build_corrnet_tiny(const CorrNetOptions& opts = {});
NetSpec build_corrnet_paper26(int clip_length = 32, int num_classes = 400);
NetSpec build_baseline(BaselineKind kind, Scale scale, int num_classes = 8);

/// Resolves the named presets used by the CLI (corrnet-tiny, r2d-tiny,
/// r2plus1d-tiny, r2d-26, r2plus1d-26, corrnet-26, linear) or loads a file.
NetSpec resolve_netspec(const std::string& name_or_path);

/// Same spec with every correlation block removed.
NetSpec strip_correlation(const NetSpec& spec);

}  // namespace corrnet
