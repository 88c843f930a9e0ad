#pragma once

#include <optional>

#include "corrnet/tensor.hpp"

namespace corrnet {

/// (time, height, width) triple used for strides, paddings and kernel extents.
struct Int3 {
  int t = 1;
  int y = 1;
  int x = 1;
  friend bool operator==(const Int3&, const Int3&) = default;
};

/// Convolution weights: kernel C_out x C_in x K_t x K_y x K_x, optional bias.
struct LayerParams {
  NDTensor kernel;
  std::optional<NDTensor> bias;

  [[nodiscard]] Int3 extent() const;
};

/// Output extent along one axis: floor((n + 2 * pad - k) / stride) + 1.
int conv_output_extent(int n, int k, int stride, int pad);

/// "same" padding for odd kernels, (k - 1) / 2 per axis.
Int3 same_padding(Int3 kernel);

enum class ConvAlgo { gemm, direct };

/// Cross-correlation style 3D convolution. `x` is C_in x L x H x W or
/// N x C_in x L x H x W; the result has matching rank.
NDTensor conv3d(const NDTensor& x, const LayerParams& p, Int3 stride, Int3 pad,
                ConvAlgo algo = ConvAlgo::gemm);

struct ConvGrads {
  NDTensor d_input;
  NDTensor d_kernel;
  std::optional<NDTensor> d_bias;
};

ConvGrads conv3d_backward(const NDTensor& x, const LayerParams& p, const NDTensor& d_out,
                          Int3 stride, Int3 pad);

/// Two stride-1 "same" convolutions applied in the order given: `first`
/// then `second`. With a 3x1x1 and a 1x3x3 kernel this is the factorized
/// spatiotemporal convolution.
NDTensor conv2plus1d(const NDTensor& x, const LayerParams& first, const LayerParams& second);

}  // namespace corrnet
