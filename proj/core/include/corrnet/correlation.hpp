#pragma once

#include <cstddef>
#include <cstdint>

#include "corrnet/tensor.hpp"

namespace corrnet {

/// Parameters of one correlation operator instance.
///
/// The operator compares every pixel of a reference frame against a K x K
/// window of displaced pixels in a searched frame. Offsets are sampled every
/// `dilation` pixels, so the window spans (K - 1) * dilation + 1 pixels.
/// Channels are split into `groups` groups of `group_size()` channels; each
/// group yields its own K * K similarity maps.
struct CorrelationConfig {
  int kernel = 3;        // K, odd
  int dilation = 1;      // D >= 1
  int groups = 1;        // G >= 1, divides channels
  bool learnable = true;
  int channels = 1;      // C_in
  int length = 1;        // L

  [[nodiscard]] int group_size() const { return channels / groups; }
  [[nodiscard]] int radius() const { return (kernel - 1) / 2; }
  [[nodiscard]] int window_span() const { return (kernel - 1) * dilation + 1; }
  [[nodiscard]] int output_channels() const { return groups * kernel * kernel; }

  /// Displacement (in pixels) of window row/column index `k` in [0, K).
  [[nodiscard]] int offset(int k) const { return (k - radius()) * dilation; }

  /// Throws ConfigError when K is even, D < 1, G < 1 or G does not divide C.
  void validate() const;

  friend bool operator==(const CorrelationConfig&, const CorrelationConfig&) = default;
};

/// Filter weights, shape L x C_in x K x K: one weight per time step, channel
/// and window offset.
struct CorrelationFilter {
  NDTensor weights;

  static CorrelationFilter ones(const CorrelationConfig& cfg);
  /// All-ones plus uniform noise in [-noise, noise].
  static CorrelationFilter initialized(const CorrelationConfig& cfg, std::uint64_t seed,
                                       double noise = 0.01);
};

struct CorrelationGrads {
  NDTensor d_input;   // C_in x L x H x W
  NDTensor d_filter;  // L x C_in x K x K
};

/// Correlates a searched frame `a` against a reference frame `b` (both
/// C x H x W) using a C x K x K filter slice.
///
/// Output channel `group * K*K + ky * K + kx` at (i, j) holds
///   (1/g) * sum_{c in group} filter[c, ky, kx] * b[c, i, j] * a[c, i + dy, j + dx]
/// with (dy, dx) = (offset(ky), offset(kx)). Positions of `a` outside the
/// image contribute zero.
NDTensor correlate_pair(const NDTensor& a, const NDTensor& b, const CorrelationConfig& cfg,
                        const NDTensor& filter_slice);

/// Clip form (C x L x H x W in, (G*K*K) x L x H x W out). Time slice 0 is the
/// self-correlation of frame 0; slice t >= 1 matches frame t (reference)
/// against frame t-1 (searched). Slice t uses filter[t].
NDTensor correlate_clip(const NDTensor& x, const CorrelationConfig& cfg,
                        const CorrelationFilter& filter);

/// Exact adjoint of correlate_clip. When the filter is not learnable,
/// d_filter is all zeros.
CorrelationGrads correlate_clip_backward(const NDTensor& x, const CorrelationConfig& cfg,
                                         const CorrelationFilter& filter,
                                         const NDTensor& d_out);

/// Naive reference: straight nested loops over (t, group, ky, kx, i, j, c),
/// no reordering. Ground truth for the optimized kernel.
NDTensor correlate_clip_oracle(const NDTensor& x, const CorrelationConfig& cfg,
                               const CorrelationFilter& filter);

namespace detail {

// Raw-buffer kernels used by the batched autograd op. `x` and `out` point at
// one sample; `d_x` and `d_filter` are accumulated into, not overwritten.
void correlate_clip_forward(const double* x, const double* filter, const CorrelationConfig& cfg,
                            std::size_t height, std::size_t width, double* out);
void correlate_clip_adjoint(const double* x, const double* filter, const double* d_out,
                            const CorrelationConfig& cfg, std::size_t height,
                            std::size_t width, double* d_x, double* d_filter);

}  // namespace detail

}  // namespace corrnet
