#include "corrnet/conv.hpp"

#include <Eigen/Core>
#include <algorithm>

#include "corrnet/counters.hpp"

namespace corrnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct ConvDims {
  std::size_t batch;
  int cin, L, H, W;
  int cout, kt, ky, kx;
  int Lo, Ho, Wo;
  Int3 stride, pad;
  bool batched;

  [[nodiscard]] std::size_t in_sample() const {
    return static_cast<std::size_t>(cin) * L * H * W;
  }
  [[nodiscard]] std::size_t out_positions() const {
    return static_cast<std::size_t>(Lo) * Ho * Wo;
  }
  [[nodiscard]] std::size_t patch() const {
    return static_cast<std::size_t>(cin) * kt * ky * kx;
  }
  [[nodiscard]] bool pointwise() const {
    return kt == 1 && ky == 1 && kx == 1 && stride == Int3{} && pad == Int3{0, 0, 0};
  }
  [[nodiscard]] Shape out_shape() const {
    Shape s{static_cast<std::size_t>(cout), static_cast<std::size_t>(Lo),
            static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)};
    if (batched) s.insert(s.begin(), batch);
    return s;
  }
};

ConvDims conv_dims(const NDTensor& x, const LayerParams& p, Int3 stride, Int3 pad) {
  if (x.rank() != 4 && x.rank() != 5) throw ShapeError("conv3d input must be rank 4 or 5");
  if (p.kernel.rank() != 5) throw ShapeError("conv3d kernel must be C_out x C_in x Kt x Ky x Kx");
  const bool batched = x.rank() == 5;
  const std::size_t o = batched ? 1 : 0;
  ConvDims d{};
  d.batched = batched;
  d.batch = batched ? x.dim(0) : 1;
  d.cin = static_cast<int>(x.dim(o));
  d.L = static_cast<int>(x.dim(o + 1));
  d.H = static_cast<int>(x.dim(o + 2));
  d.W = static_cast<int>(x.dim(o + 3));
  d.cout = static_cast<int>(p.kernel.dim(0));
  d.kt = static_cast<int>(p.kernel.dim(2));
  d.ky = static_cast<int>(p.kernel.dim(3));
  d.kx = static_cast<int>(p.kernel.dim(4));
  if (static_cast<int>(p.kernel.dim(1)) != d.cin) {
    throw ShapeError("conv3d channel mismatch: input has " + std::to_string(d.cin) +
                     " channels, kernel expects " + std::to_string(p.kernel.dim(1)));
  }
  if (stride.t < 1 || stride.y < 1 || stride.x < 1) throw ShapeError("conv3d stride must be >= 1");
  if (pad.t < 0 || pad.y < 0 || pad.x < 0) throw ShapeError("conv3d padding must be >= 0");
  d.stride = stride;
  d.pad = pad;
  d.Lo = conv_output_extent(d.L, d.kt, stride.t, pad.t);
  d.Ho = conv_output_extent(d.H, d.ky, stride.y, pad.y);
  d.Wo = conv_output_extent(d.W, d.kx, stride.x, pad.x);
  if (p.bias && p.bias->shape() != Shape{static_cast<std::size_t>(d.cout)}) {
    throw ShapeError("conv3d bias must have C_out entries");
  }
  return d;
}

// Unfolds one sample into a (C_in*Kt*Ky*Kx) x (Lo*Ho*Wo) block of a patch
// matrix whose rows are `ld` apart.
void im2col(const double* x, const ConvDims& d, double* cols, std::size_t ld) {
  std::size_t row = 0;
  for (int c = 0; c < d.cin; ++c) {
    for (int a = 0; a < d.kt; ++a) {
      for (int b = 0; b < d.ky; ++b) {
        for (int e = 0; e < d.kx; ++e, ++row) {
          double* dst = cols + row * ld;
          for (int lo = 0; lo < d.Lo; ++lo) {
            const int l = lo * d.stride.t - d.pad.t + a;
            for (int ho = 0; ho < d.Ho; ++ho) {
              const int h = ho * d.stride.y - d.pad.y + b;
              double* out = dst + (static_cast<std::size_t>(lo) * d.Ho + ho) * d.Wo;
              if (l < 0 || l >= d.L || h < 0 || h >= d.H) {
                std::fill_n(out, d.Wo, 0.0);
                continue;
              }
              const double* src = x + ((static_cast<std::size_t>(c) * d.L + l) * d.H + h) * d.W;
              if (d.stride.x == 1) {
                const int lo_w = std::clamp(d.pad.x - e, 0, d.Wo);
                const int hi_w = std::clamp(d.W + d.pad.x - e, lo_w, d.Wo);
                std::fill(out, out + lo_w, 0.0);
                std::copy(src + lo_w - d.pad.x + e, src + hi_w - d.pad.x + e, out + lo_w);
                std::fill(out + hi_w, out + d.Wo, 0.0);
                continue;
              }
              for (int wo = 0; wo < d.Wo; ++wo) {
                const int w = wo * d.stride.x - d.pad.x + e;
                out[wo] = (w >= 0 && w < d.W) ? src[w] : 0.0;
              }
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvDims& d, double* dx, std::size_t ld) {
  std::size_t row = 0;
  for (int c = 0; c < d.cin; ++c) {
    for (int a = 0; a < d.kt; ++a) {
      for (int b = 0; b < d.ky; ++b) {
        for (int e = 0; e < d.kx; ++e, ++row) {
          const double* src_row = cols + row * ld;
          for (int lo = 0; lo < d.Lo; ++lo) {
            const int l = lo * d.stride.t - d.pad.t + a;
            if (l < 0 || l >= d.L) continue;
            for (int ho = 0; ho < d.Ho; ++ho) {
              const int h = ho * d.stride.y - d.pad.y + b;
              if (h < 0 || h >= d.H) continue;
              const double* in = src_row + (static_cast<std::size_t>(lo) * d.Ho + ho) * d.Wo;
              double* dst = dx + ((static_cast<std::size_t>(c) * d.L + l) * d.H + h) * d.W;
              if (d.stride.x == 1) {
                const int lo_w = std::clamp(d.pad.x - e, 0, d.Wo);
                const int hi_w = std::clamp(d.W + d.pad.x - e, lo_w, d.Wo);
                double* shifted = dst - d.pad.x + e;
                for (int wo = lo_w; wo < hi_w; ++wo) shifted[wo] += in[wo];
                continue;
              }
              for (int wo = 0; wo < d.Wo; ++wo) {
                const int w = wo * d.stride.x - d.pad.x + e;
                if (w >= 0 && w < d.W) dst[w] += in[wo];
              }
            }
          }
        }
      }
    }
  }
}

void conv_direct_sample(const double* x, const double* k, const ConvDims& d, double* y) {
  for (int co = 0; co < d.cout; ++co) {
    for (int lo = 0; lo < d.Lo; ++lo) {
      for (int ho = 0; ho < d.Ho; ++ho) {
        for (int wo = 0; wo < d.Wo; ++wo) {
          double acc = 0.0;
          for (int c = 0; c < d.cin; ++c) {
            for (int a = 0; a < d.kt; ++a) {
              const int l = lo * d.stride.t - d.pad.t + a;
              if (l < 0 || l >= d.L) continue;
              for (int b = 0; b < d.ky; ++b) {
                const int h = ho * d.stride.y - d.pad.y + b;
                if (h < 0 || h >= d.H) continue;
                for (int e = 0; e < d.kx; ++e) {
                  const int w = wo * d.stride.x - d.pad.x + e;
                  if (w < 0 || w >= d.W) continue;
                  acc += k[(((static_cast<std::size_t>(co) * d.cin + c) * d.kt + a) * d.ky + b) *
                               d.kx +
                           e] *
                         x[((static_cast<std::size_t>(c) * d.L + l) * d.H + h) * d.W + w];
                }
              }
            }
          }
          y[((static_cast<std::size_t>(co) * d.Lo + lo) * d.Ho + ho) * d.Wo + wo] = acc;
        }
      }
    }
  }
}

}  // namespace

Int3 LayerParams::extent() const {
  if (kernel.rank() != 5) throw ShapeError("LayerParams kernel must be rank 5");
  return {static_cast<int>(kernel.dim(2)), static_cast<int>(kernel.dim(3)),
          static_cast<int>(kernel.dim(4))};
}

int conv_output_extent(int n, int k, int stride, int pad) {
  const int span = n + 2 * pad - k;
  if (span < 0) throw ShapeError("convolution kernel larger than padded input");
  return span / stride + 1;
}

Int3 same_padding(Int3 kernel) {
  if (kernel.t % 2 == 0 || kernel.y % 2 == 0 || kernel.x % 2 == 0) {
    throw ShapeError("same padding requires odd kernel extents");
  }
  return {(kernel.t - 1) / 2, (kernel.y - 1) / 2, (kernel.x - 1) / 2};
}

namespace {

// Patch matrix of the whole batch: (C_in*Kt*Ky*Kx) x (N*Lo*Ho*Wo), sample n
// occupying columns [n*P, (n+1)*P).
std::vector<double> batch_cols(const NDTensor& x, const ConvDims& d) {
  const std::size_t P = d.out_positions();
  const std::size_t ld = d.batch * P;
  std::vector<double> cols(d.patch() * ld);
  for (std::size_t n = 0; n < d.batch; ++n) {
    const double* xs = x.data().data() + n * d.in_sample();
    if (d.pointwise()) {
      for (int c = 0; c < d.cin; ++c) {
        std::copy_n(xs + static_cast<std::size_t>(c) * P, P, cols.data() + c * ld + n * P);
      }
    } else {
      im2col(xs, d, cols.data() + n * P, ld);
    }
  }
  return cols;
}

}  // namespace

NDTensor conv3d(const NDTensor& x, const LayerParams& p, Int3 stride, Int3 pad, ConvAlgo algo) {
  const ConvDims d = conv_dims(x, p, stride, pad);
  NDTensor y(d.out_shape());
  const std::size_t P = d.out_positions();
  const std::size_t out_sample = static_cast<std::size_t>(d.cout) * P;
  const double* kptr = p.kernel.data().data();

  if (algo == ConvAlgo::direct) {
    for (std::size_t n = 0; n < d.batch; ++n) {
      conv_direct_sample(x.data().data() + n * d.in_sample(), kptr, d, y.data().data() + n * out_sample);
    }
  } else {
    const auto NP = static_cast<Eigen::Index>(d.batch * P);
    const std::vector<double> cols = batch_cols(x, d);
    RowMatrix out = ConstMatMap(kptr, d.cout, static_cast<Eigen::Index>(d.patch())) *
                    ConstMatMap(cols.data(), static_cast<Eigen::Index>(d.patch()), NP);
    for (std::size_t n = 0; n < d.batch; ++n) {
      for (int co = 0; co < d.cout; ++co) {
        std::copy_n(out.data() + co * NP + n * P, P, y.data().data() + n * out_sample + co * P);
      }
    }
  }
  if (p.bias) {
    for (std::size_t n = 0; n < d.batch; ++n) {
      double* ys = y.data().data() + n * out_sample;
      for (int co = 0; co < d.cout; ++co) {
        const double b = (*p.bias)[static_cast<std::size_t>(co)];
        for (std::size_t i = 0; i < P; ++i) ys[co * P + i] += b;
      }
    }
  }
  count_multiplies(static_cast<std::uint64_t>(d.batch) * d.cout * d.patch() * P);
  return y;
}

ConvGrads conv3d_backward(const NDTensor& x, const LayerParams& p, const NDTensor& d_out,
                          Int3 stride, Int3 pad) {
  const ConvDims d = conv_dims(x, p, stride, pad);
  if (d_out.shape() != d.out_shape()) {
    throw ShapeError("conv3d_backward: d_out shape " + shape_to_string(d_out.shape()) +
                     ", expected " + shape_to_string(d.out_shape()));
  }
  ConvGrads g{NDTensor(x.shape()), NDTensor(p.kernel.shape()), std::nullopt};
  if (p.bias) g.d_bias = NDTensor(p.bias->shape());

  const std::size_t P = d.out_positions();
  const std::size_t ld = d.batch * P;
  const auto K = static_cast<Eigen::Index>(d.patch());
  const auto NP = static_cast<Eigen::Index>(ld);
  const std::size_t out_sample = static_cast<std::size_t>(d.cout) * P;

  RowMatrix dy(d.cout, NP);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (int co = 0; co < d.cout; ++co) {
      std::copy_n(d_out.data().data() + n * out_sample + co * P, P, dy.data() + co * NP + n * P);
    }
  }
  const std::vector<double> cols = batch_cols(x, d);
  MatMap(g.d_kernel.data().data(), d.cout, K).noalias() =
      dy * ConstMatMap(cols.data(), K, NP).transpose();
  const RowMatrix d_cols = ConstMatMap(p.kernel.data().data(), d.cout, K).transpose() * dy;

  for (std::size_t n = 0; n < d.batch; ++n) {
    double* dxs = g.d_input.data().data() + n * d.in_sample();
    if (d.pointwise()) {
      for (int c = 0; c < d.cin; ++c) {
        std::copy_n(d_cols.data() + c * NP + n * P, P, dxs + static_cast<std::size_t>(c) * P);
      }
    } else {
      col2im_add(d_cols.data() + n * P, d, dxs, ld);
    }
  }
  if (g.d_bias) {
    for (int co = 0; co < d.cout; ++co) (*g.d_bias)[static_cast<std::size_t>(co)] = dy.row(co).sum();
  }
  return g;
}

NDTensor conv2plus1d(const NDTensor& x, const LayerParams& first, const LayerParams& second) {
  const NDTensor mid = conv3d(x, first, Int3{}, same_padding(first.extent()));
  return conv3d(mid, second, Int3{}, same_padding(second.extent()));
}

}  // namespace corrnet
