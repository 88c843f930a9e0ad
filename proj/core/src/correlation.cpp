#include "corrnet/correlation.hpp"

#include <algorithm>
#include <random>

#include "corrnet/counters.hpp"

namespace corrnet {

void CorrelationConfig::validate() const {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("correlation kernel K must be odd and >= 1, got " + std::to_string(kernel));
  }
  if (dilation < 1) throw ConfigError("correlation dilation must be >= 1");
  if (groups < 1) throw ConfigError("correlation groups must be >= 1");
  if (channels < 1 || length < 1) throw ConfigError("correlation needs C >= 1 and L >= 1");
  if (channels % groups != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by groups " +
                      std::to_string(groups));
  }
}

CorrelationFilter CorrelationFilter::ones(const CorrelationConfig& cfg) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.kernel);
  return {NDTensor::full({static_cast<std::size_t>(cfg.length),
                          static_cast<std::size_t>(cfg.channels), k, k},
                         1.0)};
}

CorrelationFilter CorrelationFilter::initialized(const CorrelationConfig& cfg,
                                                 std::uint64_t seed, double noise) {
  auto f = ones(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-noise, noise);
  for (auto& w : f.weights.data()) w += u(rng);
  return f;
}

namespace {

struct Geometry {
  std::size_t channels, length, height, width;
};

Geometry check_clip(const NDTensor& x, const CorrelationConfig& cfg) {
  cfg.validate();
  if (x.rank() != 4) throw ShapeError("correlation input must be C x L x H x W");
  if (x.dim(1) < 1) throw ShapeError("clip length must be >= 1");
  if (static_cast<int>(x.dim(0)) != cfg.channels || static_cast<int>(x.dim(1)) != cfg.length) {
    throw ShapeError("clip " + shape_to_string(x.shape()) +
                     " inconsistent with correlation config (C=" + std::to_string(cfg.channels) +
                     ", L=" + std::to_string(cfg.length) + ")");
  }
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

void check_filter(const CorrelationFilter& f, const CorrelationConfig& cfg) {
  const auto k = static_cast<std::size_t>(cfg.kernel);
  const Shape want{static_cast<std::size_t>(cfg.length), static_cast<std::size_t>(cfg.channels),
                   k, k};
  if (f.weights.shape() != want) {
    throw ShapeError("correlation filter shape " + shape_to_string(f.weights.shape()) +
                     ", expected " + shape_to_string(want));
  }
}

// Valid [lo, hi) range of output coordinates whose displaced partner lies
// inside [0, extent).
struct Span {
  std::size_t lo, hi;
};

Span valid_range(int offset, std::size_t extent) {
  const auto n = static_cast<long>(extent);
  const long lo = std::max(0L, -static_cast<long>(offset));
  const long hi = std::min(n, n - offset);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

namespace detail {

void correlate_clip_forward(const double* x, const double* filter, const CorrelationConfig& cfg,
                            std::size_t height, std::size_t width, double* out) {
  const std::size_t C = cfg.channels, L = cfg.length, K = cfg.kernel, g = cfg.group_size();
  const std::size_t plane = height * width;
  const std::size_t frame_stride = plane;          // between time steps of one channel
  const std::size_t channel_stride = L * plane;    // between channels
  const double inv_g = 1.0 / static_cast<double>(g);

  std::fill_n(out, static_cast<std::size_t>(cfg.output_channels()) * L * plane, 0.0);

  for (std::size_t t = 0; t < L; ++t) {
    const std::size_t searched_t = t == 0 ? 0 : t - 1;
    for (std::size_t grp = 0; grp < static_cast<std::size_t>(cfg.groups); ++grp) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        const int dy = cfg.offset(static_cast<int>(ky));
        const Span rows = valid_range(dy, height);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const int dx = cfg.offset(static_cast<int>(kx));
          const Span cols = valid_range(dx, width);
          double* dst = out + ((grp * K * K + ky * K + kx) * L + t) * plane;
          for (std::size_t cg = 0; cg < g; ++cg) {
            const std::size_t c = grp * g + cg;
            const double w = filter[((t * C + c) * K + ky) * K + kx] * inv_g;
            const double* ref = x + c * channel_stride + t * frame_stride;
            const double* srch = x + c * channel_stride + searched_t * frame_stride;
            for (std::size_t i = rows.lo; i < rows.hi; ++i) {
              const double* ref_row = ref + i * width;
              const double* srch_row = srch + (i + dy) * width + dx;
              double* dst_row = dst + i * width;
              for (std::size_t j = cols.lo; j < cols.hi; ++j) {
                dst_row[j] += w * ref_row[j] * srch_row[j];
              }
            }
          }
        }
      }
    }
  }
  count_multiplies(static_cast<std::uint64_t>(C) * K * K * L * plane);
}

void correlate_clip_adjoint(const double* x, const double* filter, const double* d_out,
                            const CorrelationConfig& cfg, std::size_t height,
                            std::size_t width, double* d_x, double* d_filter) {
  const std::size_t C = cfg.channels, L = cfg.length, K = cfg.kernel, g = cfg.group_size();
  const std::size_t plane = height * width;
  const std::size_t channel_stride = L * plane;
  const double inv_g = 1.0 / static_cast<double>(g);

  for (std::size_t t = 0; t < L; ++t) {
    const std::size_t searched_t = t == 0 ? 0 : t - 1;
    for (std::size_t grp = 0; grp < static_cast<std::size_t>(cfg.groups); ++grp) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        const int dy = cfg.offset(static_cast<int>(ky));
        const Span rows = valid_range(dy, height);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const int dx = cfg.offset(static_cast<int>(kx));
          const Span cols = valid_range(dx, width);
          const double* up = d_out + ((grp * K * K + ky * K + kx) * L + t) * plane;
          for (std::size_t cg = 0; cg < g; ++cg) {
            const std::size_t c = grp * g + cg;
            const std::size_t fidx = ((t * C + c) * K + ky) * K + kx;
            const double w = filter[fidx] * inv_g;
            const double* ref = x + c * channel_stride + t * plane;
            const double* srch = x + c * channel_stride + searched_t * plane;
            double* d_ref = d_x + c * channel_stride + t * plane;
            double* d_srch = d_x + c * channel_stride + searched_t * plane;
            double filter_acc = 0.0;
            for (std::size_t i = rows.lo; i < rows.hi; ++i) {
              const double* up_row = up + i * width;
              const double* ref_row = ref + i * width;
              const std::size_t srch_off = (i + dy) * width + dx;
              const double* srch_row = srch + srch_off;
              double* d_ref_row = d_ref + i * width;
              double* d_srch_row = d_srch + srch_off;
              for (std::size_t j = cols.lo; j < cols.hi; ++j) {
                const double u = up_row[j];
                filter_acc += u * ref_row[j] * srch_row[j];
                d_ref_row[j] += w * u * srch_row[j];
                d_srch_row[j] += w * u * ref_row[j];
              }
            }
            if (d_filter != nullptr) d_filter[fidx] += filter_acc * inv_g;
          }
        }
      }
    }
  }
}

}  // namespace detail

NDTensor correlate_pair(const NDTensor& a, const NDTensor& b, const CorrelationConfig& cfg,
                        const NDTensor& filter_slice) {
  cfg.validate();
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw ShapeError("correlate_pair expects two C x H x W frames of equal shape");
  }
  if (static_cast<int>(a.dim(0)) != cfg.channels) {
    throw ShapeError("frame channels do not match correlation config");
  }
  const auto C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const auto K = static_cast<std::size_t>(cfg.kernel);
  if (filter_slice.shape() != Shape{C, K, K}) {
    throw ShapeError("filter slice must be C x K x K, got " +
                     shape_to_string(filter_slice.shape()));
  }

  // A two-frame clip [a, b] yields slice 1 = correlate(a searched, b reference).
  CorrelationConfig two = cfg;
  two.length = 2;
  NDTensor clip({C, 2, H, W});
  const std::size_t plane = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    std::copy_n(a.data().begin() + c * plane, plane, clip.data().begin() + (c * 2) * plane);
    std::copy_n(b.data().begin() + c * plane, plane, clip.data().begin() + (c * 2 + 1) * plane);
  }
  NDTensor filt({2, C, K, K});
  std::copy(filter_slice.data().begin(), filter_slice.data().end(), filt.data().begin());
  std::copy(filter_slice.data().begin(), filter_slice.data().end(),
            filt.data().begin() + filter_slice.size());

  NDTensor full({static_cast<std::size_t>(two.output_channels()), 2, H, W});
  detail::correlate_clip_forward(clip.data().data(), filt.data().data(), two, H, W,
                                 full.data().data());
  NDTensor out({static_cast<std::size_t>(cfg.output_channels()), H, W});
  for (std::size_t oc = 0; oc < out.dim(0); ++oc) {
    std::copy_n(full.data().begin() + (oc * 2 + 1) * plane, plane,
                out.data().begin() + oc * plane);
  }
  return out;
}

NDTensor correlate_clip(const NDTensor& x, const CorrelationConfig& cfg,
                        const CorrelationFilter& filter) {
  const Geometry geo = check_clip(x, cfg);
  check_filter(filter, cfg);
  NDTensor out({static_cast<std::size_t>(cfg.output_channels()), geo.length, geo.height,
                geo.width});
  detail::correlate_clip_forward(x.data().data(), filter.weights.data().data(), cfg, geo.height,
                                 geo.width, out.data().data());
  return out;
}

CorrelationGrads correlate_clip_backward(const NDTensor& x, const CorrelationConfig& cfg,
                                         const CorrelationFilter& filter,
                                         const NDTensor& d_out) {
  const Geometry geo = check_clip(x, cfg);
  check_filter(filter, cfg);
  const Shape out_shape{static_cast<std::size_t>(cfg.output_channels()), geo.length, geo.height,
                        geo.width};
  if (d_out.shape() != out_shape) {
    throw ShapeError("d_out shape " + shape_to_string(d_out.shape()) + ", expected " +
                     shape_to_string(out_shape));
  }
  CorrelationGrads grads{NDTensor(x.shape()), NDTensor(filter.weights.shape())};
  detail::correlate_clip_adjoint(x.data().data(), filter.weights.data().data(),
                                 d_out.data().data(), cfg, geo.height, geo.width,
                                 grads.d_input.data().data(),
                                 cfg.learnable ? grads.d_filter.data().data() : nullptr);
  return grads;
}

NDTensor correlate_clip_oracle(const NDTensor& x, const CorrelationConfig& cfg,
                               const CorrelationFilter& filter) {
  const Geometry geo = check_clip(x, cfg);
  check_filter(filter, cfg);
  const int K = cfg.kernel;
  const int g = cfg.group_size();
  const auto H = static_cast<int>(geo.height);
  const auto W = static_cast<int>(geo.width);
  NDTensor out({static_cast<std::size_t>(cfg.output_channels()), geo.length, geo.height,
                geo.width});
  for (std::size_t t = 0; t < geo.length; ++t) {
    const std::size_t prev = t == 0 ? 0 : t - 1;
    for (int grp = 0; grp < cfg.groups; ++grp) {
      for (int ky = 0; ky < K; ++ky) {
        for (int kx = 0; kx < K; ++kx) {
          const auto oc = static_cast<std::size_t>(grp * K * K + ky * K + kx);
          for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
              double sum = 0.0;
              for (int cg = 0; cg < g; ++cg) {
                const auto c = static_cast<std::size_t>(grp * g + cg);
                const int si = i + cfg.offset(ky);
                const int sj = j + cfg.offset(kx);
                double searched = 0.0;
                if (si >= 0 && si < H && sj >= 0 && sj < W) {
                  searched = x.at({c, prev, static_cast<std::size_t>(si),
                                   static_cast<std::size_t>(sj)});
                }
                const double ref =
                    x.at({c, t, static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
                const double w = filter.weights.at(
                    {t, c, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)});
                sum += w * ref * searched;
              }
              out.at({oc, t, static_cast<std::size_t>(i), static_cast<std::size_t>(j)}) =
                  sum / static_cast<double>(g);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace corrnet
