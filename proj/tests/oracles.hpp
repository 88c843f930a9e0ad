// Independent reference implementations and numeric helpers for tests.
// Nothing here calls into the optimized library kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "corrnet/tensor.hpp"

namespace corrnet::oracle {

inline NDTensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                              double hi = 1.0) {
  NDTensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Direct evaluation of the pairwise correlation of a searched frame `a`
/// against a reference frame `b` (both C x H x W), weighted by a C x K x K
/// filter and normalized by the group size.
inline NDTensor pair_correlation_loops(const NDTensor& a, const NDTensor& b, int K, int D, int G,
                                       const NDTensor& filter) {
  const int C = static_cast<int>(a.dim(0)), H = static_cast<int>(a.dim(1)),
            W = static_cast<int>(a.dim(2));
  const int g = C / G, r = (K - 1) / 2;
  NDTensor out({static_cast<std::size_t>(G * K * K), a.dim(1), a.dim(2)});
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      for (int grp = 0; grp < G; ++grp) {
        for (int ky = 0; ky < K; ++ky) {
          for (int kx = 0; kx < K; ++kx) {
            const int dy = (ky - r) * D, dx = (kx - r) * D;
            double s = 0.0;
            for (int c = grp * g; c < (grp + 1) * g; ++c) {
              const int y = i + dy, x = j + dx;
              const double av = (y >= 0 && y < H && x >= 0 && x < W)
                                    ? a.at({static_cast<std::size_t>(c), static_cast<std::size_t>(y),
                                            static_cast<std::size_t>(x)})
                                    : 0.0;
              s += filter.at({static_cast<std::size_t>(c), static_cast<std::size_t>(ky),
                              static_cast<std::size_t>(kx)}) *
                   b.at({static_cast<std::size_t>(c), static_cast<std::size_t>(i),
                         static_cast<std::size_t>(j)}) *
                   av;
            }
            out.at({static_cast<std::size_t>(grp * K * K + ky * K + kx),
                    static_cast<std::size_t>(i), static_cast<std::size_t>(j)}) = s / g;
          }
        }
      }
    }
  }
  return out;
}

/// Channel-major C x H x W frame t of a C x L x H x W clip.
inline NDTensor frame(const NDTensor& clip, std::size_t t) {
  const std::size_t C = clip.dim(0), L = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  NDTensor f({C, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    std::copy_n(clip.data().begin() + (c * L + t) * H * W, H * W, f.data().begin() + c * H * W);
  }
  return f;
}

/// Filter slice t (C x K x K) of an L x C x K x K filter.
inline NDTensor filter_slice(const NDTensor& filter, std::size_t t) {
  const std::size_t C = filter.dim(1), K = filter.dim(2);
  NDTensor s({C, K, K});
  std::copy_n(filter.data().begin() + t * C * K * K, C * K * K, s.data().begin());
  return s;
}

/// Clip correlation assembled from per-pair loops: slice 0 pairs frame 0
/// with itself, slice t pairs frame t-1 (searched) with frame t (reference).
inline NDTensor clip_correlation_loops(const NDTensor& clip, int K, int D, int G,
                                       const NDTensor& filter) {
  const std::size_t L = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
  const auto out_c = static_cast<std::size_t>(G * K * K);
  NDTensor out({out_c, L, H, W});
  for (std::size_t t = 0; t < L; ++t) {
    const NDTensor s = pair_correlation_loops(frame(clip, t == 0 ? 0 : t - 1), frame(clip, t), K,
                                              D, G, filter_slice(filter, t));
    for (std::size_t c = 0; c < out_c; ++c) {
      std::copy_n(s.data().begin() + c * H * W, H * W, out.data().begin() + (c * L + t) * H * W);
    }
  }
  return out;
}

/// Seven nested loops over (co, lo, ho, wo, ci, kt, ky·kx) with zero padding.
inline NDTensor conv3d_loops(const NDTensor& x, const NDTensor& k, int st, int sy, int sx, int pt,
                             int py, int px) {
  const int Ci = static_cast<int>(x.dim(0)), L = static_cast<int>(x.dim(1)),
            H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const int Co = static_cast<int>(k.dim(0)), Kt = static_cast<int>(k.dim(2)),
            Ky = static_cast<int>(k.dim(3)), Kx = static_cast<int>(k.dim(4));
  const int Lo = (L + 2 * pt - Kt) / st + 1, Ho = (H + 2 * py - Ky) / sy + 1,
            Wo = (W + 2 * px - Kx) / sx + 1;
  NDTensor y({static_cast<std::size_t>(Co), static_cast<std::size_t>(Lo),
              static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  auto z = [](int v) { return static_cast<std::size_t>(v); };
  for (int co = 0; co < Co; ++co)
    for (int lo = 0; lo < Lo; ++lo)
      for (int ho = 0; ho < Ho; ++ho)
        for (int wo = 0; wo < Wo; ++wo) {
          double s = 0.0;
          for (int ci = 0; ci < Ci; ++ci)
            for (int a = 0; a < Kt; ++a)
              for (int b = 0; b < Ky; ++b)
                for (int e = 0; e < Kx; ++e) {
                  const int l = lo * st - pt + a, h = ho * sy - py + b, w = wo * sx - px + e;
                  if (l < 0 || l >= L || h < 0 || h >= H || w < 0 || w >= W) continue;
                  s += k.at({z(co), z(ci), z(a), z(b), z(e)}) * x.at({z(ci), z(l), z(h), z(w)});
                }
          y.at({z(co), z(lo), z(ho), z(wo)}) = s;
        }
  return y;
}

/// Central finite-difference derivative of a scalar function of `x` at
/// coordinate i.
inline double central_difference(const std::function<double()>& f, double& coord, double h = 1e-5) {
  const double saved = coord;
  coord = saved + h;
  const double fp = f();
  coord = saved - h;
  const double fm = f();
  coord = saved;
  return (fp - fm) / (2.0 * h);
}

/// <a, b> over all elements.
inline double dot(const NDTensor& a, const NDTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const NDTensor& a, const NDTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// |a - n| / max(|a|, |n|), falling back to the absolute error when both
/// are below `tiny`.
inline double rel_err(double a, double n, double tiny = 1e-9) {
  const double scale = std::max(std::abs(a), std::abs(n));
  return scale < tiny ? std::abs(a - n) : std::abs(a - n) / scale;
}

}  // namespace corrnet::oracle
