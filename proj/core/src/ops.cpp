#include "corrnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "corrnet/counters.hpp"

namespace corrnet {

namespace {

struct ChannelLayout {
  std::size_t batch, channels, inner;
};

ChannelLayout channel_layout(const NDTensor& x) {
  const std::size_t ax = channel_axis(x);
  const std::size_t batch = ax == 0 ? 1 : x.dim(0);
  const std::size_t channels = x.dim(ax);
  return {batch, channels, x.size() / batch / channels};
}

struct PatternState {
  bool enabled = false;
  std::uint64_t hash = 1469598103934665603ULL;
};

PatternState& pattern_state() {
  thread_local PatternState state;
  return state;
}

void mix_pattern(std::uint64_t bits) {
  auto& s = pattern_state();
  s.hash ^= bits + 0x9e3779b97f4a7c15ULL + (s.hash << 6) + (s.hash >> 2);
}

// Folds a run of boolean decisions into the activation pattern.
template <typename Pred>
void record_decisions(std::size_t n, Pred&& taken) {
  if (!pattern_state().enabled) return;
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    word = (word << 1) | (taken(i) ? 1U : 0U);
    if (i % 64 == 63) {
      mix_pattern(word);
      word = 0;
    }
  }
  mix_pattern(word ^ n);
}

// Batch-norm forward shared by the plain and the tape variant. Fills x_hat
// and inv_std (per channel) for the backward pass.
NDTensor batchnorm_forward(const NDTensor& x, const NDTensor& gamma, const NDTensor& beta,
                           BatchNormStats& stats, Mode mode, NDTensor& x_hat,
                           std::vector<double>& inv_std) {
  const auto lay = channel_layout(x);
  if (gamma.size() != lay.channels || beta.size() != lay.channels ||
      stats.running_mean.size() != lay.channels || stats.running_var.size() != lay.channels) {
    throw ShapeError("batchnorm statistics must have one entry per channel");
  }
  NDTensor y(x.shape());
  x_hat = NDTensor(x.shape());
  inv_std.assign(lay.channels, 0.0);
  const double count = static_cast<double>(lay.batch * lay.inner);

  for (std::size_t c = 0; c < lay.channels; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t n = 0; n < lay.batch; ++n) {
        const double* p = x.data().data() + (n * lay.channels + c) * lay.inner;
        for (std::size_t i = 0; i < lay.inner; ++i) s += p[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (std::size_t n = 0; n < lay.batch; ++n) {
        const double* p = x.data().data() + (n * lay.channels + c) * lay.inner;
        for (std::size_t i = 0; i < lay.inner; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / count;
      stats.running_mean[c] = stats.momentum * stats.running_mean[c] + (1.0 - stats.momentum) * mean;
      stats.running_var[c] = stats.momentum * stats.running_var[c] + (1.0 - stats.momentum) * var;
    } else {
      mean = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + stats.eps);
    inv_std[c] = is;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const std::size_t off = (n * lay.channels + c) * lay.inner;
      for (std::size_t i = 0; i < lay.inner; ++i) {
        const double xh = (x[off + i] - mean) * is;
        x_hat[off + i] = xh;
        y[off + i] = gamma[c] * xh + beta[c];
      }
    }
  }
  return y;
}

}  // namespace

BatchNormStats BatchNormStats::identity(std::size_t channels) {
  return {NDTensor::full({channels}, 1.0), NDTensor({channels}), NDTensor({channels}),
          NDTensor::full({channels}, 1.0)};
}

NDTensor batchnorm_relu(const NDTensor& x, BatchNormStats& stats, Mode mode) {
  NDTensor x_hat;
  std::vector<double> inv_std;
  NDTensor y = batchnorm_forward(x, stats.gamma, stats.beta, stats, mode, x_hat, inv_std);
  for (auto& v : y.data()) v = std::max(v, 0.0);
  return y;
}

namespace {

struct MaxPoolResult {
  NDTensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

MaxPoolResult temporal_maxpool3_impl(const NDTensor& x) {
  const std::size_t ax = channel_axis(x);
  const std::size_t L = x.dim(ax + 1);
  const std::size_t plane = x.dim(ax + 2) * x.dim(ax + 3);
  const std::size_t series = x.size() / (L * plane);  // batch * channels
  const std::size_t Lo = (L + 1) / 2;
  Shape out_shape = x.shape();
  out_shape[ax + 1] = Lo;
  MaxPoolResult r{NDTensor(out_shape), std::vector<std::size_t>(shape_product(out_shape))};
  for (std::size_t s = 0; s < series; ++s) {
    for (std::size_t to = 0; to < Lo; ++to) {
      const long center = static_cast<long>(2 * to);
      const long lo = std::max(0L, center - 1);
      const long hi = std::min(static_cast<long>(L) - 1, center + 1);
      for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = (s * L + static_cast<std::size_t>(lo)) * plane + p;
        for (long t = lo + 1; t <= hi; ++t) {
          const std::size_t idx = (s * L + static_cast<std::size_t>(t)) * plane + p;
          if (x[idx] > x[best]) best = idx;
        }
        const std::size_t o = (s * Lo + to) * plane + p;
        r.out[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  record_decisions(r.argmax.size(), [&](std::size_t i) { return (r.argmax[i] & 1U) != 0; });
  record_decisions(r.argmax.size(), [&](std::size_t i) { return (r.argmax[i] & 2U) != 0; });
  return r;
}

}  // namespace

NDTensor temporal_maxpool3(const NDTensor& x) { return temporal_maxpool3_impl(x).out; }

NDTensor global_avgpool_fc(const NDTensor& x, const NDTensor& weights) {
  const auto lay = channel_layout(x);
  if (weights.rank() != 2 || weights.dim(1) != lay.channels) {
    throw ShapeError("fc weights must be num_classes x C");
  }
  const std::size_t classes = weights.dim(0);
  NDTensor logits(x.rank() == 5 ? Shape{lay.batch, classes} : Shape{classes});
  for (std::size_t n = 0; n < lay.batch; ++n) {
    std::vector<double> pooled(lay.channels);
    for (std::size_t c = 0; c < lay.channels; ++c) {
      const double* p = x.data().data() + (n * lay.channels + c) * lay.inner;
      double s = 0.0;
      for (std::size_t i = 0; i < lay.inner; ++i) s += p[i];
      pooled[c] = s / static_cast<double>(lay.inner);
    }
    for (std::size_t k = 0; k < classes; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < lay.channels; ++c) s += weights[k * lay.channels + c] * pooled[c];
      logits[n * classes + k] = s;
    }
  }
  count_multiplies(static_cast<std::uint64_t>(lay.batch) * classes * lay.channels);
  return logits;
}

XentResult softmax_xent(const NDTensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw ShapeError("softmax_xent expects a logit vector");
  const std::size_t n = logits.size();
  if (label >= n) throw ShapeError("label out of range");
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - m);
  const double log_z = m + std::log(z);
  XentResult r{log_z - logits[label], NDTensor(logits.shape())};
  for (std::size_t k = 0; k < n; ++k) r.d_logits[k] = std::exp(logits[k] - log_z);
  r.d_logits[label] -= 1.0;
  return r;
}

ScopedActivationPattern::ScopedActivationPattern()
    : saved_enabled_(pattern_state().enabled), saved_hash_(pattern_state().hash) {
  pattern_state() = PatternState{true, 1469598103934665603ULL};
}

ScopedActivationPattern::~ScopedActivationPattern() {
  pattern_state() = PatternState{saved_enabled_, saved_hash_};
}

std::uint64_t ScopedActivationPattern::hash() const { return pattern_state().hash; }

namespace ops {

Var conv3d(Tape& tape, const Var& x, const Var& kernel, Int3 stride, Int3 pad) {
  LayerParams p{kernel->value, std::nullopt};
  NDTensor y = corrnet::conv3d(x->value, p, stride, pad);
  return tape.record("conv3d", {x, kernel}, std::move(y),
                     [x, kernel, stride, pad](const NDTensor& dy) {
                       LayerParams lp{kernel->value, std::nullopt};
                       ConvGrads g = conv3d_backward(x->value, lp, dy, stride, pad);
                       if (x->requires_grad) x->accumulate(std::move(g.d_input));
                       if (kernel->requires_grad) kernel->accumulate(std::move(g.d_kernel));
                     });
}

Var batchnorm(Tape& tape, const Var& x, const Var& gamma, const Var& beta,
              BatchNormStats& stats, Mode mode) {
  auto x_hat = std::make_shared<NDTensor>();
  auto inv_std = std::make_shared<std::vector<double>>();
  NDTensor y = batchnorm_forward(x->value, gamma->value, beta->value, stats, mode, *x_hat,
                                 *inv_std);
  return tape.record(
      "batchnorm", {x, gamma, beta}, std::move(y),
      [x, gamma, beta, x_hat, inv_std, mode](const NDTensor& dy) {
        const auto lay = channel_layout(dy);
        const double count = static_cast<double>(lay.batch * lay.inner);
        NDTensor dgamma(gamma->value.shape()), dbeta(beta->value.shape());
        NDTensor dx(dy.shape());
        for (std::size_t c = 0; c < lay.channels; ++c) {
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t n = 0; n < lay.batch; ++n) {
            const std::size_t off = (n * lay.channels + c) * lay.inner;
            for (std::size_t i = 0; i < lay.inner; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xh += dy[off + i] * (*x_hat)[off + i];
            }
          }
          dgamma[c] = sum_dy_xh;
          dbeta[c] = sum_dy;
          const double scale = gamma->value[c] * (*inv_std)[c];
          const double mean_dy = sum_dy / count;
          const double mean_dy_xh = sum_dy_xh / count;
          for (std::size_t n = 0; n < lay.batch; ++n) {
            const std::size_t off = (n * lay.channels + c) * lay.inner;
            for (std::size_t i = 0; i < lay.inner; ++i) {
              dx[off + i] = mode == Mode::train
                                ? scale * (dy[off + i] - mean_dy - (*x_hat)[off + i] * mean_dy_xh)
                                : scale * dy[off + i];
            }
          }
        }
        if (x->requires_grad) x->accumulate(std::move(dx));
        if (gamma->requires_grad) gamma->accumulate(std::move(dgamma));
        if (beta->requires_grad) beta->accumulate(std::move(dbeta));
      });
}

Var relu(Tape& tape, const Var& x) {
  NDTensor y = x->value;
  for (auto& v : y.data()) v = std::max(v, 0.0);
  record_decisions(y.size(), [&](std::size_t i) { return x->value[i] > 0.0; });
  return tape.record("relu", {x}, std::move(y), [x](const NDTensor& dy) {
    NDTensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x->value[i] > 0.0 ? dy[i] : 0.0;
    x->accumulate(std::move(dx));
  });
}

Var add(Tape& tape, const Var& a, const Var& b) {
  return tape.record("add", {a, b}, corrnet::add(a->value, b->value),
                     [a, b](const NDTensor& dy) {
                       if (a->requires_grad) a->accumulate(dy);
                       if (b->requires_grad) b->accumulate(dy);
                     });
}

Var concat_channels(Tape& tape, const Var& a, const Var& b) {
  return tape.record("concat", {a, b}, corrnet::concat_channels(a->value, b->value),
                     [a, b](const NDTensor& dy) {
                       const std::size_t ca = a->value.dim(channel_axis(a->value));
                       const std::size_t total = dy.dim(channel_axis(dy));
                       if (a->requires_grad) a->accumulate(slice_channels(dy, 0, ca));
                       if (b->requires_grad) b->accumulate(slice_channels(dy, ca, total));
                     });
}

Var temporal_maxpool3(Tape& tape, const Var& x) {
  auto r = temporal_maxpool3_impl(x->value);
  auto argmax = std::make_shared<std::vector<std::size_t>>(std::move(r.argmax));
  return tape.record("temporal_maxpool3", {x}, std::move(r.out),
                     [x, argmax](const NDTensor& dy) {
                       NDTensor dx(x->value.shape());
                       for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
                       x->accumulate(std::move(dx));
                     });
}

Var global_avgpool(Tape& tape, const Var& x) {
  if (x->value.rank() != 5) throw ShapeError("global_avgpool expects N x C x L x H x W");
  const auto lay = channel_layout(x->value);
  NDTensor y({lay.batch, lay.channels});
  for (std::size_t s = 0; s < lay.batch * lay.channels; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < lay.inner; ++i) acc += x->value[s * lay.inner + i];
    y[s] = acc / static_cast<double>(lay.inner);
  }
  return tape.record("global_avgpool", {x}, std::move(y), [x, lay](const NDTensor& dy) {
    NDTensor dx(x->value.shape());
    const double inv = 1.0 / static_cast<double>(lay.inner);
    for (std::size_t s = 0; s < lay.batch * lay.channels; ++s) {
      for (std::size_t i = 0; i < lay.inner; ++i) dx[s * lay.inner + i] = dy[s] * inv;
    }
    x->accumulate(std::move(dx));
  });
}

Var linear(Tape& tape, const Var& x, const Var& weights) {
  const auto& xv = x->value;
  const auto& wv = weights->value;
  if (xv.rank() != 2 || wv.rank() != 2 || wv.dim(1) != xv.dim(1)) {
    throw ShapeError("linear: expected N x C input and classes x C weights");
  }
  const std::size_t N = xv.dim(0), C = xv.dim(1), K = wv.dim(0);
  NDTensor y({N, K});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += wv[k * C + c] * xv[n * C + c];
      y[n * K + k] = s;
    }
  }
  count_multiplies(static_cast<std::uint64_t>(N) * K * C);
  return tape.record("linear", {x, weights}, std::move(y),
                     [x, weights, N, C, K](const NDTensor& dy) {
                       if (x->requires_grad) {
                         NDTensor dx({N, C});
                         for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t k = 0; k < K; ++k)
                             for (std::size_t c = 0; c < C; ++c)
                               dx[n * C + c] += dy[n * K + k] * weights->value[k * C + c];
                         x->accumulate(std::move(dx));
                       }
                       if (weights->requires_grad) {
                         NDTensor dw({K, C});
                         for (std::size_t n = 0; n < N; ++n)
                           for (std::size_t k = 0; k < K; ++k)
                             for (std::size_t c = 0; c < C; ++c)
                               dw[k * C + c] += dy[n * K + k] * x->value[n * C + c];
                         weights->accumulate(std::move(dw));
                       }
                     });
}

Var correlation(Tape& tape, const Var& x, const Var& filter, const CorrelationConfig& cfg) {
  cfg.validate();
  const auto& xv = x->value;
  if (xv.rank() != 5 || static_cast<int>(xv.dim(1)) != cfg.channels ||
      static_cast<int>(xv.dim(2)) != cfg.length) {
    throw ShapeError("correlation op: input " + shape_to_string(xv.shape()) +
                     " inconsistent with config");
  }
  const auto K = static_cast<std::size_t>(cfg.kernel);
  if (filter->value.shape() != Shape{xv.dim(2), xv.dim(1), K, K}) {
    throw ShapeError("correlation op: filter must be L x C x K x K");
  }
  const std::size_t N = xv.dim(0), H = xv.dim(3), W = xv.dim(4);
  const std::size_t in_sample = xv.size() / N;
  NDTensor y({N, static_cast<std::size_t>(cfg.output_channels()), xv.dim(2), H, W});
  const std::size_t out_sample = y.size() / N;
  for (std::size_t n = 0; n < N; ++n) {
    detail::correlate_clip_forward(xv.data().data() + n * in_sample,
                                   filter->value.data().data(), cfg, H, W,
                                   y.data().data() + n * out_sample);
  }
  return tape.record(
      "correlation", {x, filter}, std::move(y),
      [x, filter, cfg, N, H, W, in_sample, out_sample](const NDTensor& dy) {
        NDTensor dx(x->value.shape());
        const bool want_filter = filter->requires_grad && cfg.learnable;
        NDTensor df(filter->value.shape());
        for (std::size_t n = 0; n < N; ++n) {
          detail::correlate_clip_adjoint(x->value.data().data() + n * in_sample,
                                         filter->value.data().data(),
                                         dy.data().data() + n * out_sample, cfg, H, W,
                                         dx.data().data() + n * in_sample,
                                         want_filter ? df.data().data() : nullptr);
        }
        if (x->requires_grad) x->accumulate(std::move(dx));
        if (filter->requires_grad) filter->accumulate(std::move(df));
      });
}

Var softmax_xent(Tape& tape, const Var& logits, std::span<const std::size_t> labels) {
  const auto& lv = logits->value;
  if (lv.rank() != 2 || lv.dim(0) != labels.size()) {
    throw ShapeError("softmax_xent: logits must be N x classes with N labels");
  }
  const std::size_t N = lv.dim(0), K = lv.dim(1);
  auto d_logits = std::make_shared<NDTensor>(Shape{N, K});
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    NDTensor row({K}, std::vector<double>(lv.data().begin() + n * K,
                                          lv.data().begin() + (n + 1) * K));
    auto r = corrnet::softmax_xent(row, labels[n]);
    total += r.loss;
    for (std::size_t k = 0; k < K; ++k) (*d_logits)[n * K + k] = r.d_logits[k] / static_cast<double>(N);
  }
  NDTensor loss({1});
  loss[0] = total / static_cast<double>(N);
  return tape.record("softmax_xent", {logits}, std::move(loss),
                     [logits, d_logits](const NDTensor& dy) {
                       NDTensor g = *d_logits;
                       g.scale_(dy[0]);
                       logits->accumulate(std::move(g));
                     });
}

}  // namespace ops

}  // namespace corrnet
