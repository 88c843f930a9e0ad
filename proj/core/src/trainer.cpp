#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "corrnet/error.hpp"
#include "corrnet/train.hpp"

namespace corrnet {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t argmax_row(const NDTensor& logits, std::size_t row) {
  const std::size_t K = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < K; ++k) {
    if (logits[row * K + k] > logits[row * K + best]) best = k;
  }
  return best;
}

bool decays(const std::string& name) { return name.find(".bn.") == std::string::npos; }

}  // namespace

std::string metrics_csv_header() { return "epoch,lr,train_loss,train_acc,test_acc\n"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.6f,%.6f\n", m.epoch, m.lr, m.train_loss,
                m.train_acc, m.test_acc);
  return buf;
}

NDTensor make_batch(const std::vector<NDTensor>& clips) {
  if (clips.empty()) throw ShapeError("make_batch: no clips");
  Shape shape = clips.front().shape();
  shape.insert(shape.begin(), clips.size());
  NDTensor out(shape);
  auto dst = out.data().begin();
  for (const auto& c : clips) {
    if (c.shape() != clips.front().shape()) throw ShapeError("make_batch: clip shapes differ");
    dst = std::transform(c.data().begin(), c.data().end(), dst,
                         [](double v) { return v - kPixelMean; });
  }
  return out;
}

Trainer::Trainer(NetSpec spec, TrainConfig cfg, const Dataset& train, const Dataset* test)
    : cfg_(std::move(cfg)), net_((cfg_.validate(), std::move(spec)), cfg_.seed), train_(train),
      test_(test) {
  const NetSpec& s = net_.spec();
  if (s.input.length != cfg_.clip_len) {
    throw ConfigError("network expects clips of " + std::to_string(s.input.length) +
                      " frames, config asks for " + std::to_string(cfg_.clip_len));
  }
  if (train_.samples.empty()) throw ConfigError("training set is empty");
  if (s.num_classes != train_.num_classes) {
    throw ConfigError("network has " + std::to_string(s.num_classes) + " classes, dataset has " +
                      std::to_string(train_.num_classes));
  }
  const auto& clip = train_.samples.front().clip;
  if (static_cast<int>(clip.dim(2)) != s.input.height ||
      static_cast<int>(clip.dim(3)) != s.input.width) {
    throw ConfigError("dataset frame size does not match the network input");
  }
  for (const auto& p : net_.parameters()) velocity_.emplace_back(p.var->value.shape());
}

void Trainer::restore(const Checkpoint& ck) {
  if (netspec_from_text(ck.netspec_text) != net_.spec()) {
    throw ConfigError("checkpoint was written for a different network");
  }
  const auto& params = net_.parameters();
  if (ck.parameters.size() != params.size() || ck.momentum.size() != params.size()) {
    throw ConfigError("checkpoint parameter table does not match the network");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ck.parameters[i].name != params[i].name ||
        ck.parameters[i].value.shape() != params[i].var->value.shape() ||
        ck.momentum[i].value.shape() != velocity_[i].shape()) {
      throw ConfigError("checkpoint tensor '" + ck.parameters[i].name + "' does not match");
    }
    params[i].var->value = ck.parameters[i].value;
    velocity_[i] = ck.momentum[i].value;
  }
  auto buffers = net_.buffers();
  if (ck.buffers.size() != buffers.size()) throw ConfigError("checkpoint buffer table mismatch");
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].tensor = ck.buffers[i].value;
  epoch_ = ck.epoch;
  rng_state_ = ck.rng_state;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.netspec_text = to_text(net_.spec());
  ck.config_text = cfg_.to_text();
  const auto& params = net_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.parameters.push_back({params[i].name, params[i].var->value});
    ck.momentum.push_back({params[i].name, velocity_[i]});
  }
  for (const auto& b : const_cast<Network&>(net_).buffers()) {
    ck.buffers.push_back({b.name, *b.tensor});
  }
  ck.epoch = epoch_;
  ck.rng_state = rng_state_;
  return ck;
}

void Trainer::sgd_step(double lr) {
  const auto& params = net_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].var;
    NDTensor& g = p.grad_or_zeros();
    if (cfg_.weight_decay > 0 && decays(params[i].name)) g.axpy_(cfg_.weight_decay, p.value);
    velocity_[i].scale_(cfg_.momentum);
    velocity_[i].add_(g);
    p.value.axpy_(-lr, velocity_[i]);
  }
}

EpochMetrics Trainer::run_epoch() {
  const std::size_t n = train_.samples.size();
  const auto B = static_cast<std::size_t>(cfg_.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((n + B - 1) / B);
  const std::int64_t total = steps_per_epoch * cfg_.epochs;
  const std::int64_t warmup = steps_per_epoch * cfg_.warmup_epochs;

  std::mt19937_64 rng(mix(cfg_.seed) ^ mix(0x5eed0000ULL + static_cast<std::uint64_t>(epoch_)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const auto& params = net_.parameters();
  double loss_sum = 0.0, lr = 0.0;
  std::size_t correct = 0;
  for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * B, hi = std::min(n, lo + B);
    std::vector<NDTensor> clips;
    std::vector<std::size_t> labels;
    for (std::size_t k = lo; k < hi; ++k) {
      const VideoSample& s = train_.samples[order[k]];
      NDTensor clip = sample_clip(s, cfg_.clip_len, cfg_.jitter, rng);
      if (cfg_.crop_scale > 1.0) clip = random_resized_crop(clip, cfg_.crop_scale, rng);
      clips.push_back(std::move(clip));
      labels.push_back(static_cast<std::size_t>(s.label));
    }

    Tape tape;
    Var logits = net_.forward(tape, make_leaf(make_batch(clips)), Mode::train);
    Var loss = ops::softmax_xent(tape, logits, labels);
    const double l = loss->value[0];
    if (!std::isfinite(l)) {
      std::string where = "loss";
      if (auto i = tape.first_nonfinite()) where = tape.op_name(*i) + " output (node " + std::to_string(*i) + ")";
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", step " +
                         std::to_string(b) + "; first non-finite tensor: " + where);
    }
    for (const auto& p : params) p.var->grad = NDTensor();
    tape.backward(loss);
    for (const auto& p : params) {
      if (p.var->grad.is_set() && !p.var->grad.all_finite()) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch_ + 1) +
                           "; first non-finite tensor: grad of " + p.name);
      }
    }

    lr = lr_at(epoch_ * steps_per_epoch + b, total, warmup, cfg_.lr_max);
    sgd_step(lr);

    loss_sum += l * static_cast<double>(hi - lo);
    for (std::size_t k = 0; k < hi - lo; ++k) correct += argmax_row(logits->value, k) == labels[k];
  }

  EpochMetrics m;
  m.epoch = ++epoch_;
  m.lr = lr;
  m.train_loss = loss_sum / static_cast<double>(n);
  m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
  m.test_acc = test_ ? evaluate(net_, *test_, cfg_.clip_len, cfg_.eval_clips).accuracy
                     : std::numeric_limits<double>::quiet_NaN();
  std::ostringstream os;
  os << rng;
  rng_state_ = os.str();
  return m;
}

std::vector<EpochMetrics> Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> out;
  while (epoch_ < cfg_.epochs) {
    out.push_back(run_epoch());
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

std::vector<double> average_softmax(const NDTensor& clip_logits) {
  const std::size_t N = clip_logits.dim(0), K = clip_logits.dim(1);
  std::vector<double> avg(K, 0.0);
  for (std::size_t r = 0; r < N; ++r) {
    double mx = clip_logits[r * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, clip_logits[r * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(clip_logits[r * K + k] - mx);
    for (std::size_t k = 0; k < K; ++k) avg[k] += std::exp(clip_logits[r * K + k] - mx) / z;
  }
  for (auto& a : avg) a /= static_cast<double>(N);
  return avg;
}

EvalResult evaluate(Network& net, const Dataset& data, int clip_len, int n_clips) {
  if (n_clips < 1) throw ConfigError("n_clips must be >= 1");
  if (net.spec().num_classes != data.num_classes) {
    throw ConfigError("network has " + std::to_string(net.spec().num_classes) +
                      " classes, dataset has " + std::to_string(data.num_classes));
  }
  constexpr std::size_t kClipsPerBatch = 32;
  const auto per_video = static_cast<std::size_t>(n_clips);
  const std::size_t videos_per_batch = std::max<std::size_t>(1, kClipsPerBatch / per_video);
  const auto K = static_cast<std::size_t>(data.num_classes);

  EvalResult res;
  std::size_t correct = 0;
  for (std::size_t lo = 0; lo < data.samples.size(); lo += videos_per_batch) {
    const std::size_t hi = std::min(data.samples.size(), lo + videos_per_batch);
    std::vector<NDTensor> clips;
    for (std::size_t v = lo; v < hi; ++v) {
      for (auto& c : uniform_test_clips(data.samples[v], clip_len, n_clips)) clips.push_back(std::move(c));
    }
    const NDTensor logits = net.predict(make_batch(clips));
    for (std::size_t v = lo; v < hi; ++v) {
      const std::size_t row0 = (v - lo) * per_video;
      NDTensor rows({per_video, K},
                    std::vector<double>(logits.data().begin() + row0 * K,
                                        logits.data().begin() + (row0 + per_video) * K));
      const auto probs = average_softmax(rows);
      const auto pred = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      res.predictions.push_back(pred);
      correct += pred == data.samples[v].label;
    }
  }
  res.accuracy = data.samples.empty() ? 0.0
                                      : static_cast<double>(correct) / static_cast<double>(data.samples.size());
  return res;
}

}  // namespace corrnet
