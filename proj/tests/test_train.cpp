#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <unistd.h>

#include "corrnet/error.hpp"
#include "corrnet/train.hpp"
#include "oracles.hpp"

using namespace corrnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("corrnet_train_" + std::to_string(::getpid()) + "_" + name);
}

const Dataset& small_set() {
  static const Dataset d = generate_dataset(MotionTaskConfig{}, 24, 100);
  return d;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.warmup_epochs = epochs > 1 ? 1 : 0;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

std::vector<NDTensor> parameter_values(Network& net) {
  std::vector<NDTensor> out;
  for (const auto& p : net.parameters()) out.push_back(p.var->value);
  return out;
}

}  // namespace

TEST(LrAt, Examples) {
  EXPECT_DOUBLE_EQ(lr_at(100, 1000, 100, 0.05), 0.05);
  EXPECT_NEAR(lr_at(1000, 1000, 100, 0.05), 0.0, 1e-18);
  EXPECT_NEAR(lr_at(550, 1000, 100, 0.05), 0.025, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(0, 1000, 100, 0.05), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(50, 1000, 100, 0.05), 0.025);
}

TEST(LrAt, MatchesClosedFormAndIsMonotoneAfterWarmup) {
  const std::int64_t total = 600, warm = 100;
  const double lr = 0.1;
  double prev = lr_at(warm, total, warm, lr);
  for (std::int64_t s = 0; s <= total; ++s) {
    const double got = lr_at(s, total, warm, lr);
    const double want = s < warm ? lr * static_cast<double>(s) / warm
                                 : lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (s - warm) / (total - warm)));
    EXPECT_NEAR(got, want, 1e-15);
    if (s > warm) {
      EXPECT_LE(got, prev);
      prev = got;
    }
  }
  // Continuity at the junction: one step on either side stays close.
  EXPECT_NEAR(lr_at(warm - 1, total, warm, lr), lr_at(warm, total, warm, lr), lr / warm + 1e-12);
  EXPECT_NEAR(lr_at(warm + 1, total, warm, lr), lr_at(warm, total, warm, lr), 1e-4);
}

TEST(TrainConfig, ValidationAndTextRoundTrip) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.warmup_epochs = c.epochs;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.momentum = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);

  TrainConfig d;
  d.epochs = 7;
  d.lr_max = 0.0123456789012345;
  d.seed = 0xfeedfacecafebeefULL;
  d.netspec = "r2d-tiny";
  d.data = "/tmp/a b.svd";
  d.jitter = false;
  d.crop_scale = 1.25;
  d.eval_clips = 10;
  const TrainConfig r = TrainConfig::from_text(d.to_text());
  EXPECT_EQ(r.to_text(), d.to_text());
  EXPECT_EQ(r.lr_max, d.lr_max);
  EXPECT_EQ(r.seed, d.seed);
  EXPECT_EQ(r.data, d.data);
  EXPECT_FALSE(r.jitter);
}

TEST(MakeBatch, SubtractsMeanAndStacks) {
  const NDTensor a = NDTensor::full({3, 2, 2, 2}, 0.75), b = NDTensor::full({3, 2, 2, 2}, 0.5);
  const NDTensor batch = make_batch({a, b});
  EXPECT_EQ(batch.shape(), (Shape{2, 3, 2, 2, 2}));
  EXPECT_EQ(batch[0], 0.25);
  EXPECT_EQ(batch[batch.size() - 1], 0.0);
  EXPECT_THROW(make_batch({a, NDTensor({3, 2, 2, 3})}), ShapeError);
}

TEST(Trainer, RejectsMismatchedSetup) {
  TrainConfig c = quick_config(1);
  c.clip_len = 4;
  EXPECT_THROW(Trainer(build_corrnet_tiny(), c, small_set()), ConfigError);
  CorrNetOptions o;
  o.num_classes = 4;
  EXPECT_THROW(Trainer(build_corrnet_tiny(o), quick_config(1), small_set()), ConfigError);
}

TEST(Trainer, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig c = quick_config(2);
  c.lr_max = 0.0;
  Trainer t(build_corrnet_tiny(), c, small_set());
  const auto before = parameter_values(t.network());
  t.run();
  EXPECT_EQ(t.epoch(), 2);
  const auto after = parameter_values(t.network());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(Trainer, DeterministicMetricsAndWeights) {
  const Dataset& d = small_set();
  auto run = [&] {
    Trainer t(build_corrnet_tiny(), quick_config(2), d, &d);
    std::string csv = metrics_csv_header();
    for (const auto& m : t.run()) csv += metrics_csv_row(m);
    return std::make_pair(csv, t.checkpoint());
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_TRUE(a.second == b.second);
}

TEST(Trainer, ResumeEqualsStraightRun) {
  const Dataset& d = small_set();
  Trainer straight(build_corrnet_tiny(), quick_config(3), d);
  const auto full = straight.run();

  Trainer first(build_corrnet_tiny(), quick_config(3), d);
  const EpochMetrics m1 = first.run_epoch();
  const fs::path p = temp_path("resume.ck");
  save_checkpoint(first.checkpoint(), p.string());

  Trainer second(build_corrnet_tiny(), quick_config(3), d);
  second.restore(load_checkpoint(p.string()));
  fs::remove(p);
  EXPECT_EQ(second.epoch(), 1);
  const auto rest = second.run();
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(metrics_csv_row(m1), metrics_csv_row(full[0]));
  EXPECT_EQ(metrics_csv_row(rest[0]), metrics_csv_row(full[1]));
  EXPECT_EQ(metrics_csv_row(rest[1]), metrics_csv_row(full[2]));
  EXPECT_TRUE(second.checkpoint() == straight.checkpoint());
}

TEST(Trainer, AbortsOnNonFiniteBeforeUpdating) {
  Trainer t(build_corrnet_tiny(), quick_config(1), small_set());
  t.network().parameter("res3.0.spatial.conv.kernel")->value[5] = std::nan("");
  const auto before = parameter_values(t.network());
  try {
    (void)t.run_epoch();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("conv"), std::string::npos) << e.what();
  }
  const auto after = parameter_values(t.network());
  for (std::size_t i = 0; i < before.size(); ++i) {
    for (std::size_t j = 0; j < before[i].size(); ++j) {
      const double x = before[i][j], y = after[i][j];
      EXPECT_TRUE(x == y || (std::isnan(x) && std::isnan(y)));
    }
  }
}

TEST(Trainer, OverfitsSixteenSamples) {
  const Dataset d = generate_dataset(MotionTaskConfig{}, 16, 200);
  TrainConfig c;
  c.epochs = 200;
  c.warmup_epochs = 5;
  c.batch_size = 8;
  c.seed = 1;
  Trainer t(build_corrnet_tiny(), c, d);
  double best = 0.0;
  int epochs = 0;
  while (t.epoch() < c.epochs && best < 1.0) {
    best = std::max(best, t.run_epoch().train_acc);
    ++epochs;
  }
  EXPECT_EQ(best, 1.0) << "after " << epochs << " epochs";
}

TEST(Evaluate, SingleClipEqualsCenterClipAccuracy) {
  const Dataset& d = small_set();
  Network net(build_corrnet_tiny(), 4);
  const EvalResult r = evaluate(net, d, 8, 1);
  ASSERT_EQ(r.predictions.size(), d.samples.size());
  int correct = 0;
  std::mt19937_64 rng(0);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const NDTensor logits = net.predict(make_batch({sample_clip(d.samples[i], 8, false, rng)}));
    int best = 0;
    for (int k = 1; k < d.num_classes; ++k)
      if (logits[static_cast<std::size_t>(k)] > logits[static_cast<std::size_t>(best)]) best = k;
    EXPECT_EQ(r.predictions[i], best);
    correct += best == d.samples[i].label;
  }
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / d.samples.size());
}

TEST(Evaluate, ClassMismatchIsAConfigError) {
  CorrNetOptions o;
  o.num_classes = 5;
  Network net(build_corrnet_tiny(o), 0);
  EXPECT_THROW(evaluate(net, small_set(), 8, 1), ConfigError);
}

TEST(AverageSoftmax, PermutationInvariantAndNormalized) {
  std::mt19937_64 rng(5);
  const NDTensor logits = oracle::random_tensor({6, 4}, rng, -3, 3);
  const auto p = average_softmax(logits);
  ASSERT_EQ(p.size(), 4u);
  double sum = 0.0;
  for (double v : p) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
  std::vector<std::size_t> order{3, 0, 5, 1, 4, 2};
  NDTensor perm({6, 4});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 4; ++k) perm.at({i, k}) = logits.at({order[i], k});
  const auto q = average_softmax(perm);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(p[k], q[k], 1e-15);
  // Single row: plain softmax.
  const auto s = average_softmax(NDTensor({1, 2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Checkpoint, RoundTripAndRebuild) {
  const Dataset& d = small_set();
  Trainer t(build_corrnet_tiny(), quick_config(1), d);
  (void)t.run_epoch();
  const Checkpoint ck = t.checkpoint();
  EXPECT_EQ(ck.version, Checkpoint::kVersion);
  EXPECT_EQ(ck.epoch, 1);
  const fs::path p = temp_path("rt.ck");
  save_checkpoint(ck, p.string());
  const Checkpoint back = load_checkpoint(p.string());
  EXPECT_TRUE(back == ck);
  EXPECT_EQ(ck.parameter("head.fc"), t.network().parameter("head.fc")->value);

  Network rebuilt = network_from_checkpoint(back);
  const NDTensor x = make_batch(uniform_test_clips(d.samples[0], 8, 1));
  EXPECT_EQ(rebuilt.predict(x), t.network().predict(x));

  fs::resize_file(p, fs::file_size(p) / 2);
  EXPECT_THROW(load_checkpoint(p.string()), IoError);
  {
    std::ofstream os(p, std::ios::binary);
    os << "XXXX";
  }
  EXPECT_THROW(load_checkpoint(p.string()), IoError);
  fs::remove(p);
  EXPECT_THROW(load_checkpoint(p.string()), IoError);
}

TEST(MetricsCsv, Format) {
  EXPECT_EQ(metrics_csv_header(), "epoch,lr,train_loss,train_acc,test_acc\n");
  EpochMetrics m{3, 0.05, 1.25, 0.5, 0.75};
  EXPECT_EQ(metrics_csv_row(m), "3,0.05,1.25,0.500000,0.750000\n");
}
