#include <gtest/gtest.h>

#include <random>

#include "corrnet/correlation.hpp"
#include "corrnet/counters.hpp"
#include "oracles.hpp"

using namespace corrnet;
using oracle::random_tensor;

namespace {

CorrelationConfig make_cfg(int K, int D, int G, int C, int L, bool learnable = true) {
  CorrelationConfig cfg;
  cfg.kernel = K;
  cfg.dilation = D;
  cfg.groups = G;
  cfg.channels = C;
  cfg.length = L;
  cfg.learnable = learnable;
  return cfg;
}

CorrelationFilter random_filter(const CorrelationConfig& cfg, std::mt19937_64& rng) {
  const auto K = static_cast<std::size_t>(cfg.kernel);
  return {random_tensor({static_cast<std::size_t>(cfg.length), static_cast<std::size_t>(cfg.channels), K, K},
                        rng)};
}

}  // namespace

TEST(CorrelationConfig, Validation) {
  EXPECT_NO_THROW(make_cfg(3, 1, 2, 4, 1).validate());
  EXPECT_THROW(make_cfg(4, 1, 1, 4, 1).validate(), ConfigError);
  EXPECT_THROW(make_cfg(3, 1, 3, 4, 1).validate(), ConfigError);
  EXPECT_THROW(make_cfg(3, 0, 1, 4, 1).validate(), ConfigError);
  EXPECT_THROW(make_cfg(3, 1, 0, 4, 1).validate(), ConfigError);
}

TEST(CorrelationConfig, WindowSpan) {
  EXPECT_EQ(make_cfg(7, 2, 1, 1, 1).window_span(), 13);
  const auto cfg = make_cfg(7, 2, 1, 1, 1);
  std::vector<int> offsets;
  for (int k = 0; k < 7; ++k) offsets.push_back(cfg.offset(k));
  EXPECT_EQ(offsets, (std::vector<int>{-6, -4, -2, 0, 2, 4, 6}));
}

TEST(CorrelationFilter, Initialization) {
  const auto cfg = make_cfg(3, 1, 1, 4, 2);
  const auto ones = CorrelationFilter::ones(cfg);
  EXPECT_EQ(ones.weights.shape(), (Shape{2, 4, 3, 3}));
  for (double v : ones.weights.data()) EXPECT_EQ(v, 1.0);
  const auto init = CorrelationFilter::initialized(cfg, 7);
  for (double v : init.weights.data()) {
    EXPECT_GE(v, 0.99);
    EXPECT_LE(v, 1.01);
  }
  EXPECT_EQ(init.weights, CorrelationFilter::initialized(cfg, 7).weights);
}

TEST(CorrelatePair, UnitInputsGiveOneInTheInterior) {
  const auto cfg = make_cfg(3, 1, 1, 4, 1);
  const NDTensor a = NDTensor::full({4, 5, 5}, 1.0);
  const NDTensor out = correlate_pair(a, a, cfg, NDTensor::full({4, 3, 3}, 1.0));
  EXPECT_EQ(out.shape(), (Shape{9, 5, 5}));
  for (std::size_t k = 0; k < 9; ++k) {
    for (std::size_t i = 1; i < 4; ++i)
      for (std::size_t j = 1; j < 4; ++j) EXPECT_DOUBLE_EQ(out.at({k, i, j}), 1.0);
  }
  // Offset (-1, -1) looks outside the image from the top-left pixel.
  EXPECT_EQ(out.at({0, 0, 0}), 0.0);
  EXPECT_LE(out.at({8, 4, 4}), 1.0);
}

TEST(CorrelatePair, ZeroReferenceGivesZero) {
  std::mt19937_64 rng(1);
  const auto cfg = make_cfg(3, 2, 2, 4, 1);
  const NDTensor out = correlate_pair(random_tensor({4, 6, 6}, rng), NDTensor({4, 6, 6}), cfg,
                                      random_tensor({4, 3, 3}, rng));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(CorrelatePair, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  const auto cfg = make_cfg(3, 1, 2, 2, 1);
  const NDTensor a = random_tensor({2, 4, 4}, rng), b = random_tensor({2, 4, 4}, rng);
  const NDTensor f = random_tensor({2, 3, 3}, rng);
  const NDTensor got = correlate_pair(a, b, cfg, f);
  const NDTensor want = oracle::pair_correlation_loops(a, b, 3, 1, 2, f);
  EXPECT_LE(oracle::max_abs_diff(got, want), 1e-12);
}

TEST(CorrelatePair, PaperScaleShape) {
  const auto cfg = make_cfg(7, 1, 8, 64, 1, false);
  const NDTensor x({64, 56, 56});
  EXPECT_EQ(correlate_pair(x, x, cfg, NDTensor::full({64, 7, 7}, 1.0)).shape(),
            (Shape{392, 56, 56}));
}

TEST(CorrelatePair, IsBilinear) {
  std::mt19937_64 rng(3);
  const auto cfg = make_cfg(3, 2, 2, 4, 1);
  const NDTensor a1 = random_tensor({4, 5, 6}, rng), a2 = random_tensor({4, 5, 6}, rng);
  const NDTensor b1 = random_tensor({4, 5, 6}, rng), b2 = random_tensor({4, 5, 6}, rng);
  const NDTensor f = random_tensor({4, 3, 3}, rng);
  const double alpha = 1.7;
  NDTensor scaled = a1;
  scaled.scale_(alpha);
  NDTensor want = correlate_pair(a1, b1, cfg, f);
  want.scale_(alpha);
  EXPECT_LE(oracle::max_abs_diff(correlate_pair(scaled, b1, cfg, f), want), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(correlate_pair(add(a1, a2), b1, cfg, f),
                                  add(correlate_pair(a1, b1, cfg, f), correlate_pair(a2, b1, cfg, f))),
            1e-12);
  EXPECT_LE(oracle::max_abs_diff(correlate_pair(a1, add(b1, b2), cfg, f),
                                  add(correlate_pair(a1, b1, cfg, f), correlate_pair(a1, b2, cfg, f))),
            1e-12);
}

TEST(CorrelatePair, ConfigErrors) {
  const NDTensor x({4, 3, 3});
  EXPECT_THROW(correlate_pair(x, x, make_cfg(2, 1, 1, 4, 1), NDTensor({4, 2, 2})), ConfigError);
  EXPECT_THROW(correlate_pair(x, x, make_cfg(3, 1, 3, 4, 1), NDTensor({4, 3, 3})), ConfigError);
}

TEST(CorrelateClip, SingleFrameIsSelfCorrelation) {
  std::mt19937_64 rng(4);
  const auto cfg = make_cfg(3, 1, 1, 2, 1);
  const NDTensor x = random_tensor({2, 1, 4, 4}, rng);
  const CorrelationFilter f = random_filter(cfg, rng);
  const NDTensor out = correlate_clip(x, cfg, f);
  EXPECT_EQ(out.shape(), (Shape{9, 1, 4, 4}));
  const NDTensor fr = oracle::frame(x, 0);
  const NDTensor want = oracle::pair_correlation_loops(fr, fr, 3, 1, 1, oracle::filter_slice(f.weights, 0));
  EXPECT_LE(oracle::max_abs_diff(oracle::frame(out, 0), want), 1e-12);
}

TEST(CorrelateClip, StaticClipGivesIdenticalSlices) {
  std::mt19937_64 rng(5);
  const auto cfg = make_cfg(3, 1, 2, 4, 4);
  const NDTensor fr = random_tensor({4, 1, 5, 5}, rng);
  NDTensor x({4, 4, 5, 5});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t i = 0; i < 25; ++i) x[(c * 4 + t) * 25 + i] = fr[c * 25 + i];
  const NDTensor out = correlate_clip(x, cfg, CorrelationFilter::ones(cfg));
  const NDTensor s0 = oracle::frame(out, 0);
  for (std::size_t t = 1; t < 4; ++t) EXPECT_EQ(oracle::frame(out, t), s0);
}

TEST(CorrelateClip, MatchesPerPairOracle) {
  std::mt19937_64 rng(6);
  const auto cfg = make_cfg(3, 1, 2, 4, 3);
  const NDTensor x = random_tensor({4, 3, 5, 5}, rng);
  const CorrelationFilter f = random_filter(cfg, rng);
  EXPECT_LE(oracle::max_abs_diff(correlate_clip(x, cfg, f),
                                  oracle::clip_correlation_loops(x, 3, 1, 2, f.weights)),
            1e-12);
}

TEST(CorrelateClip, PointwiseKernelIsAdjacentFrameProduct) {
  std::mt19937_64 rng(7);
  const auto cfg = make_cfg(1, 1, 3, 3, 4, false);
  const NDTensor x = random_tensor({3, 4, 3, 5}, rng);
  const NDTensor out = correlate_clip(x, cfg, CorrelationFilter::ones(cfg));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
          const std::size_t prev = t == 0 ? 0 : t - 1;
          EXPECT_DOUBLE_EQ(out.at({c, t, i, j}), x.at({c, prev, i, j}) * x.at({c, t, i, j}));
        }
}

TEST(CorrelateClip, ShapeErrors) {
  const auto cfg = make_cfg(3, 1, 1, 2, 2);
  EXPECT_THROW(correlate_clip(NDTensor({2, 3, 4, 4}), cfg, CorrelationFilter::ones(cfg)), ShapeError);
  EXPECT_THROW(correlate_clip(NDTensor({3, 2, 4, 4}), cfg, CorrelationFilter::ones(cfg)), ShapeError);
}

TEST(CorrelateClip, ShapeContractOverRandomConfigs) {
  std::mt19937_64 rng(8);
  const int Ks[] = {1, 3, 5, 7};
  const int Gs[] = {1, 2, 4};
  for (int trial = 0; trial < 60; ++trial) {
    const int K = Ks[rng() % 4], G = Gs[rng() % 3], D = 1 + static_cast<int>(rng() % 3);
    const int C = G * (1 + static_cast<int>(rng() % 3)), L = 1 + static_cast<int>(rng() % 4);
    const auto H = 1 + rng() % 6, W = 1 + rng() % 6;
    const auto cfg = make_cfg(K, D, G, C, L);
    const NDTensor x = random_tensor({static_cast<std::size_t>(C), static_cast<std::size_t>(L), H, W}, rng);
    const NDTensor out = correlate_clip(x, cfg, random_filter(cfg, rng));
    EXPECT_EQ(out.shape(), (Shape{static_cast<std::size_t>(G * K * K), static_cast<std::size_t>(L), H, W}));
  }
}

TEST(CorrelateClip, OracleEquivalenceOverRandomConfigs) {
  std::mt19937_64 rng(9);
  const int Ks[] = {1, 3, 5, 7};
  const int Gs[] = {1, 2, 4};
  for (int trial = 0; trial < 50; ++trial) {
    const int K = Ks[rng() % 4], G = Gs[rng() % 3], D = 1 + static_cast<int>(rng() % 3);
    const int C = G * (1 + static_cast<int>(rng() % 2)), L = 1 + static_cast<int>(rng() % 3);
    const auto cfg = make_cfg(K, D, G, C, L);
    const NDTensor x = random_tensor({static_cast<std::size_t>(C), static_cast<std::size_t>(L), 6, 7}, rng);
    const CorrelationFilter f = random_filter(cfg, rng);
    const NDTensor fast = correlate_clip(x, cfg, f);
    EXPECT_LE(oracle::max_abs_diff(fast, correlate_clip_oracle(x, cfg, f)), 1e-12);
    EXPECT_LE(oracle::max_abs_diff(fast, oracle::clip_correlation_loops(x, K, D, G, f.weights)), 1e-12);
  }
}

TEST(CorrelateClip, PaddingConsistency) {
  // Enlarging the image with zeros must not change outputs whose dilated
  // window lies fully inside the original image.
  std::mt19937_64 rng(10);
  const auto cfg = make_cfg(3, 2, 2, 4, 2);
  const NDTensor x = random_tensor({4, 2, 8, 9}, rng);
  const CorrelationFilter f = random_filter(cfg, rng);
  const std::size_t P = 3;
  NDTensor big({4, 2, 8 + 2 * P, 9 + 2 * P});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 9; ++j) big.at({c, t, i + P, j + P}) = x.at({c, t, i, j});
  const NDTensor small_out = correlate_clip(x, cfg, f);
  const NDTensor big_out = correlate_clip(big, cfg, f);
  const auto r = static_cast<std::size_t>(cfg.radius() * cfg.dilation);
  for (std::size_t k = 0; k < 18; ++k)
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t i = r; i + r < 8; ++i)
        for (std::size_t j = r; j + r < 9; ++j)
          EXPECT_DOUBLE_EQ(small_out.at({k, t, i, j}), big_out.at({k, t, i + P, j + P}));
}

TEST(CorrelateClip, MultiplyCountMatchesFormula) {
  std::mt19937_64 rng(11);
  for (const auto& [K, G, C, L] : std::vector<std::array<int, 4>>{{3, 1, 2, 2}, {5, 2, 4, 3}, {1, 4, 8, 1}}) {
    const auto cfg = make_cfg(K, 1, G, C, L);
    const NDTensor x = random_tensor({static_cast<std::size_t>(C), static_cast<std::size_t>(L), 5, 6}, rng);
    ScopedMultiplyCount count;
    (void)correlate_clip(x, cfg, random_filter(cfg, rng));
    EXPECT_EQ(count.count(), static_cast<std::uint64_t>(C) * K * K * L * 5 * 6);
  }
}

TEST(CorrelateClipBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(12);
  const auto cfg = make_cfg(3, 1, 1, 2, 2);
  const NDTensor x = random_tensor({2, 2, 4, 4}, rng);
  const auto g = correlate_clip_backward(x, cfg, random_filter(cfg, rng), NDTensor({9, 2, 4, 4}));
  for (double v : g.d_input.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.d_filter.data()) EXPECT_EQ(v, 0.0);
}

TEST(CorrelateClipBackward, FrozenFilterHasZeroFilterGradient) {
  std::mt19937_64 rng(13);
  const auto cfg = make_cfg(3, 1, 1, 2, 2, false);
  const NDTensor x = random_tensor({2, 2, 4, 4}, rng);
  const auto g = correlate_clip_backward(x, cfg, CorrelationFilter::ones(cfg),
                                         random_tensor({9, 2, 4, 4}, rng));
  EXPECT_EQ(g.d_filter.shape(), (Shape{2, 2, 3, 3}));
  for (double v : g.d_filter.data()) EXPECT_EQ(v, 0.0);
}

TEST(CorrelateClipBackward, ShapeMismatch) {
  const auto cfg = make_cfg(3, 1, 1, 2, 2);
  EXPECT_THROW(correlate_clip_backward(NDTensor({2, 2, 4, 4}), cfg, CorrelationFilter::ones(cfg),
                                       NDTensor({9, 2, 4, 5})),
               ShapeError);
}

namespace {

// Every coordinate of d_input and d_filter against central differences of
// <r, correlate_clip(x, f)>.
void check_gradients(const CorrelationConfig& cfg, std::size_t H, std::size_t W, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NDTensor x = random_tensor({static_cast<std::size_t>(cfg.channels), static_cast<std::size_t>(cfg.length), H, W}, rng);
  CorrelationFilter f = random_filter(cfg, rng);
  const NDTensor r = random_tensor({static_cast<std::size_t>(cfg.output_channels()),
                                    static_cast<std::size_t>(cfg.length), H, W},
                                   rng);
  const auto g = correlate_clip_backward(x, cfg, f, r);
  auto loss = [&] { return oracle::dot(r, correlate_clip(x, cfg, f)); };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = oracle::central_difference(loss, x[i]);
    EXPECT_LE(oracle::rel_err(g.d_input[i], n), 1e-6) << "d_input[" << i << "]";
  }
  for (std::size_t i = 0; i < f.weights.size(); ++i) {
    const double n = oracle::central_difference(loss, f.weights[i]);
    EXPECT_LE(oracle::rel_err(g.d_filter[i], n), 1e-6) << "d_filter[" << i << "]";
  }
}

}  // namespace

TEST(CorrelateClipBackward, MatchesFiniteDifferences) {
  check_gradients(make_cfg(3, 1, 1, 3, 3), 4, 4, 14);
}

TEST(CorrelateClipBackward, MatchesFiniteDifferencesGroupedDilated) {
  check_gradients(make_cfg(3, 2, 2, 4, 2), 5, 4, 15);
  check_gradients(make_cfg(5, 1, 4, 4, 1), 3, 6, 16);
}

TEST(CorrelateClipBackward, IsTheAdjoint) {
  // <r, A(x)> is bilinear in (x, x) so the adjoint identity holds up to the
  // factor 2: <d_input, x> = 2 <r, A(x)>.
  std::mt19937_64 rng(17);
  const auto cfg = make_cfg(3, 1, 2, 4, 3);
  const NDTensor x = random_tensor({4, 3, 5, 5}, rng);
  const CorrelationFilter f = random_filter(cfg, rng);
  const NDTensor r = random_tensor({18, 3, 5, 5}, rng);
  const auto g = correlate_clip_backward(x, cfg, f, r);
  const double lhs = oracle::dot(g.d_input, x);
  const double rhs = 2.0 * oracle::dot(r, correlate_clip(x, cfg, f));
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
  // Linear in the filter: <d_filter, f> = <r, A(x)>.
  EXPECT_NEAR(oracle::dot(g.d_filter, f.weights), rhs / 2.0, 1e-10 * std::max(1.0, std::abs(rhs)));
}
