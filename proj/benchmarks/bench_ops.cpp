#include <benchmark/benchmark.h>

#include <random>

#include "corrnet/conv.hpp"
#include "corrnet/correlation.hpp"
#include "corrnet/cost.hpp"
#include "corrnet/network.hpp"

using namespace corrnet;

namespace {

NDTensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  NDTensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

CorrelationConfig corr_config(int K, int C, int L) {
  CorrelationConfig c;
  c.kernel = K;
  c.channels = C;
  c.groups = C / 4;
  c.length = L;
  return c;
}

// Args: K, channels, L, H (= W).
void BM_CorrelateClip(benchmark::State& state) {
  const auto cfg = corr_config(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
                               static_cast<int>(state.range(2)));
  const auto hw = static_cast<std::size_t>(state.range(3));
  const NDTensor x = random_tensor({static_cast<std::size_t>(cfg.channels), static_cast<std::size_t>(cfg.length), hw, hw}, 1);
  const CorrelationFilter f = CorrelationFilter::initialized(cfg, 2);
  for (auto _ : state) benchmark::DoNotOptimize(correlate_clip(x, cfg, f));
  state.counters["multiplies"] = static_cast<double>(
      correlation_flops(cfg.channels, cfg.kernel, cfg.length, static_cast<int>(hw), static_cast<int>(hw)));
}
BENCHMARK(BM_CorrelateClip)->Args({3, 8, 8, 16})->Args({3, 16, 8, 8})->Args({5, 16, 8, 8})->Args({7, 32, 8, 16});

void BM_CorrelateClipOracle(benchmark::State& state) {
  const auto cfg = corr_config(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
                               static_cast<int>(state.range(2)));
  const auto hw = static_cast<std::size_t>(state.range(3));
  const NDTensor x = random_tensor({static_cast<std::size_t>(cfg.channels), static_cast<std::size_t>(cfg.length), hw, hw}, 1);
  const CorrelationFilter f = CorrelationFilter::initialized(cfg, 2);
  for (auto _ : state) benchmark::DoNotOptimize(correlate_clip_oracle(x, cfg, f));
}
BENCHMARK(BM_CorrelateClipOracle)->Args({3, 8, 8, 16})->Args({7, 32, 8, 16});

void BM_CorrelateClipBackward(benchmark::State& state) {
  const auto cfg = corr_config(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
                               static_cast<int>(state.range(2)));
  const auto hw = static_cast<std::size_t>(state.range(3));
  const NDTensor x = random_tensor({static_cast<std::size_t>(cfg.channels), static_cast<std::size_t>(cfg.length), hw, hw}, 1);
  const CorrelationFilter f = CorrelationFilter::initialized(cfg, 2);
  const NDTensor d_out = random_tensor(correlate_clip(x, cfg, f).shape(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(correlate_clip_backward(x, cfg, f, d_out));
}
BENCHMARK(BM_CorrelateClipBackward)->Args({3, 8, 8, 16})->Args({7, 32, 8, 16});

// Args: C_in, C_out, kernel t, kernel y/x, H (= W), algorithm (0 gemm, 1 direct).
void BM_Conv3d(benchmark::State& state) {
  const auto ci = static_cast<std::size_t>(state.range(0)), co = static_cast<std::size_t>(state.range(1));
  const auto kt = static_cast<std::size_t>(state.range(2)), ks = static_cast<std::size_t>(state.range(3));
  const auto hw = static_cast<std::size_t>(state.range(4));
  const NDTensor x = random_tensor({ci, 8, hw, hw}, 4);
  const LayerParams p{random_tensor({co, ci, kt, ks, ks}, 5), std::nullopt};
  const Int3 k{static_cast<int>(kt), static_cast<int>(ks), static_cast<int>(ks)};
  const ConvAlgo algo = state.range(5) == 0 ? ConvAlgo::gemm : ConvAlgo::direct;
  for (auto _ : state) benchmark::DoNotOptimize(conv3d(x, p, {}, same_padding(k), algo));
  state.counters["multiplies"] = static_cast<double>(
      conv3d_flops(static_cast<int>(co), static_cast<int>(ci), k, 8, static_cast<int>(hw), static_cast<int>(hw)));
}
BENCHMARK(BM_Conv3d)
    ->Args({8, 8, 1, 3, 16, 0})
    ->Args({8, 8, 1, 3, 16, 1})
    ->Args({16, 16, 3, 1, 8, 0})
    ->Args({32, 128, 1, 1, 8, 0});

void BM_NetworkForward(benchmark::State& state, const char* name) {
  const NetSpec spec = resolve_netspec(name);
  Network net(spec, 0);
  const NDTensor x = random_tensor({static_cast<std::size_t>(state.range(0)), 3, 8, 32, 32}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
  state.counters["multiplies_per_clip"] = static_cast<double>(cost_report(spec).total_flops);
}
BENCHMARK_CAPTURE(BM_NetworkForward, corrnet_tiny, "corrnet-tiny")->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_NetworkForward, r2plus1d_tiny, "r2plus1d-tiny")->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_NetworkForward, r2d_tiny, "r2d-tiny")->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
