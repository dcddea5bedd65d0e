#include <benchmark/benchmark.h>

#include "cardiac/harness.hpp"

using namespace cardiac;

namespace {

Tensor<float> randn(std::vector<int> dims, std::mt19937_64& rng) {
  Tensor<float> t(std::move(dims));
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(gaussian(rng));
  return t;
}

void BM_conv2d_forward(benchmark::State& state) {
  std::mt19937_64 rng(1);
  auto x = randn({4, 28, 28}, rng);
  auto w = randn({8, 4, 3, 3}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, 2, 1));
}
BENCHMARK(BM_conv2d_forward);

void BM_conv2d_backward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  for (auto _ : state) {
    auto x = randn({4, 28, 28}, rng);
    x.set_requires_grad(true);
    auto w = randn({8, 4, 3, 3}, rng);
    w.set_requires_grad(true);
    auto loss = sum(conv2d(x, w, 2, 1));
    loss.backward();
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_conv2d_backward);

void BM_mfl_forward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const int b = 24, c = 32;
  AggregatorVariant<float> v(AggregatorKind::mfl, c, 64, 32, rng);
  auto feats = randn({b, c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mfl_forward(feats, v));
}
BENCHMARK(BM_mfl_forward);

void BM_echozoom_forward(benchmark::State& state) {
  std::mt19937_64 rng(4);
  EncoderConfig ec;
  ec.stage_channels = {4, 8, 16};
  ec.allowed_inputs = {28};
  ec.base_resolution = 28;
  Encoder<float> enc(ec, rng);
  ZoomConfig zc;
  zc.base_res = 28;
  zc.hi_res = 56;
  auto img = randn({1, 28, 28}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(echozoom_forward(img, enc, zc));
}
BENCHMARK(BM_echozoom_forward);

void BM_gen_clip(benchmark::State& state) {
  SyntheticConfig cfg;
  cfg.resolution = 28;
  cfg.total_frames = 48;
  cfg.cycle_period = 32;
  uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen_clip(55.0, cfg, seed++));
}
BENCHMARK(BM_gen_clip);

}  // namespace

BENCHMARK_MAIN();
