#include <benchmark/benchmark.h>

#include "lgvi/metrics.hpp"
#include "lgvi/rng.hpp"

using namespace lgvi;

namespace {
VideoClip random_clip(int64_t t, int64_t h, int64_t w, uint64_t seed) {
  VideoClip c(t, h, w);
  Rng rng(seed);
  for (auto& v : c.data) v = static_cast<float>(rng.uniform());
  return c;
}
}  // namespace

static void BM_psnr(benchmark::State& state) {
  auto a = random_clip(8, 64, 64, 1), b = random_clip(8, 64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::psnr(a, b));
}
BENCHMARK(BM_psnr);

static void BM_ssim(benchmark::State& state) {
  auto a = random_clip(8, 64, 64, 3), b = random_clip(8, 64, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b));
}
BENCHMARK(BM_ssim)->Unit(benchmark::kMillisecond);

static void BM_vfid_features(benchmark::State& state) {
  auto a = random_clip(8, 64, 64, 5);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::vfid_features(a));
}
BENCHMARK(BM_vfid_features)->Unit(benchmark::kMillisecond);

static void BM_e_warp(benchmark::State& state) {
  auto a = random_clip(8, 64, 64, 6);
  FlowField flow(7, 64, 64);
  Rng rng(7);
  for (auto& v : flow.data) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::e_warp(a, flow));
}
BENCHMARK(BM_e_warp);

BENCHMARK_MAIN();
