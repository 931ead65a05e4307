#include <benchmark/benchmark.h>

#include "lgvi/unet.hpp"

using namespace lgvi;

static void BM_conv2d_forward(benchmark::State& state) {
  const int64_t N = state.range(0), C = 32, H = 16, W = 16;
  Rng rng(1);
  auto x = constant(Tensor<float>::randn({N, C, H, W}, rng, 0.5));
  auto w = constant(Tensor<float>::randn({C, C, 3, 3}, rng, 0.06));
  auto b = constant(Tensor<float>::zeros({C}));
  for (auto _ : state) {
    auto y = conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y->value.data.data());
  }
  state.SetItemsProcessed(state.iterations() * N * C * C * H * W * 9 * 2);
}
BENCHMARK(BM_conv2d_forward)->Arg(1)->Arg(8);

static void BM_conv2d_backward(benchmark::State& state) {
  const int64_t N = 8, C = 32, H = 16, W = 16;
  Rng rng(2);
  for (auto _ : state) {
    auto x = make_leaf(Tensor<float>::randn({N, C, H, W}, rng, 0.5), true);
    auto w = make_leaf(Tensor<float>::randn({C, C, 3, 3}, rng, 0.06), true);
    auto b = make_leaf(Tensor<float>::zeros({C}), true);
    backward(mean_all(conv2d(x, w, b, 1, 1)));
    benchmark::DoNotOptimize(w->grad.data.data());
  }
}
BENCHMARK(BM_conv2d_backward);

static void BM_temporal_attention(benchmark::State& state) {
  const int64_t T = state.range(0);
  ParamStore<float> ps(3);
  unet::TemporalAttention<float> ta(ps, "t", 32, 2);
  Rng rng(4);
  auto v = constant(Tensor<float>::randn({256, T, 32}, rng, 0.5));
  for (auto _ : state) {
    auto y = ta(v);
    benchmark::DoNotOptimize(y->value.data.data());
  }
}
BENCHMARK(BM_temporal_attention)->Arg(4)->Arg(8)->Arg(16);

static void BM_softmax_rows(benchmark::State& state) {
  Rng rng(5);
  auto x = constant(Tensor<float>::randn({4096, 64}, rng));
  for (auto _ : state) {
    auto y = softmax_last(x);
    benchmark::DoNotOptimize(y->value.data.data());
  }
}
BENCHMARK(BM_softmax_rows);

BENCHMARK_MAIN();
