#include <benchmark/benchmark.h>

#include "lgvi/config.hpp"
#include "lgvi/ddpm.hpp"
#include "lgvi/pipeline.hpp"

using namespace lgvi;

namespace {
Pipeline& default_pipeline() {
  static Pipeline pipe(cfg::default_config(), 1);
  return pipe;
}
}  // namespace

static void BM_unet_forward(benchmark::State& state) {
  auto& pipe = default_pipeline();
  const int64_t T = 8;
  Rng rng(2);
  auto z = Tensor<float>::randn({T, 48, 16, 16}, rng, 0.5);
  auto cx = Tensor<float>::randn({T, 48, 16, 16}, rng, 0.5);
  auto ctx = pipe.context_for_expression("the red circle on the left");
  NoGradGuard ng;
  for (auto _ : state) {
    auto out = pipe.net.forward(constant(z), constant(cx), {17}, ctx, T);
    benchmark::DoNotOptimize(out.eps->value.data.data());
  }
}
BENCHMARK(BM_unet_forward)->Unit(benchmark::kMillisecond);

static void BM_unet_train_step(benchmark::State& state) {
  auto& pipe = default_pipeline();
  const int64_t T = 8;
  Rng rng(3);
  auto z0 = Tensor<float>::randn({T, 48, 16, 16}, rng, 0.3);
  auto cx = Tensor<float>::randn({T, 48, 16, 16}, rng, 0.3);
  auto ctx = pipe.context_for_expression("the red circle");
  auto sched = ddpm::default_schedule();
  MaskClip mask(T, 64, 64);
  for (auto& v : mask.data) v = rng.uniform() < 0.1 ? 1 : 0;
  for (auto _ : state) {
    Tensor<float> eps(z0.shape);
    for (auto& v : eps.data) v = static_cast<float>(rng.normal());
    auto zt = ddpm::add_noise(z0, eps, 50, sched);
    for (auto* ps : pipe.stores()) ps->zero_grad();
    auto out = pipe.net.forward(constant(zt), constant(cx), {50}, ctx, T);
    auto loss = add(train::diffusion_loss(constant(eps), out.eps),
                    scale(train::mask_loss(out.mask_logits, mask), 0.001));
    backward(loss);
    benchmark::DoNotOptimize(loss->value.data[0]);
  }
}
BENCHMARK(BM_unet_train_step)->Unit(benchmark::kMillisecond);

static void BM_ddpm_sample_chain(benchmark::State& state) {
  auto& pipe = default_pipeline();
  const int64_t T = 2;  // short clip keeps the chain benchmark-sized
  auto ctx = pipe.context_for_expression("the red circle");
  Rng rng(4);
  auto cx = constant(Tensor<float>::randn({T, 48, 16, 16}, rng, 0.3));
  NoGradGuard ng;
  ddpm::Denoiser<float> denoiser = [&](const Tensor<float>& x, int t) {
    return pipe.net.forward(constant(x), cx, {t}, ctx, T).eps->value;
  };
  for (auto _ : state) {
    auto out = ddpm::sample(denoiser, {T, 48, 16, 16}, pipe.sched, 7);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_ddpm_sample_chain)->Unit(benchmark::kMillisecond)->Iterations(1);

BENCHMARK_MAIN();
