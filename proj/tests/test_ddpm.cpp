#include <cmath>

#include "doctest.h"
#include "lgvi/ddpm.hpp"

using namespace lgvi;
using namespace lgvi::ddpm;

TEST_CASE("make_schedule: alpha identities and hand-computed cumulative product") {
  auto s = make_schedule(2, 0.1, 0.1);
  for (int t = 1; t <= 2; ++t) CHECK(s.alpha(t) == doctest::Approx(1.0 - s.beta(t)));
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.81));
}

TEST_CASE("default schedule: valid range, strictly decreasing, terminal alpha_bar < 0.05") {
  auto s = default_schedule();
  CHECK(s.steps == 100);
  for (int t = 1; t <= s.steps; ++t) {
    CHECK(s.beta(t) > 0);
    CHECK(s.beta(t) < 1);
    if (t > 1) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }
  // direct product evaluation
  double prod = 1;
  for (int t = 1; t <= s.steps; ++t) prod *= 1.0 - s.beta(t);
  CHECK(s.alpha_bar(s.steps) == doctest::Approx(prod).epsilon(1e-12));
  CHECK(s.alpha_bar(s.steps) < 0.05);
}

TEST_CASE("make_schedule rejects invalid ranges") {
  CHECK_THROWS_AS((void)make_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS((void)make_schedule(10, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS((void)make_schedule(10, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS((void)make_schedule(10, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("add_noise: zero-noise limit and hand arithmetic") {
  auto s = make_schedule(2, 0.1, 0.1);
  Tensor<double> x0({1}, 1.0), zero({1}, 0.0), one({1}, 1.0);

  auto no_noise = add_noise(x0, zero, 2, s);
  CHECK(no_noise.data[0] == doctest::Approx(std::sqrt(0.81)));

  // q(x_2 | x_0): 0.9*1 + sqrt(0.19)*1
  auto xt = add_noise(x0, one, 2, s);
  CHECK(xt.data[0] == doctest::Approx(0.9 + std::sqrt(0.19)).epsilon(1e-12));
  CHECK(xt.data[0] == doctest::Approx(1.33589).epsilon(1e-4));
}

TEST_CASE("add_noise validates shapes and step range") {
  auto s = make_schedule(4, 0.01, 0.02);
  Tensor<double> x0({2}), eps({3});
  CHECK_THROWS_AS((void)add_noise(x0, eps, 1, s), std::invalid_argument);
  Tensor<double> ok({2});
  CHECK_THROWS_AS((void)add_noise(x0, ok, 0, s), std::out_of_range);
  CHECK_THROWS_AS((void)add_noise(x0, ok, 5, s), std::out_of_range);
}

TEST_CASE("marginal at t=S matches a standard normal (Monte Carlo oracle)") {
  auto s = default_schedule();
  Rng rng(4242);
  const int n = 10000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    Tensor<double> x0({1}, rng.uniform(-1, 1));  // arbitrary bounded data
    Tensor<double> eps({1}, rng.normal());
    double v = add_noise(x0, eps, s.steps, s).data[0];
    sum += v;
    sum2 += v * v;
  }
  double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("ddpm_step: formula collapse and hand arithmetic") {
  auto s = make_schedule(2, 0.1, 0.1);
  Tensor<double> xt({1}, 1.0), zero({1}, 0.0), one({1}, 1.0);

  auto pure = ddpm_step(xt, zero, 2, s, zero);
  CHECK(pure.data[0] == doctest::Approx(1.0 / std::sqrt(0.9)).epsilon(1e-12));

  // (1/sqrt(0.9)) * (1 - 0.1/sqrt(0.19)); recomputed independently
  double expect = (1.0 - 0.1 / std::sqrt(1.0 - 0.81)) / std::sqrt(0.9);
  auto stepped = ddpm_step(xt, one, 2, s, zero);
  CHECK(stepped.data[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(stepped.data[0] == doctest::Approx(0.812268).epsilon(1e-5));
}

TEST_CASE("final step must be deterministic") {
  auto s = make_schedule(2, 0.1, 0.1);
  Tensor<double> xt({2}, 0.5), eps({2}, 0.0), noise({2}, 0.3);
  CHECK_THROWS_AS((void)ddpm_step(xt, eps, 1, s, noise), std::invalid_argument);
  Tensor<double> zero({2}, 0.0);
  CHECK_NOTHROW((void)ddpm_step(xt, eps, 1, s, zero));
  CHECK_THROWS_AS((void)ddpm_step(xt, eps, 0, s, zero), std::out_of_range);
}

TEST_CASE("sampler with zero denoiser matches the scalar recurrence oracle") {
  auto s = make_schedule(5, 0.05, 0.2);
  Denoiser<double> zero_denoiser = [](const Tensor<double>& x, int) {
    return Tensor<double>(x.shape);
  };
  auto out = sample(zero_denoiser, {1, 1, 1, 1}, s, 77);

  // independent scalar recurrence replaying the same RNG stream
  Rng rng(hash_mix(77, 0xd1ffu));
  double x = rng.normal();
  for (int t = s.steps; t >= 1; --t) {
    double n = t > 1 ? rng.normal() : 0.0;
    x = x / std::sqrt(s.alpha(t)) + std::sqrt(s.beta(t)) * n;
  }
  CHECK(out.data[0] == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("sampler determinism and shape") {
  auto s = make_schedule(4, 0.05, 0.1);
  int calls = 0;
  Denoiser<float> d = [&](const Tensor<float>& x, int) {
    ++calls;
    Tensor<float> e(x.shape);
    for (int64_t i = 0; i < e.numel(); ++i) e.data[i] = 0.1f * x.data[i];
    return e;
  };
  auto a = sample(d, {2, 3, 4, 4}, s, 5);
  auto b = sample(d, {2, 3, 4, 4}, s, 5);
  CHECK(a.shape == Shape{2, 3, 4, 4});
  CHECK(a.data == b.data);
  CHECK(calls == 8);

  auto c = sample(d, {2, 3, 4, 4}, s, 6);
  CHECK(c.data != a.data);
}

TEST_CASE("sampler rejects shape-changing denoisers") {
  auto s = make_schedule(2, 0.05, 0.1);
  Denoiser<float> bad = [](const Tensor<float>&, int) { return Tensor<float>({1}); };
  CHECK_THROWS_AS((void)sample(bad, {2, 2}, s, 1), std::invalid_argument);
}

TEST_CASE("one reverse step with the true noise moves toward the clean signal") {
  // reconstruction-consistency check on scalars: E || x_{t-1} - sqrt(abar_{t-1}) x0 ||
  // shrinks relative to || x_t - sqrt(abar_t) x0 || when eps_hat is the true eps
  auto s = make_schedule(10, 0.02, 0.15);
  Rng rng(11);
  int improved = 0;
  const int trials = 500;
  for (int i = 0; i < trials; ++i) {
    int t = 2 + static_cast<int>(rng.uniform_int(9));
    double x0 = rng.uniform(-1, 1);
    Tensor<double> x0t({1}, x0), epst({1}, rng.normal()), zero({1}, 0.0);
    auto xt = add_noise(x0t, epst, t, s);
    auto prev = ddpm_step(xt, epst, t, s, zero);
    double before = std::abs(xt.data[0] - std::sqrt(s.alpha_bar(t)) * x0);
    double after = std::abs(prev.data[0] - std::sqrt(s.alpha_bar(t - 1)) * x0);
    if (after <= before + 1e-12) ++improved;
  }
  CHECK(improved > trials * 0.9);
}
