#include <cmath>

#include "doctest.h"
#include "lgvi/metrics.hpp"
#include "lgvi/rng.hpp"

using namespace lgvi;
using namespace lgvi::metrics;

namespace {
VideoClip constant_clip(int64_t t, int64_t h, int64_t w, float v) {
  VideoClip c(t, h, w);
  for (auto& x : c.data) x = v;
  return c;
}

VideoClip random_clip(int64_t t, int64_t h, int64_t w, uint64_t seed) {
  VideoClip c(t, h, w);
  Rng rng(seed);
  for (auto& x : c.data) x = static_cast<float>(rng.uniform());
  return c;
}

VideoClip add_noise_clip(const VideoClip& c, double sigma, uint64_t seed) {
  VideoClip out = c;
  Rng rng(seed);
  for (auto& x : out.data)
    x = static_cast<float>(std::clamp(x + sigma * rng.normal(), 0.0, 1.0));
  return out;
}
}  // namespace

TEST_CASE("psnr: cap, hand arithmetic, symmetry") {
  auto a = random_clip(2, 16, 16, 1);
  CHECK(psnr(a, a) == kPsnrCap);

  auto x = constant_clip(2, 16, 16, 0.5f);
  auto y = constant_clip(2, 16, 16, 0.6f);
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-4));  // MSE 0.01 -> 20 dB

  auto b = random_clip(2, 16, 16, 2);
  CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));

  CHECK_THROWS_AS((void)psnr(a, constant_clip(2, 8, 8, 0.f)), std::invalid_argument);
}

TEST_CASE("ssim: identity, constant-image closed form, symmetry") {
  auto a = random_clip(2, 24, 24, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  auto x = constant_clip(1, 16, 16, 0.5f);
  auto y = constant_clip(1, 16, 16, 0.25f);
  // luminance-only: (2*0.5*0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4)
  double expect = (2 * 0.5 * 0.25 + 1e-4) / (0.5 * 0.5 + 0.25 * 0.25 + 1e-4);
  CHECK(ssim(x, y) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(expect == doctest::Approx(0.80006).epsilon(1e-4));

  auto b = random_clip(2, 24, 24, 4);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

  CHECK_THROWS_AS((void)ssim(constant_clip(1, 8, 8, 0.f), constant_clip(1, 8, 8, 0.f)),
                  std::invalid_argument);
}

TEST_CASE("vfid: identity near zero, symmetry, feature determinism") {
  std::vector<VideoClip> set_a, set_b;
  for (int i = 0; i < 4; ++i) {
    set_a.push_back(random_clip(3, 16, 16, 10 + i));
    set_b.push_back(random_clip(3, 16, 16, 20 + i));
  }
  CHECK(vfid(set_a, set_a) < 1e-6);
  CHECK(std::abs(vfid(set_a, set_b) - vfid(set_b, set_a)) < 1e-6);
  CHECK(vfid(set_a, set_b) > 0);

  auto f1 = vfid_features(set_a[0]);
  auto f2 = vfid_features(set_a[0]);
  CHECK(f1 == f2);
  CHECK(f1.size() == 64);

  CHECK_THROWS_AS((void)vfid({set_a[0]}, set_b), std::invalid_argument);
}

TEST_CASE("frechet distance: Gaussian oracle recovers ||mu1-mu2||^2") {
  // injected synthetic features ~ N(mu, I)
  const int n = 10000, d = 64;
  Rng rng(777);
  std::vector<double> mu1(d), mu2(d);
  double expect = 0;
  for (int i = 0; i < d; ++i) {
    mu1[i] = rng.uniform(-1, 1);
    mu2[i] = mu1[i] + rng.uniform(-1, 1);
    double diff = mu2[i] - mu1[i];
    expect += diff * diff;
  }
  std::vector<std::vector<double>> fa(n, std::vector<double>(d)), fb(n, std::vector<double>(d));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      fa[i][j] = mu1[j] + rng.normal();
      fb[i][j] = mu2[j] + rng.normal();
    }
  double got = frechet_from_features(fa, fb);
  CHECK(std::abs(got - expect) / expect < 0.05);
}

TEST_CASE("e_warp: static zero-flow, exact integer translation, random flow positive") {
  SUBCASE("static clip with zero flow") {
    auto c = random_clip(4, 16, 16, 5);
    for (int64_t t = 1; t < 4; ++t)
      std::copy(c.data.begin(), c.data.begin() + 16 * 16 * 3,
                c.data.begin() + t * 16 * 16 * 3);
    FlowField flow(3, 16, 16);
    CHECK(e_warp(c, flow) == doctest::Approx(0.0));
  }

  SUBCASE("translation by (1,0) with matching integer flow is exact") {
    const int64_t H = 16, W = 16, T = 3;
    VideoClip c(T, H, W);
    Rng rng(6);
    std::vector<float> row0(static_cast<size_t>(H * (W + T) * 3));
    for (auto& v : row0) v = static_cast<float>(rng.uniform());
    // frame t shows the window shifted left by t: pixel (x) at t equals base (x + t)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
          for (int ch = 0; ch < 3; ++ch)
            c.at(t, y, x, ch) = row0[(y * (W + T) + x + t) * 3 + ch];
    FlowField flow(T - 1, H, W);
    for (int64_t i = 0; i < flow.frames * H * W; ++i) {
      flow.data[2 * i] = -1.0f;  // content moves left by one pixel per frame
      flow.data[2 * i + 1] = 0.0f;
    }
    CHECK(e_warp(c, flow) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("random flow on structured content is strictly positive") {
    auto c = random_clip(3, 16, 16, 7);
    FlowField flow(2, 16, 16);
    Rng rng(8);
    for (auto& v : flow.data) v = static_cast<float>(rng.uniform(-2, 2));
    CHECK(e_warp(c, flow) > 0);
  }

  SUBCASE("dimension mismatch rejected") {
    auto c = random_clip(3, 16, 16, 9);
    FlowField bad(3, 16, 16);
    CHECK_THROWS_AS((void)e_warp(c, bad), std::invalid_argument);
  }
}

TEST_CASE("ordering sanity: heavier corruption scores worse on all three metrics") {
  std::vector<VideoClip> gt, light, heavy;
  for (int i = 0; i < 6; ++i) {
    auto base = random_clip(4, 24, 24, 100 + i);
    gt.push_back(base);
    light.push_back(add_noise_clip(base, 0.02, 200 + i));
    heavy.push_back(add_noise_clip(base, 0.1, 300 + i));
  }
  double psnr_light = 0, psnr_heavy = 0, ssim_light = 0, ssim_heavy = 0;
  for (int i = 0; i < 6; ++i) {
    psnr_light += psnr(gt[i], light[i]);
    psnr_heavy += psnr(gt[i], heavy[i]);
    ssim_light += ssim(gt[i], light[i]);
    ssim_heavy += ssim(gt[i], heavy[i]);
  }
  CHECK(psnr_light > psnr_heavy);
  CHECK(ssim_light > ssim_heavy);
  CHECK(vfid(gt, light) < vfid(gt, heavy));
}
