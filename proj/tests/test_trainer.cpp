#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lgvi/gradcheck.hpp"
#include "lgvi/pipeline.hpp"

using namespace lgvi;
using namespace lgvi::train;

namespace {

cfg::RunConfig tiny_run_config() {
  cfg::RunConfig c;
  c.generator.frames = 4;
  c.generator.height = 32;
  c.generator.width = 32;
  c.generator.min_size = 3;
  c.generator.max_size = 6;
  c.codec.f = 4;
  c.schedule.steps = 10;
  c.schedule.beta_start = 0.01;
  c.schedule.beta_end = 0.2;
  c.model.base_channels = 8;
  c.model.num_heads = 2;
  c.model.context_dim = 16;
  c.model.time_embed_dim = 16;
  c.model.norm_groups = 4;
  c.model.mask_decoder_width = 8;
  c.language.d_lm = 16;
  c.language.heads = 2;
  c.language.layers = 1;
  return c;
}

std::vector<synth::Sample> tiny_dataset(const cfg::RunConfig& c, int count) {
  std::vector<synth::Sample> out;
  auto gcfg = cfg::generator_config(c);
  for (uint64_t seed = 0; static_cast<int>(out.size()) < count; ++seed) {
    auto scene = synth::generate_scene(seed, gcfg);
    for (size_t i = 0; i < scene.objects.size() && static_cast<int>(out.size()) < count; ++i)
      if (auto s = synth::make_sample(scene, static_cast<int>(i), seed)) out.push_back(*s);
  }
  return out;
}

}  // namespace

TEST_CASE("diffusion_loss: zero, closed form, symmetry") {
  auto a = constant(Tensor<float>::full({2, 3}, 0.5f));
  auto zero = constant(Tensor<float>::zeros({2, 3}));
  CHECK(diffusion_loss(a, a)->value.data[0] == 0.0f);
  CHECK(diffusion_loss(zero, a)->value.data[0] == doctest::Approx(0.25));
  Rng rng(3);
  auto x = constant(Tensor<float>::randn({4, 4}, rng));
  auto y = constant(Tensor<float>::randn({4, 4}, rng));
  CHECK(diffusion_loss(x, y)->value.data[0] == doctest::Approx(diffusion_loss(y, x)->value.data[0]));
}

TEST_CASE("mask_loss: saturation, ln2 at zero logits, flip symmetry") {
  MaskClip mask(1, 4, 4);
  Rng rng(4);
  for (auto& v : mask.data) v = rng.uniform() < 0.5 ? 0 : 1;

  Tensor<float> sat({1, 1, 4, 4});
  for (int64_t i = 0; i < 16; ++i) sat.data[i] = mask.data[i] ? 20.0f : -20.0f;
  CHECK(mask_loss(constant(sat), mask)->value.data[0] < 1e-6);

  auto zeros = constant(Tensor<float>::zeros({1, 1, 4, 4}));
  CHECK(mask_loss(zeros, mask)->value.data[0] == doctest::Approx(std::log(2.0)));

  MaskClip flipped = mask;
  for (auto& v : flipped.data) v = 1 - v;
  CHECK(mask_loss(zeros, flipped)->value.data[0] ==
        doctest::Approx(mask_loss(zeros, mask)->value.data[0]));

  MaskClip bad = mask;
  bad.data[0] = 2;
  CHECK_THROWS_AS((void)mask_loss(zeros, bad), std::invalid_argument);
}

TEST_CASE("total_loss: paper weights arithmetic and mode contracts") {
  LossWeights w;  // lambda = (1, 0.001, 0.1)
  LossParts<float> parts;
  parts.diff = constant(Tensor<float>::full({1}, 0.5f));
  parts.mask = constant(Tensor<float>::full({1}, 0.6931f));
  parts.lm = constant(Tensor<float>::full({1}, 2.0f));

  auto interactive = total_loss(parts, w, Mode::lgvi_i);
  CHECK(interactive->value.data[0] == doctest::Approx(0.70069).epsilon(1e-5));

  auto referring = total_loss(parts, w, Mode::lgvi);
  CHECK(referring->value.data[0] == doctest::Approx(0.5 + 0.001 * 0.6931).epsilon(1e-6));

  LossWeights only_diff;
  only_diff.lambda2 = 0;
  only_diff.lambda3 = 0;
  CHECK(total_loss(parts, only_diff, Mode::lgvi_i)->value.data[0] == doctest::Approx(0.5));

  LossParts<float> missing;
  missing.diff = parts.diff;
  CHECK_THROWS_AS((void)total_loss(missing, w, Mode::lgvi), std::invalid_argument);
  LossParts<float> no_lm;
  no_lm.diff = parts.diff;
  no_lm.mask = parts.mask;
  CHECK_THROWS_AS((void)total_loss(no_lm, w, Mode::lgvi_i), std::invalid_argument);
}

TEST_CASE("adam: prefix groups and zero-lr bit-exactness") {
  ParamStore<float> ps(1);
  auto a = ps.randn("unet.w", {4}, 1.0);
  auto b = ps.randn("maskdec.w", {4}, 1.0);
  auto before_a = a->value.data;
  auto before_b = b->value.data;

  Adam opt({{"unet.", 0.0}, {"maskdec.", 0.1}});
  CHECK(opt.lr_for("unet.w") == 0.0);
  CHECK(opt.lr_for("maskdec.w") == 0.1);
  CHECK_THROWS_AS((void)opt.lr_for("other.w"), std::invalid_argument);

  auto loss = add(sum_all(mul(a, a)), sum_all(mul(b, b)));
  ps.zero_grad();
  backward(loss);
  opt.step({&ps});

  CHECK(a->value.data == before_a);  // zero lr: bit-exact
  CHECK(b->value.data != before_b);
}

TEST_CASE("mixer: video fraction within 0.75 +/- 0.03 over 4000 steps") {
  int videos = 0;
  const int n = 4000;
  for (int step = 0; step < n; ++step) videos += step_is_video(123, step, 0.75) ? 1 : 0;
  double frac = static_cast<double>(videos) / n;
  CHECK(frac > 0.72);
  CHECK(frac < 0.78);
}

TEST_CASE("gradient checks pass for all registered modules") {
  auto results = run_grad_checks(2024);
  REQUIRE(results.size() == 5);
  for (const auto& r : results) {
    INFO(r.module, " max_rel_error=", r.max_rel_error, " at ", r.worst_param);
    CHECK(r.pass);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradcheck harness detects a corrupted gradient") {
  auto results = run_grad_checks(2024, 1e-4, 1.01);
  bool any_fail = false;
  for (const auto& r : results) any_fail = any_fail || !r.pass;
  CHECK(any_fail);
}

TEST_CASE("train_step: determinism and loss decrease on a tiny overfit") {
  auto c = tiny_run_config();
  auto samples = tiny_dataset(c, 2);
  REQUIRE(samples.size() == 2);

  TrainOptions opts;
  opts.mode = Mode::lgvi;
  opts.seed = 9;
  opts.image_batch = 2;
  opts.lr_unet = 2e-3;
  opts.lr_maskdec = 2e-3;
  opts.lr_lang = 2e-3;

  Pipeline p1(c, 5), p2(c, 5);
  Trainer t1(p1, samples, opts), t2(p2, samples, opts);
  double first = 0, last = 0;
  const int steps = 30;
  for (int s = 0; s < steps; ++s) {
    auto l1 = t1.train_step(s);
    auto l2 = t2.train_step(s);
    CHECK(l1.total == l2.total);  // same seed, same curve, bit-exact
    if (s < 5) first += l1.total / 5;
    if (s >= steps - 5) last += l1.total / 5;
  }
  CHECK(last < first);
}

TEST_CASE("interactive mode requires dialogs and trains the language loss") {
  auto c = tiny_run_config();
  c.language.max_text_len = 96;
  auto samples = tiny_dataset(c, 2);

  TrainOptions opts;
  opts.mode = Mode::lgvi_i;
  opts.seed = 4;
  Pipeline p(c, 6);
  Trainer t(p, samples, opts);
  auto log = t.train_step(0);
  CHECK(log.lm > 0);
  CHECK(std::isfinite(log.total));

  auto no_dialogs = samples;
  for (auto& s : no_dialogs) s.dialog = synth::DialogRecord{};
  CHECK_THROWS_AS((Trainer{p, no_dialogs, opts}), std::invalid_argument);
}

TEST_CASE("checkpoint round trip: save, load, forward bit-identical") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "lgvi_ckpt_test";
  fs::create_directories(dir);
  auto prefix = (dir / "model").string();

  auto c = tiny_run_config();
  auto samples = tiny_dataset(c, 1);
  Pipeline p(c, 77);

  // move weights off their init point first
  TrainOptions opts;
  opts.seed = 1;
  Trainer t(p, samples, opts);
  for (int s = 0; s < 3; ++s) t.train_step(s);

  auto forward_digest = [&](Pipeline& pipe) {
    NoGradGuard ng;
    auto z = constant(encode_clip_nchw(samples[0].target, c.codec.f));
    auto cx = constant(encode_clip_nchw(samples[0].source, c.codec.f));
    auto ctx = pipe.context_for_expression(samples[0].referring_expr);
    auto out = pipe.net.forward(z, cx, {3}, ctx, samples[0].target.frames);
    return out.eps->value.data;
  };
  auto before = forward_digest(p);

  p.save_checkpoint(prefix);
  Pipeline q(c, 123456);  // different init; loading must overwrite everything
  CHECK(q.load_checkpoint(prefix) ==
        static_cast<int>(p.net.params.params.size() + p.lang_params.params.size()));
  auto after = forward_digest(q);
  CHECK(before == after);

  // optimizer state round trip keeps training curves bit-exact on resume
  auto opt_prefix = (dir / "opt").string();
  t.optimizer().save(opt_prefix);
  Trainer t2(q, samples, opts);
  t2.optimizer().load(opt_prefix);
  auto a = t.train_step(3);
  auto b = t2.train_step(3);
  CHECK(a.total == b.total);
  auto a2 = t.train_step(4);
  auto b2 = t2.train_step(4);
  CHECK(a2.total == b2.total);
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with the offending sample id") {
  auto c = tiny_run_config();
  auto samples = tiny_dataset(c, 1);
  Pipeline p(c, 8);
  // poison one weight
  p.net.params.get("unet.in.conv_v.weight")->value.data[0] =
      std::numeric_limits<float>::quiet_NaN();
  TrainOptions opts;
  opts.seed = 2;
  Trainer t(p, samples, opts);
  try {
    t.train_step(0);
    FAIL("expected abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(samples[0].id) != std::string::npos);
  }
}
