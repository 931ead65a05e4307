#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lgvi/langmod.hpp"
#include "lgvi/unet.hpp"

namespace lgvi::train {

// Finite-difference verification harness. Each registered module is rebuilt
// in double precision on a tiny config; analytic gradients of a random scalar
// projection are compared against central differences with step 1e-3 and
// 64-bit accumulation. Normally-zero parameters (conditioning conv, temporal
// output projections) are randomized first so the check runs at a generic
// point.

struct GradCheckResult {
  std::string module;
  double max_rel_error = 0;
  std::string worst_param;
  bool pass = false;
};

namespace detail {

using D = double;

inline void randomize(Var<D>& v, Rng& rng, double stddev = 0.3) {
  for (auto& x : v->value.data) x = rng.normal() * stddev;
}

struct FdCase {
  std::vector<std::pair<std::string, Var<D>>> params;
  std::function<Var<D>()> loss;
};

inline GradCheckResult run_case(const std::string& name, FdCase c, double tol,
                                double corrupt_scale) {
  const double h = 1e-3;
  for (auto& [pname, p] : c.params) p->zero_grad();
  backward(c.loss());

  GradCheckResult r;
  r.module = name;
  for (auto& [pname, p] : c.params) {
    p->ensure_grad();
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double orig = p->value.data[i];
      p->value.data[i] = orig + h;
      double fp = c.loss()->value.data[0];
      p->value.data[i] = orig - h;
      double fm = c.loss()->value.data[0];
      p->value.data[i] = orig;
      double fd = (fp - fm) / (2 * h);
      double an = p->grad.data[i] * corrupt_scale;
      double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      double rel = std::abs(fd - an) / denom;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = pname;
      }
    }
  }
  r.pass = r.max_rel_error < tol;
  return r;
}

}  // namespace detail

// corrupt_scale != 1 is the harness self-test hook: it scales the analytic
// gradients so a healthy module must be flagged.
inline std::vector<GradCheckResult> run_grad_checks(uint64_t seed, double tol = 1e-4,
                                                    double corrupt_scale = 1.0) {
  using detail::D;
  std::vector<GradCheckResult> results;
  Rng rng(hash_mix(seed, hash_str("gradcheck")));

  {  // temporal attention on [(1*4), 2, 8]
    ParamStore<D> ps(hash_mix(seed, 1));
    unet::TemporalAttention<D> ta(ps, "t", 8, 2);
    detail::randomize(ta.out.w, rng);
    detail::randomize(ta.out.b, rng);
    auto x = make_leaf(Tensor<D>::randn({4, 2, 8}, rng, 0.5), true);
    Tensor<D> proj = Tensor<D>::randn({4, 2, 8}, rng);
    detail::FdCase c;
    for (auto& [n, v] : ps.params) c.params.emplace_back(n, v);
    c.params.emplace_back("input", x);
    c.loss = [=] { return dot_const(ta(x), proj); };
    results.push_back(detail::run_case("temporal_attention", std::move(c), tol, corrupt_scale));
  }
  {  // conditioning convs (Conv_v + zero-init Conv_x, randomized here)
    ParamStore<D> ps(hash_mix(seed, 2));
    unet::ConditionInject<D> inj(ps, "in", 4, 6);
    detail::randomize(inj.conv_x.w, rng);
    detail::randomize(inj.conv_x.b, rng);
    auto z = make_leaf(Tensor<D>::randn({2, 4, 5, 5}, rng, 0.5), true);
    auto cx = make_leaf(Tensor<D>::randn({2, 4, 5, 5}, rng, 0.5), true);
    Tensor<D> proj = Tensor<D>::randn({2, 6, 5, 5}, rng);
    detail::FdCase c;
    for (auto& [n, v] : ps.params) c.params.emplace_back(n, v);
    c.params.emplace_back("z", z);
    c.params.emplace_back("cx", cx);
    c.loss = [=] { return dot_const(inj(z, cx), proj); };
    results.push_back(detail::run_case("inject_condition", std::move(c), tol, corrupt_scale));
  }
  {  // mask decoder on two tiny taps, T=2, pixel_scale 4
    ParamStore<D> ps(hash_mix(seed, 3));
    unet::MaskDecoder<D> dec(ps, "maskdec", {6, 8}, 8, 4);
    detail::randomize(dec.t0.w, rng, 0.1);
    detail::randomize(dec.t0.b, rng, 0.1);
    for (auto& t : dec.up_tconvs) {
      detail::randomize(t.w, rng, 0.1);
      detail::randomize(t.b, rng, 0.1);
    }
    auto tap_hi = make_leaf(Tensor<D>::randn({2, 6, 4, 4}, rng, 0.5), true);
    auto tap_lo = make_leaf(Tensor<D>::randn({2, 8, 2, 2}, rng, 0.5), true);
    Tensor<D> proj = Tensor<D>::randn({2, 1, 16, 16}, rng);
    detail::FdCase c;
    for (auto& [n, v] : ps.params) c.params.emplace_back(n, v);
    c.loss = [=, &dec] { return dot_const(dec({tap_hi, tap_lo}, 2, true), proj); };
    results.push_back(detail::run_case("mask_decoder", std::move(c), tol, corrupt_scale));
  }

  // tiny interactive model shared by the MM-head and LM-head checks
  lang::LangConfig lc;
  lc.d_lm = 8;
  lc.layers = 1;
  lc.heads = 2;
  lc.ffn_mult = 2;
  lc.max_text_len = 16;
  lc.img_tokens = 16;
  lc.context_dim = 6;
  lc.image_size = 32;
  {  // MM head
    ParamStore<D> ps(hash_mix(seed, 4));
    lang::Mllm<D> m(ps, lc, 12);
    auto h_span = make_leaf(Tensor<D>::randn({3, lc.d_lm}, rng, 0.5), true);
    Tensor<D> proj = Tensor<D>::randn({3, lc.context_dim}, rng);
    detail::FdCase c;
    for (auto& [n, v] : ps.params)
      if (n.rfind("lm.mm.", 0) == 0) c.params.emplace_back(n, v);
    c.params.emplace_back("h_span", h_span);
    c.loss = [=, &m] { return dot_const(m.mm_head(h_span), proj); };
    results.push_back(detail::run_case("mm_head", std::move(c), tol, corrupt_scale));
  }
  {  // LM head through the token cross entropy
    ParamStore<D> ps(hash_mix(seed, 5));
    lang::Mllm<D> m(ps, lc, 12);
    VideoClip frame(1, lc.image_size, lc.image_size);
    Rng frng(hash_mix(seed, 77));
    for (auto& v : frame.data) v = static_cast<float>(frng.uniform());
    std::vector<int> text = {lang::Vocabulary::kBos, 6, 7, 8, 9};
    std::vector<int> targets = {6, 7, 8, 9, lang::Vocabulary::kEos};
    detail::FdCase c;
    for (auto& [n, v] : ps.params)
      if (n == "lm.lm_head") c.params.emplace_back(n, v);
    c.loss = [=, &m] { return lang::lm_loss(m.forward(frame, text).logits, targets); };
    results.push_back(detail::run_case("lm_head", std::move(c), tol, corrupt_scale));
  }
  return results;
}

}  // namespace lgvi::train
