#pragma once

#include <map>
#include <string>

#include "lgvi/nnops.hpp"
#include "lgvi/rng.hpp"

namespace lgvi {

// Named parameter registry. Initialization draws from an RNG derived from
// (init_seed, parameter name) so the values do not depend on construction
// order.
template <class S>
struct ParamStore {
  uint64_t init_seed = 0;
  std::map<std::string, Var<S>> params;

  explicit ParamStore(uint64_t seed = 0) : init_seed(seed) {}

  Var<S> add(const std::string& name, Tensor<S> init) {
    if (params.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    auto v = make_leaf(std::move(init), true, name);
    params[name] = v;
    return v;
  }

  Var<S> randn(const std::string& name, Shape shape, double stddev) {
    Rng rng = named_rng(init_seed, name);
    return add(name, Tensor<S>::randn(std::move(shape), rng, stddev));
  }

  Var<S> zeros(const std::string& name, Shape shape) {
    return add(name, Tensor<S>::zeros(std::move(shape)));
  }

  Var<S> full(const std::string& name, Shape shape, S v) {
    return add(name, Tensor<S>::full(std::move(shape), v));
  }

  Var<S> get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params.count(name) > 0; }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [k, v] : params) n += v->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [k, v] : params) v->zero_grad();
  }
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <class S>
struct LinearLayer {
  Var<S> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<S>& ps, const std::string& prefix, int64_t in, int64_t out,
              bool bias = true, bool zero_init = false) {
    if (zero_init)
      w = ps.zeros(prefix + ".weight", {in, out});
    else
      w = ps.randn(prefix + ".weight", {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
    if (bias) b = ps.zeros(prefix + ".bias", {out});
  }

  Var<S> operator()(const Var<S>& x) const { return linear(x, w, b); }
};

template <class S>
struct Conv2dLayer {
  Var<S> w, b;
  int64_t stride = 1, pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<S>& ps, const std::string& prefix, int64_t in_ch, int64_t out_ch,
              int64_t k, int64_t stride_, int64_t pad_, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    double std = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k));
    if (zero_init)
      w = ps.zeros(prefix + ".weight", {out_ch, in_ch, k, k});
    else
      w = ps.randn(prefix + ".weight", {out_ch, in_ch, k, k}, std);
    b = ps.zeros(prefix + ".bias", {out_ch});
  }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <class S>
struct GroupNormLayer {
  Var<S> gamma, beta;
  int64_t groups = 8;

  GroupNormLayer() = default;
  GroupNormLayer(ParamStore<S>& ps, const std::string& prefix, int64_t channels,
                 int64_t groups_)
      : groups(groups_) {
    gamma = ps.full(prefix + ".gamma", {channels}, S(1));
    beta = ps.zeros(prefix + ".beta", {channels});
  }

  Var<S> operator()(const Var<S>& x) const { return group_norm(x, gamma, beta, groups); }
};

template <class S>
struct LayerNormLayer {
  Var<S> gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore<S>& ps, const std::string& prefix, int64_t channels) {
    gamma = ps.full(prefix + ".gamma", {channels}, S(1));
    beta = ps.zeros(prefix + ".beta", {channels});
  }

  Var<S> operator()(const Var<S>& x) const { return layer_norm(x, gamma, beta); }
};

// ---------------------------------------------------------------------------
// Attention composites
// ---------------------------------------------------------------------------

// Scaled dot-product attention with per-batch keys/values.
// q_src [N,Lq,C], kv_src [N,Lk,C]; wq/wk/wv [C,C]. Softmax(QK^T/sqrt(dh))V,
// computed per head over the middle axis. Returns [N,Lq,C] (no out proj).
template <class S>
Var<S> attention_batched(const Var<S>& q_src, const Var<S>& kv_src, const Var<S>& wq,
                         const Var<S>& wk, const Var<S>& wv, int64_t heads,
                         bool causal = false) {
  const Shape& sq = q_src->value.shape;
  const Shape& sk = kv_src->value.shape;
  if (sq.size() != 3 || sk.size() != 3 || sq[0] != sk[0])
    throw std::invalid_argument("attention_batched: shapes");
  int64_t N = sq[0], Lq = sq[1], C = sq[2], Lk = sk[1];
  if (C % heads) throw std::invalid_argument("attention_batched: heads must divide channels");
  int64_t dh = C / heads;

  auto split = [&](const Var<S>& src, const Var<S>& w, int64_t L) {
    auto p = linear(reshape(src, {N * L, C}), w, Var<S>{});
    return reshape(permute(reshape(p, {N, L, heads, dh}), {0, 2, 1, 3}), {N * heads, L, dh});
  };
  // scaling the (small) query tensor, not the score matrix
  auto q = scale(split(q_src, wq, Lq), 1.0 / std::sqrt(static_cast<double>(dh)));
  auto k = split(kv_src, wk, Lk);
  auto v = split(kv_src, wv, Lk);

  auto scores = bmm(q, k, true);
  if (causal) {
    Tensor<S> mask({Lq, Lk});
    for (int64_t i = 0; i < Lq; ++i)
      for (int64_t j = 0; j < Lk; ++j) mask.data[i * Lk + j] = j > i ? S(-1e9) : S(0);
    scores = add_mask2d(scores, mask);
  }
  auto att = softmax_last(scores);
  auto out = bmm(att, v);
  return reshape(permute(reshape(out, {N, heads, Lq, dh}), {0, 2, 1, 3}), {N, Lq, C});
}

// Cross-attention against a context shared by every batch row.
// q_src [N,Lq,C]; context [Lk,Ck]; wq [C,C], wk/wv [Ck,C].
template <class S>
Var<S> attention_shared_kv(const Var<S>& q_src, const Var<S>& context, const Var<S>& wq,
                           const Var<S>& wk, const Var<S>& wv, int64_t heads) {
  const Shape& sq = q_src->value.shape;
  const Shape& sc = context->value.shape;
  if (sq.size() != 3 || sc.size() != 2) throw std::invalid_argument("attention_shared_kv: shapes");
  int64_t N = sq[0], Lq = sq[1], C = sq[2], Lk = sc[0];
  int64_t dh = C / heads;

  // queries laid out as [heads, N*Lq, dh] so shared K/V batch over heads only
  auto q = scale(reshape(permute(reshape(linear(reshape(q_src, {N * Lq, C}), wq, Var<S>{}),
                                         {N * Lq, heads, dh}),
                                 {1, 0, 2}),
                         {heads, N * Lq, dh}),
                 1.0 / std::sqrt(static_cast<double>(dh)));
  auto k = reshape(permute(reshape(linear(context, wk, Var<S>{}), {Lk, heads, dh}), {1, 0, 2}),
                   {heads, Lk, dh});
  auto v = reshape(permute(reshape(linear(context, wv, Var<S>{}), {Lk, heads, dh}), {1, 0, 2}),
                   {heads, Lk, dh});

  auto att = softmax_last(bmm(q, k, true));
  auto out = bmm(att, v);  // [heads, N*Lq, dh]
  return reshape(permute(reshape(out, {heads, N * Lq, dh}), {1, 0, 2}), {N, Lq, C});
}

// Sinusoidal embedding of integer timesteps, width must be even.
template <class S>
Tensor<S> sinusoidal_embedding(const std::vector<int>& steps, int64_t width) {
  int64_t B = static_cast<int64_t>(steps.size());
  int64_t half = width / 2;
  Tensor<S> out({B, width});
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < half; ++i) {
      double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                             static_cast<double>(half > 1 ? half - 1 : 1));
      double a = steps[b] * freq;
      out.data[b * width + i] = static_cast<S>(std::sin(a));
      out.data[b * width + half + i] = static_cast<S>(std::cos(a));
    }
  }
  return out;
}

}  // namespace lgvi
