#pragma once

#include <string>
#include <vector>

#include "lgvi/nn.hpp"

namespace lgvi::unet {

// Inflated denoiser: a 2-D UNet whose time axis is folded into the batch,
// with temporal attention inserted between cross-attention and the FFN, a
// zero-initialized video-conditioning branch, and an auxiliary mask decoder
// reading the up-block features.
//
// Zero-init policy: the conditioning conv, the temporal attention output
// projections, and the mask decoder's temporal mixing convs all start at
// zero, so the freshly built video model computes exactly the per-frame
// image model.

struct UNetConfig {
  int64_t base_channels = 32;
  std::vector<int> channel_mult = {1, 2};
  int64_t num_heads = 2;
  int64_t context_dim = 128;
  int64_t latent_channels = 48;
  int64_t frames = 8;
  int64_t time_embed_dim = 128;
  int64_t norm_groups = 8;
  int64_t ffn_mult = 2;
  int64_t pixel_scale = 4;      // latent -> pixel upsampling done by the mask decoder
  int64_t mask_decoder_width = 32;
};

// --- layout transforms --------------------------------------------------------

// [B, T, ...] -> [(B*T), ...]; frame (b, t) lands at row b*T + t.
template <class S>
Tensor<S> flatten_time(const Tensor<S>& x) {
  if (x.shape.size() < 2) throw std::invalid_argument("flatten_time: rank");
  Shape s(x.shape.begin() + 1, x.shape.end());
  s[0] = x.shape[0] * x.shape[1];
  return x.reshaped(std::move(s));
}

template <class S>
Tensor<S> unflatten_time(const Tensor<S>& x, int64_t B, int64_t T) {
  if (x.shape.empty() || x.shape[0] != B * T) throw std::invalid_argument("unflatten_time");
  Shape s;
  s.push_back(B);
  s.push_back(T);
  for (size_t i = 1; i < x.shape.size(); ++i) s.push_back(x.shape[i]);
  return x.reshaped(std::move(s));
}

// Spatial layout [(B*T), D, C] -> temporal layout [(B*D), T, C]; exact
// transpose, bit-exact round trip.
template <class S>
Var<S> temporal_reshape(const Var<S>& v, int64_t T) {
  const Shape& s = v->value.shape;
  if (s.size() != 3 || s[0] % T) throw std::invalid_argument("temporal_reshape: leading dim");
  int64_t B = s[0] / T, D = s[1], C = s[2];
  return reshape(permute(reshape(v, {B, T, D, C}), {0, 2, 1, 3}), {B * D, T, C});
}

template <class S>
Var<S> temporal_unreshape(const Var<S>& v, int64_t D) {
  const Shape& s = v->value.shape;
  if (s.size() != 3 || s[0] % D) throw std::invalid_argument("temporal_unreshape: leading dim");
  int64_t B = s[0] / D, T = s[1], C = s[2];
  return reshape(permute(reshape(v, {B, D, T, C}), {0, 2, 1, 3}), {B * T, D, C});
}

// --- attention-core FLOP accounting (matches the O(C T^2) vs O(C D^2) claim) ---

inline int64_t temporal_attention_core_flops(int64_t B, int64_t D, int64_t T, int64_t C) {
  return 4 * B * D * T * T * C;  // QK^T plus attention-weighted V
}
inline int64_t spatial_attention_core_flops(int64_t B, int64_t T, int64_t D, int64_t C) {
  return 4 * B * T * D * D * C;
}

// --- modules -------------------------------------------------------------------

// Eq. 1 with multi-head splitting, residual add through a zero-initialized
// output projection: a no-op at initialization.
template <class S>
struct TemporalAttention {
  Var<S> wq, wk, wv;
  LinearLayer<S> out;
  int64_t heads = 1;

  TemporalAttention() = default;
  TemporalAttention(ParamStore<S>& ps, const std::string& prefix, int64_t channels,
                    int64_t heads_)
      : heads(heads_) {
    double std = 1.0 / std::sqrt(static_cast<double>(channels));
    wq = ps.randn(prefix + ".wq", {channels, channels}, std);
    wk = ps.randn(prefix + ".wk", {channels, channels}, std);
    wv = ps.randn(prefix + ".wv", {channels, channels}, std);
    out = LinearLayer<S>(ps, prefix + ".out", channels, channels, true, /*zero_init=*/true);
  }

  // v in temporal layout [(B*D), T, C]
  Var<S> operator()(const Var<S>& v) const {
    const Shape& s = v->value.shape;
    auto att = attention_batched(v, v, wq, wk, wv, heads);
    auto proj = reshape(out(reshape(att, {s[0] * s[1], s[2]})), {s[0], s[1], s[2]});
    return add(v, proj);
  }
};

// Eq. 2: v_t = Conv_v(z_t) + Conv_x(c_x); Conv_x starts all-zero so the
// output is independent of the conditioning video at initialization.
template <class S>
struct ConditionInject {
  Conv2dLayer<S> conv_v, conv_x;

  ConditionInject() = default;
  ConditionInject(ParamStore<S>& ps, const std::string& prefix, int64_t in_ch, int64_t out_ch) {
    conv_v = Conv2dLayer<S>(ps, prefix + ".conv_v", in_ch, out_ch, 3, 1, 1);
    conv_x = Conv2dLayer<S>(ps, prefix + ".conv_x", in_ch, out_ch, 3, 1, 1, /*zero_init=*/true);
  }

  Var<S> operator()(const Var<S>& z_t, const Var<S>& c_x) const {
    check_same_shape(z_t->value, c_x->value, "inject_condition");
    return add(conv_v(z_t), conv_x(c_x));
  }
};

// Residual block with FiLM-style time conditioning (scale-shift on the
// second normalization) and a zero-initialized output conv, so a fresh block
// is the identity.
template <class S>
struct ResBlock {
  GroupNormLayer<S> norm1, norm2;
  Conv2dLayer<S> conv1, conv2;
  LinearLayer<S> time_proj;  // time_dim -> 2*out_ch (scale | shift)
  Conv2dLayer<S> skip;
  bool channel_change = false;

  ResBlock() = default;
  ResBlock(ParamStore<S>& ps, const std::string& prefix, int64_t in_ch, int64_t out_ch,
           int64_t time_dim, int64_t groups) {
    norm1 = GroupNormLayer<S>(ps, prefix + ".norm1", in_ch, std::min<int64_t>(groups, in_ch));
    conv1 = Conv2dLayer<S>(ps, prefix + ".conv1", in_ch, out_ch, 3, 1, 1);
    time_proj = LinearLayer<S>(ps, prefix + ".time_proj", time_dim, 2 * out_ch);
    norm2 = GroupNormLayer<S>(ps, prefix + ".norm2", out_ch, std::min<int64_t>(groups, out_ch));
    conv2 = Conv2dLayer<S>(ps, prefix + ".conv2", out_ch, out_ch, 3, 1, 1, /*zero_init=*/true);
    channel_change = in_ch != out_ch;
    if (channel_change) skip = Conv2dLayer<S>(ps, prefix + ".skip", in_ch, out_ch, 1, 1, 0);
  }

  Var<S> operator()(const Var<S>& x, const Var<S>& temb, int64_t T) const {
    auto h = conv1(silu(norm1(x)));
    h = scale_shift_time(norm2(h), time_proj(silu(temb)), T);
    h = conv2(silu(h));
    return add(h, channel_change ? skip(x) : x);
  }
};

// Self-attention -> cross-attention(context) -> temporal attention -> FFN.
template <class S>
struct TransformerBlock {
  LayerNormLayer<S> ln_self, ln_cross, ln_ffn;
  Var<S> self_wq, self_wk, self_wv;
  LinearLayer<S> self_out;
  Var<S> cross_wq, cross_wk, cross_wv;
  LinearLayer<S> cross_out;
  TemporalAttention<S> temporal;
  LinearLayer<S> ffn1, ffn2;
  int64_t heads = 1;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<S>& ps, const std::string& prefix, int64_t channels,
                   int64_t heads_, int64_t context_dim, int64_t ffn_mult)
      : heads(heads_) {
    double std = 1.0 / std::sqrt(static_cast<double>(channels));
    double cstd = 1.0 / std::sqrt(static_cast<double>(context_dim));
    ln_self = LayerNormLayer<S>(ps, prefix + ".ln_self", channels);
    self_wq = ps.randn(prefix + ".self.wq", {channels, channels}, std);
    self_wk = ps.randn(prefix + ".self.wk", {channels, channels}, std);
    self_wv = ps.randn(prefix + ".self.wv", {channels, channels}, std);
    self_out = LinearLayer<S>(ps, prefix + ".self.out", channels, channels);
    ln_cross = LayerNormLayer<S>(ps, prefix + ".ln_cross", channels);
    cross_wq = ps.randn(prefix + ".cross.wq", {channels, channels}, std);
    cross_wk = ps.randn(prefix + ".cross.wk", {context_dim, channels}, cstd);
    cross_wv = ps.randn(prefix + ".cross.wv", {context_dim, channels}, cstd);
    cross_out = LinearLayer<S>(ps, prefix + ".cross.out", channels, channels);
    temporal = TemporalAttention<S>(ps, prefix + ".temporal", channels, heads_);
    ln_ffn = LayerNormLayer<S>(ps, prefix + ".ln_ffn", channels);
    ffn1 = LinearLayer<S>(ps, prefix + ".ffn1", channels, channels * ffn_mult);
    ffn2 = LinearLayer<S>(ps, prefix + ".ffn2", channels * ffn_mult, channels);
  }

  // x [(B*T), C, H, W]; context [L, context_dim] shared across the batch.
  Var<S> operator()(const Var<S>& x, const Var<S>& context, int64_t T,
                    bool enable_temporal) const {
    const Shape& s = x->value.shape;
    int64_t N = s[0], C = s[1], D = s[2] * s[3];
    auto seq = permute(reshape(x, {N, C, D}), {0, 2, 1});  // [N, D, C]

    auto project = [&](const LinearLayer<S>& lin, const Var<S>& a) {
      return reshape(lin(reshape(a, {N * D, C})), {N, D, C});
    };

    auto h = ln_self(seq);
    seq = add(seq, project(self_out, attention_batched(h, h, self_wq, self_wk, self_wv, heads)));

    h = ln_cross(seq);
    seq = add(seq, project(cross_out,
                           attention_shared_kv(h, context, cross_wq, cross_wk, cross_wv, heads)));

    if (enable_temporal) {
      auto t = temporal_reshape(seq, T);
      t = temporal(t);
      seq = temporal_unreshape(t, D);
    }

    h = reshape(ln_ffn(seq), {N * D, C});
    seq = add(seq, reshape(ffn2(gelu(ffn1(h))), {N, D, C}));

    return reshape(permute(seq, {0, 2, 1}), {N, C, s[2], s[3]});
  }
};

// Residual temporal mixing conv, zero-initialized: per-frame at init, but
// gradients still reach the kernel through the residual path.
template <class S>
struct TemporalResConv {
  Var<S> w, b;

  TemporalResConv() = default;
  TemporalResConv(ParamStore<S>& ps, const std::string& prefix, int64_t channels) {
    w = ps.zeros(prefix + ".weight", {channels, channels, 3});
    b = ps.zeros(prefix + ".bias", {channels});
  }

  Var<S> operator()(const Var<S>& x, int64_t T) const {
    return add(x, temporal_conv(x, w, b, T));
  }
};

// Predicts the removal mask from up-block features; convolutional per frame
// with residual temporal convs, upsampled from latent to pixel resolution.
template <class S>
struct MaskDecoder {
  std::vector<Conv2dLayer<S>> tap_proj;  // 1x1 per tap, highest resolution first
  Conv2dLayer<S> conv0;
  TemporalResConv<S> t0;
  std::vector<Conv2dLayer<S>> up_convs;
  std::vector<TemporalResConv<S>> up_tconvs;
  Conv2dLayer<S> out_conv;
  int64_t stages = 0;

  MaskDecoder() = default;
  MaskDecoder(ParamStore<S>& ps, const std::string& prefix,
              const std::vector<int64_t>& tap_channels, int64_t width, int64_t pixel_scale) {
    for (size_t i = 0; i < tap_channels.size(); ++i)
      tap_proj.emplace_back(ps, prefix + ".tap" + std::to_string(i), tap_channels[i], width, 1,
                            1, 0);
    conv0 = Conv2dLayer<S>(ps, prefix + ".conv0", width, width, 3, 1, 1);
    t0 = TemporalResConv<S>(ps, prefix + ".t0", width);
    stages = 0;
    for (int64_t f = pixel_scale; f > 1; f /= 2) ++stages;
    int64_t ch = width;
    for (int64_t i = 0; i < stages; ++i) {
      int64_t next = std::max<int64_t>(8, ch / 2);
      up_convs.emplace_back(ps, prefix + ".up" + std::to_string(i), ch, next, 3, 1, 1);
      up_tconvs.emplace_back(ps, prefix + ".ut" + std::to_string(i), next);
      ch = next;
    }
    // zero-init: an untrained head predicts "no mask" everywhere
    out_conv = Conv2dLayer<S>(ps, prefix + ".out", ch, 1, 3, 1, 1, /*zero_init=*/true);
  }

  // taps: highest resolution first; taps[i] has spatial extent (h >> i).
  // Returns logits [(B*T), 1, H, W] at pixel resolution.
  Var<S> operator()(const std::vector<Var<S>>& taps, int64_t T, bool enable_temporal) const {
    if (taps.size() != tap_proj.size())
      throw std::invalid_argument("mask_decoder: expected " + std::to_string(tap_proj.size()) +
                                  " feature taps");
    Var<S> h;
    for (size_t i = 0; i < taps.size(); ++i) {
      auto p = tap_proj[i](taps[i]);
      for (size_t k = 0; k < i; ++k) p = upsample_nearest2x(p);
      h = h ? add(h, p) : p;
    }
    h = silu(conv0(h));
    if (enable_temporal) h = t0(h, T);
    for (int64_t i = 0; i < stages; ++i) {
      h = silu(up_convs[i](upsample_nearest2x(h)));
      if (enable_temporal) h = up_tconvs[i](h, T);
    }
    return out_conv(h);
  }
};

template <class S>
struct UNetOutput {
  Var<S> eps;                     // [(B*T), c_lat, h, w]
  Var<S> mask_logits;             // [(B*T), 1, H, W] (empty when mask head skipped)
  std::vector<Var<S>> taps;       // up-block features, highest resolution first
};

template <class S>
struct VideoUNet {
  UNetConfig cfg;
  ParamStore<S> params;

  LinearLayer<S> time_fc1, time_fc2;
  ConditionInject<S> inject;
  std::vector<ResBlock<S>> down_res;
  std::vector<TransformerBlock<S>> down_tb;
  std::vector<Conv2dLayer<S>> down_sample;   // between levels
  ResBlock<S> mid_res1, mid_res2;
  TransformerBlock<S> mid_tb;
  std::vector<ResBlock<S>> up_res;           // index by level
  std::vector<TransformerBlock<S>> up_tb;
  std::vector<Conv2dLayer<S>> up_sample;     // conv after nearest x2, level l -> l-1
  GroupNormLayer<S> out_norm;
  Conv2dLayer<S> out_conv;
  MaskDecoder<S> mask_decoder;

  explicit VideoUNet(const UNetConfig& config, uint64_t init_seed = 0)
      : cfg(config), params(init_seed) {
    if (cfg.channel_mult.size() < 2)
      throw std::invalid_argument("unet: need at least 2 resolution levels");
    const int64_t L = static_cast<int64_t>(cfg.channel_mult.size());
    auto ch = [&](int64_t l) { return cfg.base_channels * cfg.channel_mult[l]; };
    const int64_t tdim = cfg.time_embed_dim;

    time_fc1 = LinearLayer<S>(params, "unet.time.fc1", cfg.base_channels, tdim);
    time_fc2 = LinearLayer<S>(params, "unet.time.fc2", tdim, tdim);
    inject = ConditionInject<S>(params, "unet.in", cfg.latent_channels, cfg.base_channels);

    int64_t cur = cfg.base_channels;
    for (int64_t l = 0; l < L; ++l) {
      std::string p = "unet.down" + std::to_string(l);
      down_res.emplace_back(params, p + ".res", cur, ch(l), tdim, cfg.norm_groups);
      down_tb.emplace_back(params, p + ".tb", ch(l), cfg.num_heads, cfg.context_dim,
                           cfg.ffn_mult);
      cur = ch(l);
      if (l + 1 < L)
        down_sample.emplace_back(params, p + ".down", cur, cur, 3, 2, 1);
    }
    mid_res1 = ResBlock<S>(params, "unet.mid.res1", cur, cur, tdim, cfg.norm_groups);
    mid_tb = TransformerBlock<S>(params, "unet.mid.tb", cur, cfg.num_heads, cfg.context_dim,
                                 cfg.ffn_mult);
    mid_res2 = ResBlock<S>(params, "unet.mid.res2", cur, cur, tdim, cfg.norm_groups);

    up_res.resize(L);
    up_tb.resize(L);
    up_sample.resize(L);
    for (int64_t l = L - 1; l >= 0; --l) {
      std::string p = "unet.up" + std::to_string(l);
      up_res[l] = ResBlock<S>(params, p + ".res", cur + ch(l), ch(l), tdim, cfg.norm_groups);
      up_tb[l] = TransformerBlock<S>(params, p + ".tb", ch(l), cfg.num_heads, cfg.context_dim,
                                     cfg.ffn_mult);
      cur = ch(l);
      if (l > 0) {
        up_sample[l] = Conv2dLayer<S>(params, p + ".upconv", cur, ch(l - 1), 3, 1, 1);
        cur = ch(l - 1);
      }
    }
    out_norm = GroupNormLayer<S>(params, "unet.out.norm", cur,
                                 std::min<int64_t>(cfg.norm_groups, cur));
    // zero-init: a fresh denoiser predicts exactly zero noise
    out_conv = Conv2dLayer<S>(params, "unet.out.conv", cur, cfg.latent_channels, 3, 1, 1,
                              /*zero_init=*/true);

    std::vector<int64_t> tap_channels;
    for (int64_t l = 0; l < L; ++l) tap_channels.push_back(ch(l));
    mask_decoder = MaskDecoder<S>(params, "maskdec", tap_channels, cfg.mask_decoder_width,
                                  cfg.pixel_scale);
  }

  // z_t, c_x: [(B*T), c_lat, h, w]; t_steps: one diffusion step per sample;
  // context: [Lc, context_dim], shared across the batch.
  UNetOutput<S> forward(const Var<S>& z_t, const Var<S>& c_x, const std::vector<int>& t_steps,
                        const Var<S>& context, int64_t T, bool enable_temporal = true,
                        bool with_mask = true) const {
    const Shape& s = z_t->value.shape;
    if (s.size() != 4 || s[1] != cfg.latent_channels)
      throw std::invalid_argument("unet_forward: latent shape " + shape_str(s));
    if (s[0] % T || static_cast<int64_t>(t_steps.size()) != s[0] / T)
      throw std::invalid_argument("unet_forward: batch/frames mismatch");
    if (context->value.shape.size() != 2 || context->value.shape[1] != cfg.context_dim)
      throw std::invalid_argument("unet_forward: context width mismatch (want " +
                                  std::to_string(cfg.context_dim) + ", got " +
                                  shape_str(context->value.shape) + ")");
    for (int t : t_steps)
      if (t < 1) throw std::invalid_argument("unet_forward: timestep must be >= 1");

    auto temb = time_fc2(silu(time_fc1(
        constant(sinusoidal_embedding<S>(t_steps, cfg.base_channels)))));

    const int64_t L = static_cast<int64_t>(cfg.channel_mult.size());
    auto h = inject(z_t, c_x);
    std::vector<Var<S>> skips(L);
    for (int64_t l = 0; l < L; ++l) {
      h = down_res[l](h, temb, T);
      h = down_tb[l](h, context, T, enable_temporal);
      skips[l] = h;
      if (l + 1 < L) h = down_sample[l](h);
    }
    h = mid_res1(h, temb, T);
    h = mid_tb(h, context, T, enable_temporal);
    h = mid_res2(h, temb, T);

    UNetOutput<S> out;
    out.taps.resize(L);
    for (int64_t l = L - 1; l >= 0; --l) {
      h = concat(h, skips[l], 1);
      h = up_res[l](h, temb, T);
      h = up_tb[l](h, context, T, enable_temporal);
      out.taps[l] = h;
      if (l > 0) h = up_sample[l](upsample_nearest2x(h));
    }
    out.eps = out_conv(silu(out_norm(h)));
    if (with_mask) out.mask_logits = mask_decoder(out.taps, T, enable_temporal);
    return out;
  }
};

}  // namespace lgvi::unet
