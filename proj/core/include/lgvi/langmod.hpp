#pragma once

#include <string>
#include <vector>

#include "lgvi/nn.hpp"
#include "lgvi/video.hpp"
#include "lgvi/vocab.hpp"

namespace lgvi::lang {

// Language conditioning: a per-token referring-expression encoder for the
// referring task, and a small image-grounded autoregressive model for the
// interactive task whose prompt-span hidden states condition the denoiser.

struct LangConfig {
  int64_t d_lm = 128;
  int64_t layers = 2;
  int64_t heads = 4;
  int64_t ffn_mult = 2;
  int64_t max_text_len = 96;
  int64_t img_tokens = 16;      // fixed number of <IMG> positions
  int64_t context_dim = 128;
  int64_t image_size = 64;      // first-frame side length fed to the encoder
};

// --- referring-expression encoder -------------------------------------------

template <class S>
struct RefEncoder {
  LangConfig cfg;
  Var<S> tok_emb, pos_emb;
  LayerNormLayer<S> ln_attn, ln_ffn, ln_out;
  Var<S> wq, wk, wv;
  LinearLayer<S> attn_out, ffn1, ffn2, out_proj;

  RefEncoder() = default;
  RefEncoder(ParamStore<S>& ps, const LangConfig& config, int vocab_size) : cfg(config) {
    int64_t d = cfg.context_dim;
    double std = 1.0 / std::sqrt(static_cast<double>(d));
    tok_emb = ps.randn("lm.ref.tok_emb", {vocab_size, d}, 0.02);
    pos_emb = ps.randn("lm.ref.pos_emb", {cfg.max_text_len, d}, 0.02);
    ln_attn = LayerNormLayer<S>(ps, "lm.ref.ln_attn", d);
    wq = ps.randn("lm.ref.wq", {d, d}, std);
    wk = ps.randn("lm.ref.wk", {d, d}, std);
    wv = ps.randn("lm.ref.wv", {d, d}, std);
    attn_out = LinearLayer<S>(ps, "lm.ref.attn_out", d, d);
    ln_ffn = LayerNormLayer<S>(ps, "lm.ref.ln_ffn", d);
    ffn1 = LinearLayer<S>(ps, "lm.ref.ffn1", d, d * cfg.ffn_mult);
    ffn2 = LinearLayer<S>(ps, "lm.ref.ffn2", d * cfg.ffn_mult, d);
    ln_out = LayerNormLayer<S>(ps, "lm.ref.ln_out", d);
    out_proj = LinearLayer<S>(ps, "lm.ref.out", d, d);
  }

  // Per-token features [L, context_dim]; bidirectional self-attention.
  Var<S> operator()(const std::vector<int>& ids) const {
    if (ids.empty()) throw std::invalid_argument("encode_referring: empty sequence");
    int64_t L = static_cast<int64_t>(ids.size());
    if (L > cfg.max_text_len) throw std::invalid_argument("encode_referring: sequence too long");
    auto x = add(embedding(tok_emb, ids), slice(pos_emb, 0, 0, L));
    auto x3 = reshape(x, {1, L, cfg.context_dim});
    auto h = ln_attn(x3);
    x3 = add(x3, reshape(attn_out(reshape(attention_batched(h, h, wq, wk, wv, 1),
                                          {L, cfg.context_dim})),
                         {1, L, cfg.context_dim}));
    auto f = reshape(ln_ffn(x3), {L, cfg.context_dim});
    x3 = add(x3, reshape(ffn2(gelu(ffn1(f))), {1, L, cfg.context_dim}));
    return out_proj(reshape(ln_out(x3), {L, cfg.context_dim}));
  }
};

// --- interactive model ---------------------------------------------------------

template <class S>
struct MllmBlock {
  LayerNormLayer<S> ln_attn, ln_ffn;
  Var<S> wq, wk, wv;
  LinearLayer<S> attn_out, ffn1, ffn2;
  int64_t heads = 1;

  MllmBlock() = default;
  MllmBlock(ParamStore<S>& ps, const std::string& prefix, int64_t d, int64_t heads_,
            int64_t ffn_mult)
      : heads(heads_) {
    double std = 1.0 / std::sqrt(static_cast<double>(d));
    ln_attn = LayerNormLayer<S>(ps, prefix + ".ln_attn", d);
    wq = ps.randn(prefix + ".wq", {d, d}, std);
    wk = ps.randn(prefix + ".wk", {d, d}, std);
    wv = ps.randn(prefix + ".wv", {d, d}, std);
    attn_out = LinearLayer<S>(ps, prefix + ".attn_out", d, d);
    ln_ffn = LayerNormLayer<S>(ps, prefix + ".ln_ffn", d);
    ffn1 = LinearLayer<S>(ps, prefix + ".ffn1", d, d * ffn_mult);
    ffn2 = LinearLayer<S>(ps, prefix + ".ffn2", d * ffn_mult, d);
  }

  Var<S> operator()(const Var<S>& x3 /*[1,L,d]*/) const {
    int64_t L = x3->value.shape[1], d = x3->value.shape[2];
    auto h = ln_attn(x3);
    auto y = add(x3, reshape(attn_out(reshape(
                                 attention_batched(h, h, wq, wk, wv, heads, /*causal=*/true),
                                 {L, d})),
                             {1, L, d}));
    auto f = reshape(ln_ffn(y), {L, d});
    return add(y, reshape(ffn2(gelu(ffn1(f))), {1, L, d}));
  }
};

template <class S>
struct MllmOutput {
  Var<S> hidden;  // [L_text, d_lm], final-layer states at text positions
  Var<S> logits;  // [L_text, |V|]
};

template <class S>
struct Mllm {
  LangConfig cfg;
  int vocab_size = 0;

  // image branch g + W_trans
  Conv2dLayer<S> img_conv1, img_conv2, img_conv3;
  LinearLayer<S> img_trans;

  Var<S> tok_emb, pos_emb;
  std::vector<MllmBlock<S>> blocks;
  LayerNormLayer<S> ln_final;
  Var<S> lm_head;  // [d_lm, |V|]
  LinearLayer<S> mm_fc1, mm_fc2;

  Mllm() = default;
  Mllm(ParamStore<S>& ps, const LangConfig& config, int vocab_size_)
      : cfg(config), vocab_size(vocab_size_) {
    int64_t d = cfg.d_lm;
    img_conv1 = Conv2dLayer<S>(ps, "lm.img.conv1", 3, 16, 3, 2, 1);
    img_conv2 = Conv2dLayer<S>(ps, "lm.img.conv2", 16, 32, 3, 2, 1);
    img_conv3 = Conv2dLayer<S>(ps, "lm.img.conv3", 32, 64, 3, 2, 1);
    img_trans = LinearLayer<S>(ps, "lm.img.trans", 64, d);
    tok_emb = ps.randn("lm.tok_emb", {vocab_size, d}, 0.02);
    pos_emb = ps.randn("lm.pos_emb", {cfg.img_tokens + cfg.max_text_len, d}, 0.02);
    for (int64_t i = 0; i < cfg.layers; ++i)
      blocks.emplace_back(ps, "lm.block" + std::to_string(i), d, cfg.heads, cfg.ffn_mult);
    ln_final = LayerNormLayer<S>(ps, "lm.ln_final", d);
    lm_head = ps.randn("lm.lm_head", {d, vocab_size}, 1.0 / std::sqrt(static_cast<double>(d)));
    mm_fc1 = LinearLayer<S>(ps, "lm.mm.fc1", d, d);
    mm_fc2 = LinearLayer<S>(ps, "lm.mm.fc2", d, cfg.context_dim);
  }

  // e_i = W_trans * g(X0): a fixed number of image tokens from the first frame.
  Var<S> image_tokens(const VideoClip& clip) const {
    if (clip.height != cfg.image_size || clip.width != cfg.image_size)
      throw std::invalid_argument("mllm: unexpected frame size");
    // first frame, [0,1] -> [-1,1], NCHW
    Tensor<S> frame({1, 3, clip.height, clip.width});
    for (int64_t y = 0; y < clip.height; ++y)
      for (int64_t x = 0; x < clip.width; ++x)
        for (int64_t c = 0; c < 3; ++c)
          frame.data[(c * clip.height + y) * clip.width + x] =
              static_cast<S>(clip.at(0, y, x, c) * 2.0f - 1.0f);
    auto h = silu(img_conv1(constant(std::move(frame))));
    h = silu(img_conv2(h));
    h = silu(img_conv3(h));
    int64_t side = h->value.shape[2];
    int64_t grid = 4;  // 4x4 = img_tokens positions
    if (cfg.img_tokens != grid * grid) throw std::invalid_argument("mllm: img_tokens must be 16");
    if (side % grid) throw std::invalid_argument("mllm: image size incompatible");
    if (side != grid) h = avg_pool2d(h, side / grid);
    // [1, 64, 4, 4] -> [16, 64]
    auto tokens = reshape(permute(reshape(h, {64, grid * grid}), {1, 0}), {grid * grid, 64});
    return img_trans(tokens);
  }

  // Causal transformer over [image tokens, text tokens]. Returns hidden
  // states and next-token logits at the text positions.
  MllmOutput<S> forward(const VideoClip& first_frame, const std::vector<int>& text_ids) const {
    if (text_ids.empty() || text_ids[0] != Vocabulary::kBos)
      throw std::invalid_argument("mllm_forward: dialog tokens must begin with <BOS>");
    int64_t Lt = static_cast<int64_t>(text_ids.size());
    if (Lt > cfg.max_text_len) throw std::invalid_argument("mllm_forward: sequence exceeds max_len");
    int64_t L = cfg.img_tokens + Lt;

    auto ei = image_tokens(first_frame);
    auto el = embedding(tok_emb, text_ids);
    auto x = add(concat(ei, el, 0), slice(pos_emb, 0, 0, L));
    auto x3 = reshape(x, {1, L, cfg.d_lm});
    for (const auto& blk : blocks) x3 = blk(x3);
    auto h_all = reshape(ln_final(x3), {L, cfg.d_lm});
    MllmOutput<S> out;
    out.hidden = slice(h_all, 0, cfg.img_tokens, L);
    out.logits = matmul(out.hidden, lm_head);
    return out;
  }

  // Two-layer MM head mapping span states [Lp, d_lm] -> h_p [Lp, context_dim].
  Var<S> mm_head(const Var<S>& h_span) const {
    if (h_span->value.shape.empty() || h_span->value.shape[0] < 1)
      throw std::invalid_argument("mm_head: empty span");
    return mm_fc2(gelu(mm_fc1(h_span)));
  }

  // Greedy argmax continuation of [<BOS>, request...]; stops at <EOS> or the
  // length cap. Returns only the generated tokens (without the <EOS>).
  std::vector<int> greedy_decode(const VideoClip& first_frame,
                                 const std::vector<int>& prefix_ids) const {
    NoGradGuard ng;
    std::vector<int> seq = prefix_ids;
    while (static_cast<int64_t>(seq.size()) < cfg.max_text_len) {
      auto out = forward(first_frame, seq);
      const auto& lg = out.logits->value;
      int64_t V = lg.shape[1];
      const S* last = lg.ptr() + (lg.shape[0] - 1) * V;
      int best = 0;
      for (int64_t i = 1; i < V; ++i)
        if (last[i] > last[best]) best = static_cast<int>(i);
      if (best == Vocabulary::kEos) break;
      seq.push_back(best);
    }
    return std::vector<int>(seq.begin() + prefix_ids.size(), seq.end());
  }
};

// Mean token-level cross entropy; <PAD> targets excluded.
template <class S>
Var<S> lm_loss(const Var<S>& logits, const std::vector<int>& targets) {
  std::vector<int> mask(targets.size());
  bool any = false;
  for (size_t i = 0; i < targets.size(); ++i) {
    mask[i] = targets[i] != Vocabulary::kPad;
    any = any || mask[i];
  }
  if (!any) throw std::invalid_argument("lm_loss: all-pad target");
  return cross_entropy_rows(logits, targets, mask);
}

}  // namespace lgvi::lang
