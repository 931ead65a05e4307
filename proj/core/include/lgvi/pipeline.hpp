#pragma once

#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lgvi/codec.hpp"
#include "lgvi/config.hpp"
#include "lgvi/ddpm.hpp"
#include "lgvi/langmod.hpp"
#include "lgvi/trainer.hpp"
#include "lgvi/unet.hpp"

namespace lgvi {

// Full model bundle plus the training and sampling recipes shared by the CLI
// and the acceptance suite. Scalar type is float: checkpoints are f32
// bit-exact.

// latent [T,h,w,c] (channels last) <-> [T,c,h,w] (NCHW activations)
inline Tensor<float> latent_to_nchw(const Tensor<float>& t) {
  int64_t T = t.shape[0], h = t.shape[1], w = t.shape[2], c = t.shape[3];
  Tensor<float> out({T, c, h, w});
  for (int64_t tt = 0; tt < T; ++tt)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch)
          out.data[((tt * c + ch) * h + y) * w + x] = t.data[((tt * h + y) * w + x) * c + ch];
  return out;
}

inline Tensor<float> nchw_to_latent(const Tensor<float>& t) {
  int64_t T = t.shape[0], c = t.shape[1], h = t.shape[2], w = t.shape[3];
  Tensor<float> out({T, h, w, c});
  for (int64_t tt = 0; tt < T; ++tt)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          out.data[((tt * h + y) * w + x) * c + ch] = t.data[((tt * c + ch) * h + y) * w + x];
  return out;
}

inline Tensor<float> encode_clip_nchw(const VideoClip& clip, int f) {
  return latent_to_nchw(codec::encode(codec::normalize_pixels<float>(clip), f).values);
}

struct Pipeline {
  cfg::RunConfig config;
  lang::Vocabulary vocab;
  ddpm::NoiseSchedule sched;
  unet::VideoUNet<float> net;          // "unet.*" + "maskdec.*"
  ParamStore<float> lang_params;       // "lm.*"
  lang::RefEncoder<float> ref_encoder;
  lang::Mllm<float> mllm;

  explicit Pipeline(const cfg::RunConfig& c, uint64_t init_seed = 0)
      : config(c),
        vocab(lang::build_vocabulary()),
        sched(cfg::schedule(c)),
        net(cfg::unet_config(c), hash_mix(init_seed, hash_str("unet"))),
        lang_params(hash_mix(init_seed, hash_str("lang"))) {
    ref_encoder = lang::RefEncoder<float>(lang_params, cfg::lang_config(c), vocab.size());
    mllm = lang::Mllm<float>(lang_params, cfg::lang_config(c), vocab.size());
    if (ref_encoder.cfg.context_dim != net.cfg.context_dim ||
        mllm.cfg.context_dim != net.cfg.context_dim)
      throw std::logic_error("pipeline: language context width must equal the UNet context_dim");
  }

  std::vector<ParamStore<float>*> stores() { return {&net.params, &lang_params}; }

  void save_checkpoint(const std::string& prefix) const {
    std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
    for (const auto& [name, var] : net.params.params) tensors.emplace_back(name, &var->value);
    for (const auto& [name, var] : lang_params.params) tensors.emplace_back(name, &var->value);
    ckpt::save_tensors(prefix, tensors);
    lang::save_vocabulary(vocab, prefix + ".vocab.json");
  }

  // Returns the number of tensors loaded; strict requires full coverage of
  // both stores.
  int load_checkpoint(const std::string& prefix, bool strict = true) {
    auto stored = ckpt::load_tensors(prefix);
    int loaded = 0;
    auto apply = [&](ParamStore<float>& ps) {
      for (auto& [name, var] : ps.params) {
        auto it = stored.find(name);
        if (it == stored.end()) {
          if (strict) throw std::runtime_error("checkpoint: missing parameter " + name);
          continue;
        }
        if (it->second.shape != var->value.shape)
          throw std::runtime_error("checkpoint: shape mismatch for " + name);
        var->value = it->second;
        ++loaded;
      }
    };
    apply(net.params);
    apply(lang_params);
    return loaded;
  }

  // --- conditioning -------------------------------------------------------------

  Var<float> context_for_expression(const std::string& expr) const {
    return ref_encoder(lang::tokenize(vocab, expr));
  }

  // Teacher-forced dialog tokens: [<BOS>, request..., response..., <EOS>].
  struct DialogTokens {
    std::vector<int> text;
    int request_len = 0;  // token count of the request segment
  };

  DialogTokens dialog_tokens(const synth::DialogRecord& d) const {
    DialogTokens out;
    auto req = lang::tokenize(vocab, d.request);
    auto resp = lang::tokenize(vocab, d.response);
    out.text.push_back(lang::Vocabulary::kBos);
    out.text.insert(out.text.end(), req.begin(), req.end());
    out.text.insert(out.text.end(), resp.begin(), resp.end());
    out.text.push_back(lang::Vocabulary::kEos);
    out.request_len = static_cast<int>(req.size());
    return out;
  }

  // Next-token targets over the response segment only; everything else <PAD>.
  std::vector<int> lm_targets(const DialogTokens& d) const {
    std::vector<int> targets(d.text.size(), lang::Vocabulary::kPad);
    for (size_t i = 0; i + 1 < d.text.size(); ++i)
      if (static_cast<int>(i) >= d.request_len) targets[i] = d.text[i + 1];
    return targets;
  }
};

// --- training -------------------------------------------------------------------

struct StepLog {
  int64_t step = 0;
  bool video = true;
  double total = 0, diff = 0, mask = 0, lm = 0;
  std::string sample_id;
};

struct TrainOptions {
  train::Mode mode = train::Mode::lgvi;
  uint64_t seed = 0;
  int video_batch = 1;
  int image_batch = 4;
  double video_fraction = 0.75;
  train::LossWeights weights;
  double lr_unet = 3e-5, lr_maskdec = 1e-4, lr_lang = 1e-4;
};

class Trainer {
 public:
  Trainer(Pipeline& pipe, const std::vector<synth::Sample>& samples, TrainOptions opts)
      : pipe_(pipe),
        samples_(samples),
        opts_(opts),
        adam_({{"unet.", opts.lr_unet}, {"maskdec.", opts.lr_maskdec}, {"lm.", opts.lr_lang}}) {
    if (samples_.empty()) throw std::invalid_argument("trainer: empty dataset");
    if (opts_.mode == train::Mode::lgvi_i)
      for (const auto& s : samples_)
        if (s.dialog.response.empty())
          throw std::invalid_argument("trainer: lgvi_i requires dialogs in the dataset");
  }

  // One optimizer update; pure function of (seed, step) given the state.
  StepLog train_step(int64_t step) {
    bool video = train::step_is_video(opts_.seed, step, opts_.video_fraction);
    StepLog log;
    log.step = step;
    log.video = video;

    for (auto* ps : pipe_.stores()) ps->zero_grad();
    const int n_items = video ? opts_.video_batch : opts_.image_batch;
    for (int item = 0; item < n_items; ++item) {
      auto rng = stream_rng(opts_.seed, static_cast<uint64_t>(step),
                            hash_mix(hash_str("item"), static_cast<uint64_t>(item)));
      const auto& sample = samples_[rng.uniform_int(static_cast<int64_t>(samples_.size()))];
      log.sample_id = sample.id;

      VideoClip source = sample.source, target = sample.target;
      MaskClip mask = sample.mask;
      if (!video) {
        // joint image training: a single frame as a T=1 clip
        int64_t fidx = rng.uniform_int(sample.source.frames);
        source = slice_frame(sample.source, fidx);
        target = slice_frame(sample.target, fidx);
        mask = slice_mask(sample.mask, fidx);
      }
      const int64_t T = source.frames;

      auto z0 = encode_clip_nchw(target, pipe_.config.codec.f);
      auto cx = encode_clip_nchw(source, pipe_.config.codec.f);
      int t = 1 + static_cast<int>(rng.uniform_int(pipe_.sched.steps));
      Tensor<float> eps(z0.shape);
      for (auto& v : eps.data) v = static_cast<float>(rng.normal());
      auto zt = ddpm::add_noise(z0, eps, t, pipe_.sched);

      train::LossParts<float> parts;
      Var<float> context;
      if (opts_.mode == train::Mode::lgvi) {
        context = pipe_.context_for_expression(sample.referring_expr);
      } else {
        auto toks = pipe_.dialog_tokens(sample.dialog);
        auto out = pipe_.mllm.forward(source, toks.text);
        auto span_or = lang::find_prompt_span(toks.text);
        Var<float> h_span;
        if (auto* span = std::get_if<lang::PromptSpan>(&span_or)) {
          h_span = slice(out.hidden, 0, span->begin, span->end);
        } else {
          h_span = out.hidden;  // malformed span: condition on the full response
        }
        context = pipe_.mllm.mm_head(h_span);
        parts.lm = lang::lm_loss(out.logits, pipe_.lm_targets(toks));
      }

      auto fwd = pipe_.net.forward(constant(zt), constant(cx), std::vector<int>{t}, context, T);
      parts.diff = train::diffusion_loss(constant(eps), fwd.eps);
      parts.mask = train::mask_loss(fwd.mask_logits, mask);

      auto total = train::total_loss(parts, opts_.weights, opts_.mode);
      double total_v = total->value.data[0];
      if (!std::isfinite(total_v))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                                 " on sample " + sample.id);
      log.total += total_v / n_items;
      log.diff += parts.diff->value.data[0] / n_items;
      log.mask += parts.mask->value.data[0] / n_items;
      if (parts.lm) log.lm += parts.lm->value.data[0] / n_items;

      backward(scale(total, 1.0 / n_items));  // grads accumulate across items
    }
    adam_.step(pipe_.stores());
    return log;
  }

  train::Adam& optimizer() { return adam_; }

 private:
  static VideoClip slice_frame(const VideoClip& clip, int64_t t) {
    VideoClip out(1, clip.height, clip.width);
    std::copy(clip.data.begin() + t * clip.height * clip.width * 3,
              clip.data.begin() + (t + 1) * clip.height * clip.width * 3, out.data.begin());
    return out;
  }
  static MaskClip slice_mask(const MaskClip& mask, int64_t t) {
    MaskClip out(1, mask.height, mask.width);
    std::copy(mask.data.begin() + t * mask.height * mask.width,
              mask.data.begin() + (t + 1) * mask.height * mask.width, out.data.begin());
    return out;
  }

  Pipeline& pipe_;
  const std::vector<synth::Sample>& samples_;
  TrainOptions opts_;
  train::Adam adam_;
};

// --- full training runs (logging, checkpoints, resume) -----------------------------

struct TrainRunOptions {
  TrainOptions base;
  int64_t steps = 2000;
  int64_t log_every = 10;
  int64_t checkpoint_every = 1000;
  std::string out_dir;         // empty disables log/checkpoint IO
  std::string resume_prefix;   // checkpoint prefix to start from
  bool quiet = true;
};

struct TrainRunResult {
  std::vector<StepLog> logs;
  std::string final_checkpoint;  // "<out>/ckpt_final" when out_dir set
};

TrainRunResult run_training(Pipeline& pipe, const std::vector<synth::Sample>& samples,
                            const TrainRunOptions& opts);

// Loads every manifest entry's pixel data into memory.
std::vector<synth::Sample> load_dataset(const std::string& root);

// --- sampling ----------------------------------------------------------------------

struct SampleOutput {
  VideoClip video;
  MaskClip mask;
  std::string response;      // interactive mode only
  std::string prompt_phrase; // extracted span text (empty when malformed)
  bool span_ok = false;
};

// Runs the reverse process from seeded noise, conditioned on the source clip
// and either a referring expression or an interactive request. The mask comes
// from the final denoising step's decoder features.
inline SampleOutput sample_video(Pipeline& pipe, const VideoClip& source,
                                 const std::optional<std::string>& expr,
                                 const std::optional<std::string>& request, uint64_t seed) {
  NoGradGuard ng;
  SampleOutput out;
  const int64_t T = source.frames;
  auto cx = constant(encode_clip_nchw(source, pipe.config.codec.f));

  Var<float> context;
  if (expr) {
    context = pipe.context_for_expression(*expr);
  } else if (request) {
    std::vector<int> prefix = {lang::Vocabulary::kBos};
    auto req = lang::tokenize(pipe.vocab, *request);
    prefix.insert(prefix.end(), req.begin(), req.end());
    auto resp = pipe.mllm.greedy_decode(source, prefix);
    out.response = lang::detokenize(pipe.vocab, resp);
    std::vector<int> full = prefix;
    full.insert(full.end(), resp.begin(), resp.end());
    auto h = pipe.mllm.forward(source, full);
    auto span_or = lang::find_prompt_span(resp);
    if (auto* span = std::get_if<lang::PromptSpan>(&span_or)) {
      int off = static_cast<int>(prefix.size());
      context = pipe.mllm.mm_head(slice(h.hidden, 0, off + span->begin, off + span->end));
      out.prompt_phrase = lang::detokenize(
          pipe.vocab, std::vector<int>(resp.begin() + span->begin, resp.begin() + span->end));
      out.span_ok = true;
    } else {
      // fall back to conditioning on all response hidden states
      context = pipe.mllm.mm_head(
          slice(h.hidden, 0, static_cast<int>(prefix.size()),
                static_cast<int64_t>(full.size())));
    }
  } else {
    throw std::invalid_argument("sample_video: need an expression or a request");
  }

  Tensor<float> last_mask_logits;
  ddpm::Denoiser<float> denoiser = [&](const Tensor<float>& x_t, int t) {
    auto fwd = pipe.net.forward(constant(x_t), cx, std::vector<int>{t}, context, T,
                                /*enable_temporal=*/true, /*with_mask=*/t == 1);
    if (t == 1) last_mask_logits = fwd.mask_logits->value;
    return fwd.eps->value;
  };

  Shape latent_shape = cx->value.shape;
  auto x0 = ddpm::sample(denoiser, latent_shape, pipe.sched, seed);

  codec::LatentClip<float> lat;
  lat.f = pipe.config.codec.f;
  lat.values = nchw_to_latent(x0);
  out.video = codec::denormalize_pixels(codec::decode_clamped(lat));

  out.mask = MaskClip(T, source.height, source.width);
  for (size_t i = 0; i < out.mask.data.size(); ++i)
    out.mask.data[i] = last_mask_logits.data[i] > 0.0f ? 1 : 0;  // sigmoid(x) > .5
  return out;
}

}  // namespace lgvi
