#include "lgvi/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace lgvi::cfg {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::invalid_argument("config: unknown key '" + where + it.key() + "'");
}

template <class T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: parse error in " + origin + ": " + e.what());
  }
  RunConfig c;
  reject_unknown(j, {"generator", "codec", "schedule", "model", "language", "train", "eval",
                     "paths"},
                 "");
  if (j.contains("generator")) {
    const auto& g = j["generator"];
    reject_unknown(g, {"seed", "count", "frames", "height", "width", "min_objects",
                       "max_objects", "min_size", "max_size", "max_speed"},
                   "generator.");
    get(g, "seed", c.generator.seed);
    get(g, "count", c.generator.count);
    get(g, "frames", c.generator.frames);
    get(g, "height", c.generator.height);
    get(g, "width", c.generator.width);
    get(g, "min_objects", c.generator.min_objects);
    get(g, "max_objects", c.generator.max_objects);
    get(g, "min_size", c.generator.min_size);
    get(g, "max_size", c.generator.max_size);
    get(g, "max_speed", c.generator.max_speed);
  }
  if (j.contains("codec")) {
    reject_unknown(j["codec"], {"f"}, "codec.");
    get(j["codec"], "f", c.codec.f);
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    reject_unknown(s, {"steps", "beta_start", "beta_end"}, "schedule.");
    get(s, "steps", c.schedule.steps);
    get(s, "beta_start", c.schedule.beta_start);
    get(s, "beta_end", c.schedule.beta_end);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"base_channels", "channel_mult", "num_heads", "context_dim",
                       "time_embed_dim", "norm_groups", "ffn_mult", "mask_decoder_width"},
                   "model.");
    get(m, "base_channels", c.model.base_channels);
    get(m, "channel_mult", c.model.channel_mult);
    get(m, "num_heads", c.model.num_heads);
    get(m, "context_dim", c.model.context_dim);
    get(m, "time_embed_dim", c.model.time_embed_dim);
    get(m, "norm_groups", c.model.norm_groups);
    get(m, "ffn_mult", c.model.ffn_mult);
    get(m, "mask_decoder_width", c.model.mask_decoder_width);
  }
  if (j.contains("language")) {
    const auto& l = j["language"];
    reject_unknown(l, {"d_lm", "layers", "heads", "ffn_mult", "max_text_len", "img_tokens"},
                   "language.");
    get(l, "d_lm", c.language.d_lm);
    get(l, "layers", c.language.layers);
    get(l, "heads", c.language.heads);
    get(l, "ffn_mult", c.language.ffn_mult);
    get(l, "max_text_len", c.language.max_text_len);
    get(l, "img_tokens", c.language.img_tokens);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, {"mode", "steps", "video_batch", "image_batch", "lr_unet", "lr_maskdec",
                       "lr_lang", "seed", "video_fraction", "lambda1", "lambda2", "lambda3",
                       "log_every", "checkpoint_every"},
                   "train.");
    get(t, "mode", c.train.mode);
    get(t, "steps", c.train.steps);
    get(t, "video_batch", c.train.video_batch);
    get(t, "image_batch", c.train.image_batch);
    get(t, "lr_unet", c.train.lr_unet);
    get(t, "lr_maskdec", c.train.lr_maskdec);
    get(t, "lr_lang", c.train.lr_lang);
    get(t, "seed", c.train.seed);
    get(t, "video_fraction", c.train.video_fraction);
    get(t, "lambda1", c.train.lambda1);
    get(t, "lambda2", c.train.lambda2);
    get(t, "lambda3", c.train.lambda3);
    get(t, "log_every", c.train.log_every);
    get(t, "checkpoint_every", c.train.checkpoint_every);
    if (c.train.mode != "lgvi" && c.train.mode != "lgvi_i")
      throw std::invalid_argument("config: train.mode must be 'lgvi' or 'lgvi_i'");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    reject_unknown(e, {"psnr", "ssim", "vfid", "e_warp"}, "eval.");
    get(e, "psnr", c.eval.psnr);
    get(e, "ssim", c.eval.ssim);
    get(e, "vfid", c.eval.vfid);
    get(e, "e_warp", c.eval.e_warp);
  }
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    reject_unknown(p, {"data", "out", "checkpoint"}, "paths.");
    get(p, "data", c.paths.data);
    get(p, "out", c.paths.out);
    get(p, "checkpoint", c.paths.checkpoint);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config(text, path);
}

std::string to_json(const RunConfig& c) {
  json j;
  j["generator"] = {{"seed", c.generator.seed},
                    {"count", c.generator.count},
                    {"frames", c.generator.frames},
                    {"height", c.generator.height},
                    {"width", c.generator.width},
                    {"min_objects", c.generator.min_objects},
                    {"max_objects", c.generator.max_objects},
                    {"min_size", c.generator.min_size},
                    {"max_size", c.generator.max_size},
                    {"max_speed", c.generator.max_speed}};
  j["codec"] = {{"f", c.codec.f}};
  j["schedule"] = {{"steps", c.schedule.steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end}};
  j["model"] = {{"base_channels", c.model.base_channels},
                {"channel_mult", c.model.channel_mult},
                {"num_heads", c.model.num_heads},
                {"context_dim", c.model.context_dim},
                {"time_embed_dim", c.model.time_embed_dim},
                {"norm_groups", c.model.norm_groups},
                {"ffn_mult", c.model.ffn_mult},
                {"mask_decoder_width", c.model.mask_decoder_width}};
  j["language"] = {{"d_lm", c.language.d_lm},
                   {"layers", c.language.layers},
                   {"heads", c.language.heads},
                   {"ffn_mult", c.language.ffn_mult},
                   {"max_text_len", c.language.max_text_len},
                   {"img_tokens", c.language.img_tokens}};
  j["train"] = {{"mode", c.train.mode},
                {"steps", c.train.steps},
                {"video_batch", c.train.video_batch},
                {"image_batch", c.train.image_batch},
                {"lr_unet", c.train.lr_unet},
                {"lr_maskdec", c.train.lr_maskdec},
                {"lr_lang", c.train.lr_lang},
                {"seed", c.train.seed},
                {"video_fraction", c.train.video_fraction},
                {"lambda1", c.train.lambda1},
                {"lambda2", c.train.lambda2},
                {"lambda3", c.train.lambda3},
                {"log_every", c.train.log_every},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["eval"] = {{"psnr", c.eval.psnr},
               {"ssim", c.eval.ssim},
               {"vfid", c.eval.vfid},
               {"e_warp", c.eval.e_warp}};
  j["paths"] = {{"data", c.paths.data}, {"out", c.paths.out}, {"checkpoint", c.paths.checkpoint}};
  return j.dump(2);
}

void write_config(const RunConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  f << to_json(c) << "\n";
}

synth::GeneratorConfig generator_config(const RunConfig& c) {
  synth::GeneratorConfig g;
  g.frames = c.generator.frames;
  g.height = c.generator.height;
  g.width = c.generator.width;
  g.min_objects = c.generator.min_objects;
  g.max_objects = c.generator.max_objects;
  g.min_size = c.generator.min_size;
  g.max_size = c.generator.max_size;
  g.max_speed = c.generator.max_speed;
  return g;
}

ddpm::NoiseSchedule schedule(const RunConfig& c) {
  return ddpm::make_schedule(c.schedule.steps, c.schedule.beta_start, c.schedule.beta_end);
}

unet::UNetConfig unet_config(const RunConfig& c) {
  unet::UNetConfig u;
  u.base_channels = c.model.base_channels;
  u.channel_mult = c.model.channel_mult;
  u.num_heads = c.model.num_heads;
  u.context_dim = c.model.context_dim;
  u.latent_channels = 3 * static_cast<int64_t>(c.codec.f) * c.codec.f;
  u.frames = c.generator.frames;
  u.time_embed_dim = c.model.time_embed_dim;
  u.norm_groups = c.model.norm_groups;
  u.ffn_mult = c.model.ffn_mult;
  u.pixel_scale = c.codec.f;
  u.mask_decoder_width = c.model.mask_decoder_width;
  return u;
}

lang::LangConfig lang_config(const RunConfig& c) {
  lang::LangConfig l;
  l.d_lm = c.language.d_lm;
  l.layers = c.language.layers;
  l.heads = c.language.heads;
  l.ffn_mult = c.language.ffn_mult;
  l.max_text_len = c.language.max_text_len;
  l.img_tokens = c.language.img_tokens;
  l.context_dim = c.model.context_dim;
  l.image_size = c.generator.height;
  return l;
}

}  // namespace lgvi::cfg
