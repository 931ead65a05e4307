#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgvi/ddpm.hpp"
#include "lgvi/langmod.hpp"
#include "lgvi/synthgen.hpp"
#include "lgvi/unet.hpp"

namespace lgvi::cfg {

// Run configuration: one JSON document with per-module sections. Unknown keys
// are rejected, every field has a default, and the effective (defaults-merged)
// document is written next to command outputs so any run can be replayed.

struct GeneratorSection {
  uint64_t seed = 0;
  int64_t count = 64;
  int64_t frames = 8, height = 64, width = 64;
  int min_objects = 1, max_objects = 4;
  double min_size = 4.0, max_size = 9.0, max_speed = 2.0;
};

struct CodecSection {
  int f = 4;
};

struct ScheduleSection {
  int steps = ddpm::kDefaultSteps;
  double beta_start = ddpm::kDefaultBetaStart;
  double beta_end = ddpm::kDefaultBetaEnd;
};

struct ModelSection {
  int64_t base_channels = 32;
  std::vector<int> channel_mult = {1, 2};
  int64_t num_heads = 2;
  int64_t context_dim = 128;
  int64_t time_embed_dim = 128;
  int64_t norm_groups = 8;
  int64_t ffn_mult = 2;
  int64_t mask_decoder_width = 32;
};

struct LanguageSection {
  int64_t d_lm = 128;
  int64_t layers = 2;
  int64_t heads = 4;
  int64_t ffn_mult = 2;
  int64_t max_text_len = 96;
  int64_t img_tokens = 16;
};

struct TrainSection {
  std::string mode = "lgvi";  // lgvi | lgvi_i
  int64_t steps = 2000;
  int video_batch = 1;
  int image_batch = 4;
  double lr_unet = 3e-5;
  double lr_maskdec = 1e-4;
  double lr_lang = 1e-4;
  uint64_t seed = 0;
  double video_fraction = 0.75;  // 3:1 video:image mix
  double lambda1 = 1.0, lambda2 = 0.001, lambda3 = 0.1;
  int64_t log_every = 10;
  int64_t checkpoint_every = 1000;
};

struct EvalSection {
  bool psnr = true, ssim = true, vfid = true, e_warp = true;
};

struct PathsSection {
  std::string data, out, checkpoint;
};

struct RunConfig {
  GeneratorSection generator;
  CodecSection codec;
  ScheduleSection schedule;
  ModelSection model;
  LanguageSection language;
  TrainSection train;
  EvalSection eval;
  PathsSection paths;
};

RunConfig default_config();
RunConfig parse_config(const std::string& json_text, const std::string& origin);
RunConfig load_config(const std::string& path);
std::string to_json(const RunConfig& c);
void write_config(const RunConfig& c, const std::string& path);

// Projections into the module configs.
synth::GeneratorConfig generator_config(const RunConfig& c);
ddpm::NoiseSchedule schedule(const RunConfig& c);
unet::UNetConfig unet_config(const RunConfig& c);
lang::LangConfig lang_config(const RunConfig& c);

}  // namespace lgvi::cfg
