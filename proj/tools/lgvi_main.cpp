// Command-line entry point: dataset synthesis, training, sampling,
// evaluation, and gradient checks. Exit codes: 0 success, 1 validation
// error, 2 gradcheck/acceptance failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lgvi/dataset.hpp"
#include "lgvi/gradcheck.hpp"
#include "lgvi/metrics.hpp"
#include "lgvi/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lgvi;

namespace {

constexpr const char* kConfigEnv = "LGVI_CONFIG";

cfg::RunConfig load_base_config(const std::string& config_flag) {
  if (!config_flag.empty()) return cfg::load_config(config_flag);
  if (const char* env = std::getenv(kConfigEnv); env && *env) return cfg::load_config(env);
  return cfg::default_config();
}

bool dir_non_empty(const fs::path& p) {
  return fs::exists(p) && fs::is_directory(p) && fs::directory_iterator(p) != fs::directory_iterator();
}

// ---------------------------------------------------------------------------

int cmd_synth(const cfg::RunConfig& config, const std::string& out, bool force) {
  if (out.empty()) throw std::invalid_argument("synth: --out is required");
  if (dir_non_empty(out) && !force)
    throw std::invalid_argument("synth: output dir " + out + " is not empty (use --force)");
  fs::create_directories(out);

  auto gcfg = cfg::generator_config(config);
  std::vector<data::ManifestEntry> entries;
  int64_t accepted = 0, rejected = 0, scenes = 0;
  for (uint64_t scene_seed = config.generator.seed; accepted < config.generator.count;
       ++scene_seed) {
    auto scene = synth::generate_scene(scene_seed, gcfg);
    ++scenes;
    for (size_t i = 0; i < scene.objects.size() && accepted < config.generator.count; ++i) {
      auto sample = synth::make_sample(scene, static_cast<int>(i), scene_seed);
      if (!sample) {
        ++rejected;
        continue;
      }
      data::write_sample(out, *sample);
      entries.push_back(data::manifest_entry(*sample, scene));
      ++accepted;
    }
  }
  data::write_manifest(out, entries);
  cfg::write_config(config, (fs::path(out) / "config.json").string());
  std::printf("synth: %lld samples accepted, %lld rejected by the size filter, %lld scenes\n",
              static_cast<long long>(accepted), static_cast<long long>(rejected),
              static_cast<long long>(scenes));
  return 0;
}

int cmd_train(const cfg::RunConfig& config, const std::string& data_dir, const std::string& out,
              const std::string& resume) {
  if (data_dir.empty() || out.empty())
    throw std::invalid_argument("train: --data and --out are required");
  auto samples = load_dataset(data_dir);
  auto mode = train::mode_from_string(config.train.mode);
  if (mode == train::Mode::lgvi_i)
    for (const auto& s : samples)
      if (s.dialog.response.empty())
        throw std::invalid_argument("train: lgvi_i mode needs dialogs in the manifest");
  if (mode == train::Mode::lgvi_i && resume.empty())
    std::fprintf(stderr,
                 "train: warning: lgvi_i without --resume trains from scratch instead of "
                 "fine-tuning an lgvi checkpoint\n");

  Pipeline pipe(config, config.train.seed);
  TrainRunOptions opts;
  opts.base.mode = mode;
  opts.base.seed = config.train.seed;
  opts.base.video_batch = config.train.video_batch;
  opts.base.image_batch = config.train.image_batch;
  opts.base.video_fraction = config.train.video_fraction;
  opts.base.weights = {config.train.lambda1, config.train.lambda2, config.train.lambda3};
  opts.base.lr_unet = config.train.lr_unet;
  opts.base.lr_maskdec = config.train.lr_maskdec;
  opts.base.lr_lang = config.train.lr_lang;
  opts.steps = config.train.steps;
  opts.log_every = config.train.log_every;
  opts.checkpoint_every = config.train.checkpoint_every;
  opts.out_dir = out;
  opts.resume_prefix = resume;
  opts.quiet = false;

  fs::create_directories(out);
  cfg::write_config(config, (fs::path(out) / "config.json").string());
  auto result = run_training(pipe, samples, opts);
  std::printf("train: %lld steps done, final checkpoint %s\n",
              static_cast<long long>(opts.steps), result.final_checkpoint.c_str());
  return 0;
}

int cmd_sample(const cfg::RunConfig& config, const std::string& checkpoint,
               const std::string& input_dir, const std::string& expr,
               const std::string& dialog_file, uint64_t seed, const std::string& out) {
  if (checkpoint.empty() || input_dir.empty() || out.empty())
    throw std::invalid_argument("sample: --checkpoint, --input and --out are required");
  if (expr.empty() == dialog_file.empty())
    throw std::invalid_argument("sample: pass exactly one of --expr or --dialog");

  // conditioning flag must match the checkpoint's training mode
  std::ifstream mf(checkpoint + ".meta.json");
  if (mf) {
    json meta;
    mf >> meta;
    std::string mode = meta.value("mode", "lgvi");
    if (mode == "lgvi" && expr.empty())
      throw std::invalid_argument("sample: checkpoint was trained in lgvi mode; use --expr");
    if (mode == "lgvi_i" && dialog_file.empty())
      throw std::invalid_argument("sample: checkpoint was trained in lgvi_i mode; use --dialog");
  }

  Pipeline pipe(config, config.train.seed);
  pipe.load_checkpoint(checkpoint);

  auto source = data::load_clip_dir(input_dir);
  std::optional<std::string> expr_opt, request_opt;
  if (!expr.empty()) {
    expr_opt = expr;
  } else {
    std::ifstream f(dialog_file);
    if (!f) throw std::invalid_argument("sample: cannot open dialog file " + dialog_file);
    std::string request((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    while (!request.empty() && (request.back() == '\n' || request.back() == '\r'))
      request.pop_back();
    request_opt = request;
  }

  auto result = sample_video(pipe, source, expr_opt, request_opt, seed);
  data::write_clip_dir((fs::path(out) / "frames").string(), result.video);
  data::write_mask_dir((fs::path(out) / "mask").string(), result.mask);
  if (request_opt) {
    std::ofstream rf(fs::path(out) / "response.txt");
    rf << result.response << "\n";
    if (result.span_ok) rf << "prompt_phrase: " << result.prompt_phrase << "\n";
    std::printf("sample: response: %s\n", result.response.c_str());
    std::printf("sample: prompt span %s\n", result.span_ok ? "ok" : "malformed (fell back to full response)");
  }
  cfg::write_config(config, (fs::path(out) / "config.json").string());
  std::printf("sample: wrote %lld frames to %s\n", static_cast<long long>(result.video.frames),
              out.c_str());
  return 0;
}

int cmd_eval(const cfg::RunConfig& config, const std::string& checkpoint,
             const std::string& data_dir, const std::string& split, const std::string& pred,
             uint64_t seed, int64_t limit, const std::string& out) {
  if (data_dir.empty()) throw std::invalid_argument("eval: --data is required");
  if (pred == "model" && checkpoint.empty())
    throw std::invalid_argument("eval: --checkpoint is required when evaluating the model");

  auto entries = data::read_manifest(data_dir);
  auto in_split = [&](const data::ManifestEntry& e) {
    if (split == "all") return true;
    bool test = hash_str(e.id) % 5 == 0;  // deterministic 80/20
    return split == "test" ? test : !test;
  };

  std::optional<Pipeline> pipe;
  std::string mode = "lgvi";
  if (pred == "model") {
    pipe.emplace(config, config.train.seed);
    pipe->load_checkpoint(checkpoint);
    std::ifstream mf(checkpoint + ".meta.json");
    if (mf) {
      json meta;
      mf >> meta;
      mode = meta.value("mode", "lgvi");
    }
  }

  std::vector<VideoClip> preds, targets;
  double psnr_sum = 0, ssim_sum = 0, ewarp_sum = 0;
  json per_sample = json::array();
  int64_t n = 0;
  for (const auto& e : entries) {
    if (!in_split(e)) continue;
    if (limit > 0 && n >= limit) break;
    auto sample = data::load_sample(data_dir, e);
    VideoClip predicted;
    if (pred == "source") {
      predicted = sample.source;
    } else if (pred == "target") {
      predicted = sample.target;
    } else {
      std::optional<std::string> expr_opt, request_opt;
      if (mode == "lgvi")
        expr_opt = sample.referring_expr;
      else
        request_opt = sample.dialog.request;
      predicted = sample_video(*pipe, sample.source, expr_opt, request_opt,
                               hash_mix(seed, hash_str(e.id)))
                      .video;
    }
    double p = metrics::psnr(predicted, sample.target);
    double s = metrics::ssim(predicted, sample.target);
    double w = metrics::e_warp(predicted, sample.flow);
    psnr_sum += p;
    ssim_sum += s;
    ewarp_sum += w;
    preds.push_back(predicted);
    targets.push_back(sample.target);
    per_sample.push_back({{"id", e.id}, {"psnr", p}, {"ssim", s}, {"e_warp", w}});
    ++n;
  }
  if (n == 0) throw std::invalid_argument("eval: no samples selected");
  double vfid_v = preds.size() >= 2 ? metrics::vfid(preds, targets) : 0.0;

  metrics::MetricReport report;
  report.psnr = psnr_sum / n;
  report.ssim = ssim_sum / n;
  report.vfid = vfid_v;
  report.e_warp = ewarp_sum / n;

  // table in the conventional column order; E*_warp is E_warp x 1e-2
  std::printf("%-10s %8s %8s %8s %10s\n", "pred", "PSNR^", "SSIM^", "VFID_v", "E*_warp_v");
  std::printf("%-10s %8.3f %8.4f %8.4f %10.4f\n", pred.c_str(), report.psnr, report.ssim,
              report.vfid, report.e_warp * 100.0);

  if (!out.empty()) {
    fs::create_directories(out);
    json j{{"pred", pred},
           {"split", split},
           {"count", n},
           {"aggregate",
            {{"psnr", report.psnr},
             {"ssim", report.ssim},
             {"vfid", report.vfid},
             {"e_warp", report.e_warp},
             {"e_warp_x100", report.e_warp * 100.0}}},
           {"samples", per_sample}};
    std::ofstream f(fs::path(out) / "eval_report.json");
    f << j.dump(2) << "\n";
    cfg::write_config(config, (fs::path(out) / "config.json").string());
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed, bool corrupt) {
  auto results = train::run_grad_checks(seed, 1e-4, corrupt ? 1.01 : 1.0);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-20s max_rel_err %.3e (%s)  %s\n", r.module.c_str(), r.max_rel_error,
                r.worst_param.c_str(), r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  set_blas_threads(1);
  CLI::App app{"language-driven video inpainting at desk scale"};
  app.require_subcommand(1);
  app.fallthrough();  // allow --config after the subcommand name

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON config (default: $" + std::string(kConfigEnv) + " or built-ins)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  bool synth_force = false;
  int64_t synth_count = -1;
  int64_t synth_seed = -1;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_flag("--force", synth_force, "overwrite a non-empty output directory");
  synth->add_option("--count", synth_count, "number of accepted samples (overrides config)");
  synth->add_option("--seed", synth_seed, "generator seed (overrides config)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train lgvi or lgvi_i");
  std::string train_data, train_out, train_resume, train_mode;
  int64_t train_steps = -1;
  int64_t train_seed = -1;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "run directory for logs and checkpoints")->required();
  train_cmd->add_option("--mode", train_mode, "lgvi | lgvi_i (overrides config)");
  train_cmd->add_option("--resume", train_resume, "checkpoint prefix to resume / fine-tune from");
  train_cmd->add_option("--steps", train_steps, "training steps (overrides config)");
  train_cmd->add_option("--seed", train_seed, "training seed (overrides config)");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "sample an inpainted clip");
  std::string s_ckpt, s_input, s_expr, s_dialog, s_out;
  uint64_t s_seed = 0;
  sample_cmd->add_option("--checkpoint", s_ckpt, "checkpoint prefix")->required();
  sample_cmd->add_option("--input", s_input, "directory of source PNG frames")->required();
  sample_cmd->add_option("--expr", s_expr, "referring expression (lgvi mode)");
  sample_cmd->add_option("--dialog", s_dialog, "file holding the user request (lgvi_i mode)");
  sample_cmd->add_option("--seed", s_seed, "sampling seed");
  sample_cmd->add_option("--out", s_out, "output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate against dataset targets");
  std::string e_ckpt, e_data, e_split = "all", e_pred = "model", e_out;
  uint64_t e_seed = 0;
  int64_t e_limit = 0;
  eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint prefix");
  eval_cmd->add_option("--data", e_data, "dataset directory")->required();
  eval_cmd->add_option("--split", e_split, "all | train | test")
      ->check(CLI::IsMember({"all", "train", "test"}));
  eval_cmd->add_option("--pred", e_pred, "model | source | target (baselines need no checkpoint)")
      ->check(CLI::IsMember({"model", "source", "target"}));
  eval_cmd->add_option("--seed", e_seed, "sampling seed");
  eval_cmd->add_option("--limit", e_limit, "evaluate at most N samples (0 = all)");
  eval_cmd->add_option("--out", e_out, "directory for the JSON report");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  uint64_t gc_seed = 2024;
  bool gc_corrupt = false;
  gc->add_option("--seed", gc_seed, "seed for the checked points");
  gc->add_flag("--selftest-corrupt", gc_corrupt,
               "corrupt analytic gradients to prove the harness detects them");

  CLI11_PARSE(app, argc, argv);

  try {
    auto config = load_base_config(config_path);
    if (*synth) {
      if (synth_count >= 0) config.generator.count = synth_count;
      if (synth_seed >= 0) config.generator.seed = static_cast<uint64_t>(synth_seed);
      return cmd_synth(config, synth_out, synth_force);
    }
    if (*train_cmd) {
      if (!train_mode.empty()) config.train.mode = train_mode;
      (void)train::mode_from_string(config.train.mode);
      if (train_steps >= 0) config.train.steps = train_steps;
      if (train_seed >= 0) config.train.seed = static_cast<uint64_t>(train_seed);
      return cmd_train(config, train_data, train_out, train_resume);
    }
    if (*sample_cmd) return cmd_sample(config, s_ckpt, s_input, s_expr, s_dialog, s_seed, s_out);
    if (*eval_cmd)
      return cmd_eval(config, e_ckpt, e_data, e_split, e_pred, e_seed, e_limit, e_out);
    if (*gc) return cmd_gradcheck(gc_seed, gc_corrupt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
