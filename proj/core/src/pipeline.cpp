#include "lgvi/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "lgvi/dataset.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace lgvi {

namespace {

const char* mode_name(train::Mode m) { return m == train::Mode::lgvi ? "lgvi" : "lgvi_i"; }

void write_meta(const std::string& prefix, int64_t step, train::Mode mode) {
  json j{{"step", step}, {"mode", mode_name(mode)}};
  std::ofstream f(prefix + ".meta.json");
  f << j.dump(2) << "\n";
}

struct Meta {
  int64_t step = 0;
  std::string mode;
};

std::optional<Meta> read_meta(const std::string& prefix) {
  std::ifstream f(prefix + ".meta.json");
  if (!f) return std::nullopt;
  json j;
  f >> j;
  return Meta{j.at("step").get<int64_t>(), j.at("mode").get<std::string>()};
}

}  // namespace

TrainRunResult run_training(Pipeline& pipe, const std::vector<synth::Sample>& samples,
                            const TrainRunOptions& opts) {
  Trainer trainer(pipe, samples, opts.base);
  int64_t start_step = 0;

  if (!opts.resume_prefix.empty()) {
    pipe.load_checkpoint(opts.resume_prefix, /*strict=*/true);
    auto meta = read_meta(opts.resume_prefix);
    // Same-mode resume continues the interrupted run (optimizer state and
    // step counter restored); cross-mode resume is a fine-tune from step 0.
    if (meta && meta->mode == mode_name(opts.base.mode) &&
        ckpt::exists(opts.resume_prefix + ".opt")) {
      trainer.optimizer().load(opts.resume_prefix + ".opt");
      start_step = meta->step;
    }
  }

  std::ofstream log_file;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    log_file.open(fs::path(opts.out_dir) / "train_log.jsonl", std::ios::app);
  }

  auto save_all = [&](const std::string& prefix, int64_t step) {
    pipe.save_checkpoint(prefix);
    trainer.optimizer().save(prefix + ".opt");
    write_meta(prefix, step, opts.base.mode);
  };

  TrainRunResult result;
  auto t0 = std::chrono::steady_clock::now();
  for (int64_t step = start_step; step < opts.steps; ++step) {
    auto log = trainer.train_step(step);
    result.logs.push_back(log);

    if (log_file.is_open() && (step % opts.log_every == 0 || step + 1 == opts.steps)) {
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      json j{{"step", log.step},       {"kind", log.video ? "video" : "image"},
             {"total", log.total},     {"diff", log.diff},
             {"mask", log.mask},       {"lm", log.lm},
             {"lambda1", opts.base.weights.lambda1},
             {"lambda2", opts.base.weights.lambda2},
             {"lambda3", opts.base.weights.lambda3},
             {"wall_ms", ms}};
      log_file << j.dump() << "\n";
      log_file.flush();
    }
    if (!opts.quiet && step % 100 == 0)
      std::fprintf(stderr, "step %lld total %.5f diff %.5f mask %.5f lm %.5f\n",
                   static_cast<long long>(step), log.total, log.diff, log.mask, log.lm);

    if (!opts.out_dir.empty() && opts.checkpoint_every > 0 && step > start_step &&
        step % opts.checkpoint_every == 0)
      save_all((fs::path(opts.out_dir) / ("ckpt_" + std::to_string(step))).string(), step);
  }

  if (!opts.out_dir.empty()) {
    result.final_checkpoint = (fs::path(opts.out_dir) / "ckpt_final").string();
    save_all(result.final_checkpoint, opts.steps);
  }
  return result;
}

std::vector<synth::Sample> load_dataset(const std::string& root) {
  std::vector<synth::Sample> out;
  for (const auto& entry : data::read_manifest(root))
    out.push_back(data::load_sample(root, entry));
  return out;
}

}  // namespace lgvi
