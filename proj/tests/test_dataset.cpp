#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lgvi/dataset.hpp"

using namespace lgvi;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("lgvi_data_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::pair<synth::Sample, synth::SceneSpec>> build_samples(int count) {
  synth::GeneratorConfig cfg;
  cfg.frames = 4;
  cfg.height = 32;
  cfg.width = 32;
  cfg.min_size = 3;
  cfg.max_size = 6;
  std::vector<std::pair<synth::Sample, synth::SceneSpec>> out;
  for (uint64_t seed = 0; static_cast<int>(out.size()) < count; ++seed) {
    auto scene = synth::generate_scene(seed, cfg);
    for (size_t i = 0; i < scene.objects.size() && static_cast<int>(out.size()) < count; ++i)
      if (auto s = synth::make_sample(scene, static_cast<int>(i), seed))
        out.emplace_back(*s, scene);
  }
  return out;
}
}  // namespace

TEST_CASE("png round trip is bit-exact for rendered frames") {
  TempDir tmp;
  auto pairs = build_samples(1);
  const auto& clip = pairs[0].first.source;

  auto img = data::frame_to_u8(clip, 0);
  auto path = (tmp.path / "frame.png").string();
  io::write_png(path, img);
  auto back = io::read_png(path);
  CHECK(back.height == img.height);
  CHECK(back.width == img.width);
  CHECK(back.channels == 3);
  CHECK(back.px == img.px);

  VideoClip rt(1, clip.height, clip.width);
  data::u8_to_frame(back, rt, 0);
  for (int64_t i = 0; i < clip.height * clip.width * 3; ++i)
    CHECK(rt.data[i] == clip.data[i]);  // values on the k/255 grid survive exactly
}

TEST_CASE("dataset write/read: pixels, masks, flow, manifest all survive") {
  TempDir tmp;
  auto pairs = build_samples(3);
  std::vector<data::ManifestEntry> entries;
  for (const auto& [sample, scene] : pairs) {
    data::write_sample(tmp.path.string(), sample);
    entries.push_back(data::manifest_entry(sample, scene));
  }
  data::write_manifest(tmp.path.string(), entries);

  auto read_back = data::read_manifest(tmp.path.string());
  REQUIRE(read_back.size() == pairs.size());
  for (size_t i = 0; i < read_back.size(); ++i) {
    const auto& e = read_back[i];
    const auto& orig = pairs[i].first;
    CHECK(e.id == orig.id);
    CHECK(e.referring_expr == orig.referring_expr);
    CHECK(e.dialog.response == orig.dialog.response);
    CHECK(e.dialog.prompt_phrase == orig.dialog.prompt_phrase);
    CHECK(e.d_used == orig.d_used);
    CHECK(e.dilation_sweep == std::vector<int>{0, 3, 5, 7, 10, 15});

    auto loaded = data::load_sample(tmp.path.string(), e);
    CHECK(loaded.source.data == orig.source.data);
    CHECK(loaded.target.data == orig.target.data);
    CHECK(loaded.mask.data == orig.mask.data);
    CHECK(loaded.flow.data == orig.flow.data);
  }
}

TEST_CASE("manifest is byte-identical across two writes (determinism)") {
  TempDir tmp;
  auto pairs = build_samples(2);
  std::vector<data::ManifestEntry> entries;
  for (const auto& [sample, scene] : pairs) entries.push_back(data::manifest_entry(sample, scene));

  data::write_manifest(tmp.path.string(), entries);
  std::ifstream f1(tmp.path / "manifest.jsonl");
  std::string first((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  data::write_manifest(tmp.path.string(), entries);
  std::ifstream f2(tmp.path / "manifest.jsonl");
  std::string second((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(first == second);
  CHECK(!first.empty());
}

TEST_CASE("flow sidecar describes the blob") {
  TempDir tmp;
  auto pairs = build_samples(1);
  data::write_sample(tmp.path.string(), pairs[0].first);
  auto dir = tmp.path / pairs[0].first.id;
  CHECK(fs::exists(dir / "flow.bin"));
  CHECK(fs::exists(dir / "flow.json"));
  CHECK(fs::file_size(dir / "flow.bin") ==
        pairs[0].first.flow.data.size() * sizeof(float));
}
