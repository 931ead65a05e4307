#include "lgvi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lgvi::data {

namespace {

std::string frame_name(const char* stem, int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d.png", static_cast<int>(t));
  return std::string(stem) + "/" + buf;
}

void write_flow(const fs::path& dir, const FlowField& flow) {
  {
    std::ofstream f(dir / "flow.bin", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / "flow.bin").string());
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(flow.data.data()),
            static_cast<std::streamsize>(flow.data.size() * sizeof(float)));
  }
  json j;
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["shape"] = {flow.frames, flow.height, flow.width, 2};
  std::ofstream f(dir / "flow.json");
  f << j.dump(2) << "\n";
}

FlowField read_flow(const fs::path& dir) {
  json j;
  {
    std::ifstream f(dir / "flow.json");
    if (!f) throw std::runtime_error("missing flow sidecar in " + dir.string());
    f >> j;
  }
  auto shape = j.at("shape").get<std::vector<int64_t>>();
  if (shape.size() != 4 || shape[3] != 2 || j.at("dtype") != "float32")
    throw std::runtime_error("bad flow descriptor in " + dir.string());
  FlowField flow(shape[0], shape[1], shape[2]);
  std::ifstream f(dir / "flow.bin", std::ios::binary);
  f.read(reinterpret_cast<char*>(flow.data.data()),
         static_cast<std::streamsize>(flow.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("truncated flow blob in " + dir.string());
  return flow;
}

json dialog_to_json(const synth::DialogRecord& d) {
  return json{{"description", d.description},
              {"request", d.request},
              {"response", d.response},
              {"prompt_phrase", d.prompt_phrase}};
}

synth::DialogRecord dialog_from_json(const json& j) {
  synth::DialogRecord d;
  d.description = j.at("description").get<std::string>();
  d.request = j.at("request").get<std::string>();
  d.response = j.at("response").get<std::string>();
  d.prompt_phrase = j.at("prompt_phrase").get<std::string>();
  return d;
}

}  // namespace

io::ImageU8 frame_to_u8(const VideoClip& clip, int64_t t) {
  io::ImageU8 img;
  img.height = clip.height;
  img.width = clip.width;
  img.channels = 3;
  img.px.resize(static_cast<size_t>(clip.height * clip.width * 3));
  for (int64_t i = 0; i < clip.height * clip.width * 3; ++i) {
    float v = clip.data[t * clip.height * clip.width * 3 + i];
    img.px[i] = static_cast<uint8_t>(std::lround(std::fmin(std::fmax(v, 0.0f), 1.0f) * 255.0f));
  }
  return img;
}

void u8_to_frame(const io::ImageU8& img, VideoClip& clip, int64_t t) {
  if (img.height != clip.height || img.width != clip.width || img.channels != 3)
    throw std::invalid_argument("u8_to_frame: dims");
  for (int64_t i = 0; i < clip.height * clip.width * 3; ++i)
    clip.data[t * clip.height * clip.width * 3 + i] = img.px[i] / 255.0f;
}

void write_sample(const std::string& root, const synth::Sample& s) {
  fs::path dir = fs::path(root) / s.id;
  fs::create_directories(dir / "source");
  fs::create_directories(dir / "target");
  fs::create_directories(dir / "mask");
  for (int64_t t = 0; t < s.source.frames; ++t) {
    io::write_png((dir / frame_name("source", t)).string(), frame_to_u8(s.source, t));
    io::write_png((dir / frame_name("target", t)).string(), frame_to_u8(s.target, t));
    io::ImageU8 m;
    m.height = s.mask.height;
    m.width = s.mask.width;
    m.channels = 1;
    m.px.resize(static_cast<size_t>(m.height * m.width));
    for (int64_t i = 0; i < m.height * m.width; ++i)
      m.px[i] = s.mask.data[t * m.height * m.width + i] ? 255 : 0;
    io::write_png((dir / frame_name("mask", t)).string(), m);
  }
  write_flow(dir, s.flow);
}

ManifestEntry manifest_entry(const synth::Sample& s, const synth::SceneSpec& scene) {
  ManifestEntry e;
  e.id = s.id;
  e.dir = s.id;
  e.frames = s.source.frames;
  e.height = s.source.height;
  e.width = s.source.width;
  e.referring_expr = s.referring_expr;
  e.dialog = s.dialog;
  e.object_index = s.object_index;
  const auto& obj = scene.objects.at(static_cast<size_t>(s.object_index));
  e.shape = synth::shape_name(obj.shape);
  e.color = obj.color_name;
  e.size = obj.size;
  e.vx = obj.vx;
  e.vy = obj.vy;
  e.d_used = s.d_used;
  e.dilation_sweep = synth::dilation_sweep();
  return e;
}

void write_manifest(const std::string& root, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(fs::path(root) / "manifest.jsonl");
  if (!f) throw std::runtime_error("cannot write manifest in " + root);
  for (const auto& e : entries) {
    json j{{"id", e.id},
           {"dir", e.dir},
           {"frames", e.frames},
           {"height", e.height},
           {"width", e.width},
           {"referring_expr", e.referring_expr},
           {"dialog", dialog_to_json(e.dialog)},
           {"object",
            {{"index", e.object_index},
             {"shape", e.shape},
             {"color", e.color},
             {"size", e.size},
             {"velocity", {e.vx, e.vy}}}},
           {"d_used", e.d_used},
           {"dilation_sweep", e.dilation_sweep}};
    f << j.dump() << "\n";
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& root) {
  std::ifstream f(fs::path(root) / "manifest.jsonl");
  if (!f) throw std::runtime_error("no manifest.jsonl under " + root);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.dir = j.at("dir").get<std::string>();
    e.frames = j.at("frames").get<int64_t>();
    e.height = j.at("height").get<int64_t>();
    e.width = j.at("width").get<int64_t>();
    e.referring_expr = j.at("referring_expr").get<std::string>();
    e.dialog = dialog_from_json(j.at("dialog"));
    const auto& obj = j.at("object");
    e.object_index = obj.at("index").get<int>();
    e.shape = obj.at("shape").get<std::string>();
    e.color = obj.at("color").get<std::string>();
    e.size = obj.at("size").get<double>();
    e.vx = obj.at("velocity")[0].get<double>();
    e.vy = obj.at("velocity")[1].get<double>();
    e.d_used = j.at("d_used").get<int>();
    e.dilation_sweep = j.at("dilation_sweep").get<std::vector<int>>();
    out.push_back(std::move(e));
  }
  return out;
}

VideoClip load_clip_dir(const std::string& dir) {
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".png") frames.push_back(entry.path());
  if (frames.empty()) throw std::runtime_error("no PNG frames under " + dir);
  std::sort(frames.begin(), frames.end());
  auto first = io::read_png(frames[0].string());
  VideoClip clip(static_cast<int64_t>(frames.size()), first.height, first.width);
  for (size_t t = 0; t < frames.size(); ++t) {
    auto img = io::read_png(frames[t].string());
    u8_to_frame(img, clip, static_cast<int64_t>(t));
  }
  return clip;
}

void write_clip_dir(const std::string& dir, const VideoClip& clip) {
  fs::create_directories(dir);
  for (int64_t t = 0; t < clip.frames; ++t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d.png", static_cast<int>(t));
    io::write_png((fs::path(dir) / buf).string(), frame_to_u8(clip, t));
  }
}

void write_mask_dir(const std::string& dir, const MaskClip& mask) {
  fs::create_directories(dir);
  for (int64_t t = 0; t < mask.frames; ++t) {
    io::ImageU8 img;
    img.height = mask.height;
    img.width = mask.width;
    img.channels = 1;
    img.px.resize(static_cast<size_t>(mask.height * mask.width));
    for (int64_t i = 0; i < mask.height * mask.width; ++i)
      img.px[i] = mask.data[t * mask.height * mask.width + i] ? 255 : 0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d.png", static_cast<int>(t));
    io::write_png((fs::path(dir) / buf).string(), img);
  }
}

synth::Sample load_sample(const std::string& root, const ManifestEntry& e) {
  synth::Sample s;
  s.id = e.id;
  s.referring_expr = e.referring_expr;
  s.dialog = e.dialog;
  s.object_index = e.object_index;
  s.d_used = e.d_used;
  s.source = VideoClip(e.frames, e.height, e.width);
  s.target = VideoClip(e.frames, e.height, e.width);
  s.mask = MaskClip(e.frames, e.height, e.width);
  fs::path dir = fs::path(root) / e.dir;
  for (int64_t t = 0; t < e.frames; ++t) {
    u8_to_frame(io::read_png((dir / frame_name("source", t)).string()), s.source, t);
    u8_to_frame(io::read_png((dir / frame_name("target", t)).string()), s.target, t);
    io::ImageU8 m = io::read_png((dir / frame_name("mask", t)).string());
    if (m.height != e.height || m.width != e.width || m.channels != 1)
      throw std::runtime_error("bad mask frame in " + dir.string());
    for (int64_t i = 0; i < e.height * e.width; ++i)
      s.mask.data[t * e.height * e.width + i] = m.px[i] >= 128 ? 1 : 0;
  }
  s.flow = read_flow(dir);
  return s;
}

}  // namespace lgvi::data
