#pragma once

#include <string>
#include <vector>

#include "lgvi/image_io.hpp"
#include "lgvi/synthgen.hpp"

namespace lgvi::data {

// Dataset layout:
//   <root>/manifest.jsonl                 one JSON object per sample
//   <root>/<id>/source/%04d.png           RGB frames
//   <root>/<id>/target/%04d.png
//   <root>/<id>/mask/%04d.png             grayscale 0/255
//   <root>/<id>/flow.bin                  raw little-endian f32 [T-1,H,W,2]
//   <root>/<id>/flow.json                 shape descriptor sidecar

struct ManifestEntry {
  std::string id;
  std::string dir;  // relative to root
  int64_t frames = 0, height = 0, width = 0;
  std::string referring_expr;
  synth::DialogRecord dialog;
  int object_index = 0;
  std::string shape, color;
  double size = 0, vx = 0, vy = 0;
  int d_used = 0;
  std::vector<int> dilation_sweep;
};

void write_sample(const std::string& root, const synth::Sample& sample);
ManifestEntry manifest_entry(const synth::Sample& sample, const synth::SceneSpec& scene);

void write_manifest(const std::string& root, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& root);

// Loads pixel data for one manifest entry back into a Sample (dialog and
// metadata come from the manifest).
synth::Sample load_sample(const std::string& root, const ManifestEntry& entry);

// VideoClip <-> 8-bit helpers; exact on the k/255 grid.
io::ImageU8 frame_to_u8(const VideoClip& clip, int64_t t);
void u8_to_frame(const io::ImageU8& img, VideoClip& clip, int64_t t);

// Directory-of-frames IO used by the CLI: numbered PNGs, sorted by name.
VideoClip load_clip_dir(const std::string& dir);
void write_clip_dir(const std::string& dir, const VideoClip& clip);
void write_mask_dir(const std::string& dir, const MaskClip& mask);

}  // namespace lgvi::data
