#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace lgvi {

// Pixel video clip, layout [T, H, W, 3], values in [0, 1]. The synthetic
// renderer only emits values on the k/255 grid, so PNG round trips are
// bit-exact.
struct VideoClip {
  int64_t frames = 0, height = 0, width = 0;
  std::vector<float> data;

  VideoClip() = default;
  VideoClip(int64_t t, int64_t h, int64_t w)
      : frames(t), height(h), width(w), data(static_cast<size_t>(t * h * w * 3), 0.0f) {}

  int64_t numel() const { return frames * height * width * 3; }
  float& at(int64_t t, int64_t y, int64_t x, int64_t c) {
    return data[((t * height + y) * width + x) * 3 + c];
  }
  float at(int64_t t, int64_t y, int64_t x, int64_t c) const {
    return data[((t * height + y) * width + x) * 3 + c];
  }
  bool same_dims(const VideoClip& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
};

// Binary mask clip [T, H, W], values in {0, 1}.
struct MaskClip {
  int64_t frames = 0, height = 0, width = 0;
  std::vector<uint8_t> data;

  MaskClip() = default;
  MaskClip(int64_t t, int64_t h, int64_t w)
      : frames(t), height(h), width(w), data(static_cast<size_t>(t * h * w), 0) {}

  uint8_t& at(int64_t t, int64_t y, int64_t x) { return data[(t * height + y) * width + x]; }
  uint8_t at(int64_t t, int64_t y, int64_t x) const {
    return data[(t * height + y) * width + x];
  }
  int64_t area(int64_t t) const {
    int64_t n = 0;
    for (int64_t i = t * height * width; i < (t + 1) * height * width; ++i) n += data[i];
    return n;
  }
  int64_t total_area() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
  }
};

// Dense pixel displacements frame t -> t+1, layout [T-1, H, W, 2] as (dx, dy).
struct FlowField {
  int64_t frames = 0, height = 0, width = 0;  // frames counts the T-1 flow maps
  std::vector<float> data;

  FlowField() = default;
  FlowField(int64_t t_minus_1, int64_t h, int64_t w)
      : frames(t_minus_1), height(h), width(w),
        data(static_cast<size_t>(t_minus_1 * h * w * 2), 0.0f) {}

  float& at(int64_t t, int64_t y, int64_t x, int64_t c) {
    return data[((t * height + y) * width + x) * 2 + c];
  }
  float at(int64_t t, int64_t y, int64_t x, int64_t c) const {
    return data[((t * height + y) * width + x) * 2 + c];
  }
};

}  // namespace lgvi
