#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lgvi::io {

struct ImageU8 {
  int64_t height = 0, width = 0, channels = 0;  // channels 1 or 3
  std::vector<uint8_t> px;                      // row-major, interleaved
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace lgvi::io
