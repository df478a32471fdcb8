#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adnet::io {

// 8-bit interleaved image, channels = 1 (gray) or 3 (RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

// PNG or JPEG by content sniffing; JPEG decodes to RGB only.
ImageU8 read_image(const std::string& path);

}  // namespace adnet::io
