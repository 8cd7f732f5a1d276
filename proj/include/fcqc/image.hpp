#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fcqc {

/// 8-bit interleaved RGB raster, row-major.
struct ImageBuffer {
  static constexpr int channels = 3;
  static constexpr int bit_depth = 8;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, std::uint8_t fill = 0);

  [[nodiscard]] std::size_t sample_count() const noexcept {
    return static_cast<std::size_t>(width) * height * channels;
  }
  [[nodiscard]] bool empty() const noexcept { return pixels.empty(); }

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  [[nodiscard]] std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Throws InvalidDimensions unless width, height >= 1 and the pixel count matches.
void validate(const ImageBuffer& img);

ImageBuffer flip_horizontal(const ImageBuffer& img);

}  // namespace fcqc
