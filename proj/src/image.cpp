#include "fcqc/image.hpp"

#include <algorithm>
#include <string>

#include "fcqc/errors.hpp"

namespace fcqc {

ImageBuffer::ImageBuffer(int w, int h, std::uint8_t fill) : width(w), height(h) {
  if (w < 1 || h < 1) {
    throw Error(Errc::InvalidDimensions,
                "image must be at least 1x1, got " + std::to_string(w) + "x" + std::to_string(h));
  }
  pixels.assign(sample_count(), fill);
}

void validate(const ImageBuffer& img) {
  if (img.width < 1 || img.height < 1 || img.pixels.size() != img.sample_count()) {
    throw Error(Errc::InvalidDimensions, "invalid image buffer " + std::to_string(img.width) + "x" +
                                             std::to_string(img.height) + " with " +
                                             std::to_string(img.pixels.size()) + " samples");
  }
}

ImageBuffer flip_horizontal(const ImageBuffer& img) {
  validate(img);
  ImageBuffer out = img;
  const int w = img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ImageBuffer::channels; ++c) out.at(x, y, c) = img.at(w - 1 - x, y, c);
    }
  }
  return out;
}

}  // namespace fcqc
