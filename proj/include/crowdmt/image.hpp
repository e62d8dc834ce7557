#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace crowdmt {

// Interleaved RGB image, row-major, intensities on the 0-255 scale.
struct Image {
  int height{0};
  int width{0};
  int channels{3};
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return pixels.empty(); }
  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Decodes any format OpenCV can read into an RGB image.
Image read_image(const std::filesystem::path& path);
// Writes an 8-bit PNG (values rounded and clipped to [0,255]).
void write_image_png(const std::filesystem::path& path, const Image& image);

// Bilinear resize with half-pixel centers. Same-size input is returned as is.
Image resize_bilinear(const Image& image, int out_height, int out_width);

}  // namespace crowdmt
