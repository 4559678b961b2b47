#pragma once

#include <filesystem>
#include <vector>

#include "signsplat/common.hpp"

namespace signsplat {

/// Row-major RGB image of doubles, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  static Image filled(int w, int h, const Vec3& rgb);

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

/// 8-bit RGB PNG. Values map to [0, 1] by /255 with no gamma transform.
Image load_png(const std::filesystem::path& path);

/// Quantizes round(clamp(v, 0, 1) * 255).
void save_png(const Image& img, const std::filesystem::path& path);

/// The image as it would read back from an 8-bit PNG.
Image quantize_8bit(const Image& img);

}  // namespace signsplat
