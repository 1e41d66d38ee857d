#pragma once

#include "texsds/texfield.hpp"

#include <filesystem>
#include <vector>

namespace texsds {

/// Row-major float image with interleaved channels. Row 0 is the top row.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  [[nodiscard]] std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  [[nodiscard]] float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  [[nodiscard]] Color rgb(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
  void set_rgb(int x, int y, const Color& c) {
    at(x, y, 0) = static_cast<float>(c.x());
    at(x, y, 1) = static_cast<float>(c.y());
    at(x, y, 2) = static_cast<float>(c.z());
  }

  bool operator==(const Image&) const = default;
};

/// Bilinear lookup with texel centers at ((i + 0.5) / w, 1 - (j + 0.5) / h),
/// i.e. v = 1 is the top row as in OBJ conventions. Clamps to the edge.
Color sample_bilinear(const Image& texture, const Vec2& uv);

/// 8-bit PNG (grey or RGB). Values are clamped to [0,1] and rounded to the
/// nearest code.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

std::uint8_t quantize_unorm8(float v);

/// Tiles images into a grid (row-major), separated by `gap` pixels of white.
Image contact_sheet(const std::vector<Image>& tiles, int columns, int gap = 4);

/// Renders a simple line plot of a series (no text) for quick inspection.
Image plot_series(const std::vector<double>& values, int width = 640, int height = 360);

/// PSNR in dB between two images over pixels where `mask` is non-zero (or all
/// pixels if the mask is empty). Peak value 1.
double psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask = {});

}  // namespace texsds
