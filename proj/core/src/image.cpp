#include "texsds/image.hpp"

#include "texsds/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace texsds {

Color sample_bilinear(const Image& texture, const Vec2& uv) {
  const double fx = uv.x() * texture.width - 0.5;
  const double fy = (1.0 - uv.y()) * texture.height - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double tx = fx - x0;
  const double ty = fy - y0;
  auto texel = [&](int x, int y) {
    x = std::clamp(x, 0, texture.width - 1);
    y = std::clamp(y, 0, texture.height - 1);
    return texture.rgb(x, y);
  };
  const Color top = (1.0 - tx) * texel(x0, y0) + tx * texel(x0 + 1, y0);
  const Color bottom = (1.0 - tx) * texel(x0, y0 + 1) + tx * texel(x0 + 1, y0 + 1);
  return (1.0 - ty) * top + ty * bottom;
}

std::uint8_t quantize_unorm8(float v) {
  const float clamped = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidArgument("write_png: only 1 or 3 channels supported");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), quantize_unorm8);
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error("write_png: " + path.string() + ": " + png.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw Error("read_png: " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    throw Error("read_png: " + path.string() + ": " + png.message);
  }
  Image out(static_cast<int>(png.width), static_cast<int>(png.height), 3);
  std::transform(bytes.begin(), bytes.end(), out.data.begin(), [](std::uint8_t b) { return b / 255.0f; });
  return out;
}

Image contact_sheet(const std::vector<Image>& tiles, int columns, int gap) {
  if (tiles.empty() || columns < 1) return {};
  int tile_w = 0;
  int tile_h = 0;
  for (const auto& t : tiles) {
    tile_w = std::max(tile_w, t.width);
    tile_h = std::max(tile_h, t.height);
  }
  const int rows = static_cast<int>((tiles.size() + columns - 1) / columns);
  Image sheet(columns * tile_w + (columns + 1) * gap, rows * tile_h + (rows + 1) * gap, 3, 1.0f);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& t = tiles[i];
    const int ox = gap + static_cast<int>(i % columns) * (tile_w + gap);
    const int oy = gap + static_cast<int>(i / columns) * (tile_h + gap);
    for (int y = 0; y < t.height; ++y) {
      for (int x = 0; x < t.width; ++x) {
        for (int c = 0; c < 3; ++c) sheet.at(ox + x, oy + y, c) = t.at(x, y, t.channels == 1 ? 0 : c);
      }
    }
  }
  return sheet;
}

Image plot_series(const std::vector<double>& values, int width, int height) {
  Image img(width, height, 3, 1.0f);
  const int margin = 24;
  auto put = [&](int x, int y, const Color& c) {
    if (x >= 0 && y >= 0 && x < width && y < height) img.set_rgb(x, y, c);
  };
  const Color axis(0.0, 0.0, 0.0);
  for (int x = margin; x < width - margin; ++x) put(x, height - margin, axis);
  for (int y = margin; y <= height - margin; ++y) put(margin, y, axis);
  if (values.empty()) return img;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) return img;
  if (hi <= lo) hi = lo + 1.0;

  const double plot_w = width - 2.0 * margin;
  const double plot_h = height - 2.0 * margin;
  auto to_px = [&](std::size_t i, double v) {
    const double x = margin + (values.size() > 1 ? plot_w * i / (values.size() - 1) : 0.0);
    const double y = height - margin - plot_h * (v - lo) / (hi - lo);
    return std::pair<int, int>(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
  };
  const Color line(0.12, 0.35, 0.8);
  auto prev = to_px(0, std::isfinite(values[0]) ? values[0] : lo);
  for (std::size_t i = 1; i < values.size(); ++i) {
    const auto cur = to_px(i, std::isfinite(values[i]) ? values[i] : lo);
    // Bresenham
    int x0 = prev.first, y0 = prev.second;
    const int x1 = cur.first, y1 = cur.second;
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, line);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
    prev = cur;
  }
  return img;
}

double psnr(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw InvalidArgument("psnr: image shapes differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = static_cast<double>(a.data[p * a.channels + c]) - b.data[p * b.channels + c];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  const double mse = sum / static_cast<double>(count);
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

}  // namespace texsds
