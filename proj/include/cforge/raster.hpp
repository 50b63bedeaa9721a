#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cforge/geometry.hpp"

namespace cforge {

/// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, int c = 1, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  Box bounds() const { return {0, 0, width, height}; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Luma = 0.299R + 0.587G + 0.114B, rounded half-up, computed in exact integer arithmetic.
Raster to_gray(const Raster& image);

Raster crop(const Raster& image, const Box& box);

/// Decodes PNG, JPEG or TIFF; multi-page TIFF yields one raster per page.
/// Alpha is dropped, 16-bit samples are scaled to 8 bits. Throws ValidationError.
std::vector<Raster> read_image_pages(const std::string& path);

void write_png(const std::string& path, const Raster& image);
Raster read_png(const std::string& path);
void write_tiff_pages(const std::string& path, const std::vector<Raster>& pages);

}  // namespace cforge
