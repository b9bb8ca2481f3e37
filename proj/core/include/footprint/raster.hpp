#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace footprint {

// Interleaved row-major raster (H x W x C).
template <typename T>
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  T& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  const T& at(int row, int col, int ch = 0) const {
    return data[index(row, col, ch)];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool same_extent(int h, int w) const { return height == h && width == w; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

// Raw intensities. Wider than 8 bits so out-of-range inputs can be reported.
using ImageRaster = Raster<std::int32_t>;
// Binary building mask, 1 = building.
using MaskRaster = Raster<std::uint8_t>;
using RealRaster = Raster<float>;

}  // namespace footprint
