#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/core/tensor.hpp"

namespace uwipt {

/// 8-bit RGB image, row-major, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {
    if (w == 0 || h == 0) throw DimensionError("image extents must be >= 1");
  }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  bool same_extents(const Image& other) const { return width == other.width && height == other.height; }
  bool operator==(const Image&) const = default;
};

inline std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline void require_same_extents(const Image& a, const Image& b, const char* op) {
  if (!a.same_extents(b)) {
    throw DimensionError(std::string(op) + ": extents differ, " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height));
  }
}

/// [3 x H x W] tensor with values in [0, 1].
template <typename T = float>
Tensor<T> image_to_tensor(const Image& img) {
  const std::size_t hw = img.width * img.height;
  std::vector<T> data(3 * hw);
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) data[c * hw + i] = static_cast<T>(img.pixels[i * 3 + c]) / T{255};
  }
  return Tensor<T>({3, img.height, img.width}, std::move(data));
}

/// Clamps to [0, 1] and rounds to 8 bits.
template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  if (t.rank() != 3 || t.extent(0) != 3) {
    throw DimensionError("tensor_to_image: expected 3 x H x W, got " + shape_str(t.shape()));
  }
  Image img(t.extent(2), t.extent(1));
  const std::size_t hw = img.width * img.height;
  const auto d = t.data();
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      img.pixels[i * 3 + c] = to_u8(std::clamp(static_cast<double>(d[c * hw + i]), 0.0, 1.0) * 255.0);
    }
  }
  return img;
}

}  // namespace uwipt
