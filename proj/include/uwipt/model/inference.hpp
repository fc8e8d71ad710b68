#pragma once

#include <algorithm>
#include <vector>

#include "uwipt/core/ops.hpp"
#include "uwipt/data/image.hpp"
#include "uwipt/model/ipt.hpp"

namespace uwipt {

/// Reflect-pads right and bottom so both extents are multiples of `patch`.
template <typename T>
Tensor<T> pad_to_patch(const Tensor<T>& img, std::size_t patch) {
  detail::require_rank(img, 3, "pad_to_patch");
  const std::size_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
  const std::size_t ph = (h + patch - 1) / patch * patch, pw = (w + patch - 1) / patch * patch;
  if (ph == h && pw == w) return img;
  std::vector<T> out(c * ph * pw);
  const auto src = img.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < ph; ++y) {
      const std::size_t sy = detail::reflect_index(static_cast<long>(y), static_cast<long>(h));
      for (std::size_t x = 0; x < pw; ++x) {
        const std::size_t sx = detail::reflect_index(static_cast<long>(x), static_cast<long>(w));
        out[(ch * ph + y) * pw + x] = src[(ch * h + sy) * w + sx];
      }
    }
  }
  return Tensor<T>({c, ph, pw}, std::move(out));
}

/// Top-left `height` x `width` window of a C x H x W tensor.
template <typename T>
Tensor<T> crop_from_patch(const Tensor<T>& img, std::size_t height, std::size_t width) {
  detail::require_rank(img, 3, "crop_from_patch");
  const std::size_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
  if (height > h || width > w) {
    throw DimensionError("crop_from_patch: window " + std::to_string(height) + "x" + std::to_string(width) +
                         " exceeds " + shape_str(img.shape()));
  }
  if (height == h && width == w) return img;
  std::vector<T> out(c * height * width);
  const auto src = img.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(src.begin() + (ch * h + y) * w, width, out.begin() + (ch * height + y) * width);
    }
  }
  return Tensor<T>({c, height, width}, std::move(out));
}

template <typename T>
Tensor<T> clamp01(const Tensor<T>& t) {
  std::vector<T> out(t.values());
  for (auto& v : out) v = std::clamp(v, T{0}, T{1});
  return Tensor<T>(t.shape(), std::move(out));
}

/// Inference on an arbitrary-size image: pad to patch multiples, run, crop
/// back to scale * original extents, clamp to [0, 1]. No graph is recorded.
template <typename T>
Tensor<T> restore(const IptModel<T>& model, const Tensor<T>& img, TaskId task, ForwardStats<T>* stats = nullptr) {
  NoGradGuard guard;
  const std::size_t s = task_scale(task);
  const Tensor<T> padded = pad_to_patch(img, model.config().patch);
  const Tensor<T> out = model.forward(padded, task, stats);
  return clamp01(crop_from_patch(out, img.extent(1) * s, img.extent(2) * s));
}

/// Start offsets covering [0, extent) with windows of `tile`; the last window
/// is shifted back to end at `extent`.
inline std::vector<std::size_t> tile_offsets(std::size_t extent, std::size_t tile) {
  std::vector<std::size_t> out;
  if (extent <= tile) return {0};
  for (std::size_t o = 0; o + tile < extent; o += tile) out.push_back(o);
  out.push_back(extent - tile);
  return out;
}

/// Tiled inference for images larger than the positional table allows.
/// Tiles are `tile` x `tile` (or the full extent when smaller, or when tile
/// is 0); overlapping
/// regions of the last row/column take the later tile's output.
template <typename T>
Image enhance_image(const IptModel<T>& model, const Image& input, TaskId task, std::size_t tile,
                    ForwardStats<T>* stats = nullptr) {
  const std::size_t s = task_scale(task);
  const Tensor<T> full = image_to_tensor<T>(input);
  const std::size_t h = input.height, w = input.width;
  if (tile == 0) tile = std::max(h, w);
  const std::size_t th = std::min(tile, h), tw = std::min(tile, w);
  std::vector<T> out(3 * h * s * w * s);
  const auto src = full.data();
  for (std::size_t oy : tile_offsets(h, th)) {
    for (std::size_t ox : tile_offsets(w, tw)) {
      std::vector<T> patch(3 * th * tw);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < th; ++y) {
          std::copy_n(src.begin() + (c * h + oy + y) * w + ox, tw, patch.begin() + (c * th + y) * tw);
        }
      }
      const Tensor<T> result = restore(model, Tensor<T>({3, th, tw}, std::move(patch)), task, stats);
      const auto r = result.data();
      const std::size_t rh = th * s, rw = tw * s, oh = h * s, ow = w * s;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < rh; ++y) {
          std::copy_n(r.begin() + (c * rh + y) * rw, rw, out.begin() + (c * oh + oy * s + y) * ow + ox * s);
        }
      }
    }
  }
  return tensor_to_image(Tensor<T>({3, h * s, w * s}, std::move(out)));
}

}  // namespace uwipt
