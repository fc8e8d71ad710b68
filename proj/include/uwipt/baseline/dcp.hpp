#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/data/image.hpp"

namespace uwipt {

struct DcpParams {
  int patch_radius = 7;                   // 15 x 15 window
  double omega = 0.95;                    // fraction of haze removed
  double t0 = 0.1;                        // transmission floor
  double atmospheric_percentile = 0.001;  // brightest 0.1% of the dark channel

  void validate() const {
    if (patch_radius < 0) throw ConfigError("dcp: patch_radius must be >= 0");
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("dcp: omega must lie in [0, 1]");
    if (!(t0 > 0.0 && t0 < 1.0)) throw ConfigError("dcp: t0 must lie in (0, 1)");
    if (!(atmospheric_percentile > 0.0 && atmospheric_percentile <= 1.0)) {
      throw ConfigError("dcp: atmospheric_percentile must lie in (0, 1]");
    }
  }
};

/// Single-channel map, row-major.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

using Rgb = std::array<double, 3>;

namespace detail {

/// Min filter over a (2r+1)^2 window with reflect borders, done separably.
inline Plane min_filter(const Plane& in, int radius) {
  if (radius <= 0) return in;
  const long r = radius;
  const std::size_t w = in.width, h = in.height;
  auto refl = [](long i, std::size_t n) {
    if (n == 1) return std::size_t{0};
    const long period = 2 * (static_cast<long>(n) - 1);
    i = std::abs(i) % period;
    if (i >= static_cast<long>(n)) i = period - i;
    return static_cast<std::size_t>(i);
  };
  Plane tmp{w, h, std::vector<double>(w * h)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double m = in.at(x, y);
      for (long k = -r; k <= r; ++k) m = std::min(m, in.at(refl(static_cast<long>(x) + k, w), y));
      tmp.values[y * w + x] = m;
    }
  }
  Plane out{w, h, std::vector<double>(w * h)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double m = tmp.at(x, y);
      for (long k = -r; k <= r; ++k) m = std::min(m, tmp.at(x, refl(static_cast<long>(y) + k, h)));
      out.values[y * w + x] = m;
    }
  }
  return out;
}

inline Plane channel_min(const Image& img, const Rgb& scale) {
  Plane p{img.width, img.height, std::vector<double>(img.width * img.height)};
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    double m = img.pixels[i * 3] / scale[0];
    m = std::min(m, img.pixels[i * 3 + 1] / scale[1]);
    m = std::min(m, img.pixels[i * 3 + 2] / scale[2]);
    p.values[i] = m;
  }
  return p;
}

}  // namespace detail

/// Per-pixel minimum over RGB followed by a min filter over the window.
inline Plane dark_channel(const Image& img, int radius) {
  if (radius < 0) throw ContractError("dark_channel: radius must be >= 0");
  return detail::min_filter(detail::channel_min(img, {1.0, 1.0, 1.0}), radius);
}

/// Mean color of the pixels whose dark-channel value is in the top `percentile`.
inline Rgb estimate_atmospheric(const Image& img, const Plane& dark, double percentile) {
  if (dark.width != img.width || dark.height != img.height) {
    throw DimensionError("estimate_atmospheric: dark channel extents differ from image");
  }
  const std::size_t n = dark.values.size();
  const auto count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(n) - 1e-9)), 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dark.values[a] > dark.values[b]; });
  Rgb a{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t c = 0; c < 3; ++c) a[c] += img.pixels[order[k] * 3 + c];
  }
  for (auto& v : a) v /= static_cast<double>(count);
  return a;
}

/// Transmission t = 1 - omega * dark_channel(I / A).
inline Plane transmission(const Image& img, const Rgb& atmospheric, const DcpParams& p) {
  Rgb scale{};
  for (std::size_t c = 0; c < 3; ++c) scale[c] = std::max(atmospheric[c], 1.0);
  Plane t = detail::min_filter(detail::channel_min(img, scale), p.patch_radius);
  for (auto& v : t.values) v = 1.0 - p.omega * v;
  return t;
}

/// Inverts I = J t + A (1 - t) with J = (I - A) / max(t, t0) + A.
inline Image dehaze(const Image& img, const DcpParams& p = {}) {
  p.validate();
  const Rgb a = estimate_atmospheric(img, dark_channel(img, p.patch_radius), p.atmospheric_percentile);
  const Plane t = transmission(img, a, p);
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const double ti = std::max(t.values[i], p.t0);
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[i * 3 + c] = to_u8((img.pixels[i * 3 + c] - a[c]) / ti + a[c]);
    }
  }
  return out;
}

}  // namespace uwipt
