#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/core/ops.hpp"
#include "uwipt/core/rng.hpp"
#include "uwipt/data/image.hpp"

namespace uwipt {

enum class SmoothKind { Box, Gaussian };

inline constexpr std::array<int, 5> kAugmentAngles{0, 45, 135, 225, 315};

namespace detail {

inline long reflect_coord(long i, std::size_t n) { return static_cast<long>(reflect_index(i, static_cast<long>(n))); }

/// Mirror a continuous coordinate into [0, n - 1] (reflection without edge repeat).
inline double reflect_continuous(double x, std::size_t n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * static_cast<double>(n - 1);
  x = std::fmod(std::abs(x), period);
  if (x > static_cast<double>(n - 1)) x = period - x;
  return x;
}

/// Separable filter with reflect borders, accumulated in double, rounded once.
inline Image separable_filter(const Image& img, const std::vector<double>& kernel) {
  const long r = static_cast<long>(kernel.size() / 2);
  const std::size_t w = img.width, h = img.height;
  std::vector<double> tmp(w * h * 3, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long k = -r; k <= r; ++k) {
          acc += kernel[static_cast<std::size_t>(k + r)] *
                 img.at(static_cast<std::size_t>(reflect_coord(static_cast<long>(x) + k, w)), y, c);
        }
        tmp[(y * w + x) * 3 + c] = acc;
      }
    }
  }
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long k = -r; k <= r; ++k) {
          const auto sy = static_cast<std::size_t>(reflect_coord(static_cast<long>(y) + k, h));
          acc += kernel[static_cast<std::size_t>(k + r)] * tmp[(sy * w + x) * 3 + c];
        }
        out.at(x, y, c) = to_u8(acc);
      }
    }
  }
  return out;
}

inline std::vector<double> gaussian_kernel(double sigma, long radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

}  // namespace detail

/// 3x3 smoothing per channel with reflect borders, rounded to the nearest integer.
inline Image smooth3x3(const Image& img, SmoothKind kind = SmoothKind::Box) {
  const std::vector<double> kernel =
      kind == SmoothKind::Box ? std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3} : std::vector<double>{0.25, 0.5, 0.25};
  return detail::separable_filter(img, kernel);
}

/// Gaussian blur with kernel half-width ceil(3 sigma); sigma 0 returns the input.
inline Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0) throw ContractError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return img;
  const long radius = std::max(1L, static_cast<long>(std::ceil(3.0 * sigma)));
  return detail::separable_filter(img, detail::gaussian_kernel(sigma, radius));
}

/// Rotation by any angle about the image center. Bilinear sampling, original
/// extents kept, samples outside the source mirrored back inside.
inline Image rotate_any(const Image& img, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  double c = std::cos(rad), s = std::sin(rad);
  auto snap = [](double v) { return std::abs(v) < 1e-12 ? 0.0 : (std::abs(std::abs(v) - 1.0) < 1e-12 ? std::round(v) : v); };
  c = snap(c);
  s = snap(s);
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      double sx = c * dx + s * dy + cx;
      double sy = -s * dx + c * dy + cy;
      sx = detail::reflect_continuous(sx, img.width);
      sy = detail::reflect_continuous(sy, img.height);
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double ax = sx - fx0, ay = sy - fy0;
      const auto x0 = static_cast<std::size_t>(fx0), y0 = static_cast<std::size_t>(fy0);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = (1 - ax) * (1 - ay) * img.at(x0, y0, ch) + ax * (1 - ay) * img.at(x1, y0, ch) +
                         (1 - ax) * ay * img.at(x0, y1, ch) + ax * ay * img.at(x1, y1, ch);
        out.at(x, y, ch) = to_u8(v);
      }
    }
  }
  return out;
}

inline bool is_augment_angle(int degrees) {
  return std::find(kAugmentAngles.begin(), kAugmentAngles.end(), degrees) != kAugmentAngles.end();
}

/// Augmentation rotation, restricted to the five dataset angles.
inline Image rotate(const Image& img, int degrees) {
  if (!is_augment_angle(degrees)) {
    throw ContractError("rotate: unsupported angle " + std::to_string(degrees) + " (allowed: 0, 45, 135, 225, 315)");
  }
  if (degrees == 0) return img;
  return rotate_any(img, degrees);
}

struct NoisyImage {
  Image image;
  std::vector<double> noise;  // pre-clamp noise, one value per channel sample
};

/// I.i.d. N(0, sigma^2) noise on the 0-255 scale, clamped and rounded.
inline NoisyImage add_gaussian_noise_traced(const Image& img, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw ContractError("add_gaussian_noise: sigma must be >= 0");
  NoisyImage result{img, std::vector<double>(img.pixels.size(), 0.0)};
  if (sigma == 0.0) return result;
  Rng rng = Rng(seed).split("gaussian-noise");
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    result.noise[i] = rng.normal(0.0, sigma);
    result.image.pixels[i] = to_u8(img.pixels[i] + result.noise[i]);
  }
  return result;
}

inline Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  return add_gaussian_noise_traced(img, sigma, seed).image;
}

struct RainParams {
  double density = 0.01;    // expected streaks per pixel
  double length = 8.0;      // pixels
  double angle = 15.0;      // degrees from vertical
  double intensity = 0.6;   // peak brightness added, fraction of 255
};

struct RainyImage {
  Image image;
  std::size_t streaks = 0;
};

/// Additive anti-aliased bright streaks; the count is Poisson(density * W * H).
inline RainyImage add_rain_traced(const Image& img, const RainParams& p, std::uint64_t seed) {
  if (!(p.density >= 0.0 && p.density <= 1.0)) throw ContractError("add_rain: density must lie in [0, 1]");
  if (p.length < 0 || p.intensity < 0) throw ContractError("add_rain: length and intensity must be >= 0");
  RainyImage result{img, 0};
  if (p.density == 0.0) return result;
  Rng rng = Rng(seed).split("rain");
  const double area = static_cast<double>(img.width * img.height);
  result.streaks = rng.poisson(p.density * area);
  std::vector<double> cover(img.width * img.height, 0.0);
  const double rad = p.angle * std::numbers::pi / 180.0;
  const double ux = std::sin(rad), uy = std::cos(rad);
  const int samples = std::max(2, static_cast<int>(std::ceil(p.length * 2.0)) + 1);
  auto splat = [&](double x, double y, double weight) {
    const double fx = std::floor(x), fy = std::floor(y);
    const double ax = x - fx, ay = y - fy;
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const long px = static_cast<long>(fx) + dx, py = static_cast<long>(fy) + dy;
        if (px < 0 || py < 0 || px >= static_cast<long>(img.width) || py >= static_cast<long>(img.height)) continue;
        const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
        cover[static_cast<std::size_t>(py) * img.width + static_cast<std::size_t>(px)] += w * weight;
      }
    }
  };
  for (std::size_t k = 0; k < result.streaks; ++k) {
    const double x0 = rng.uniform(0.0, static_cast<double>(img.width));
    const double y0 = rng.uniform(0.0, static_cast<double>(img.height));
    const double brightness = rng.uniform(0.5, 1.0);
    for (int i = 0; i < samples; ++i) {
      const double t = (static_cast<double>(i) / (samples - 1) - 0.5) * p.length;
      splat(x0 + t * ux, y0 + t * uy, brightness * 0.5);
    }
  }
  for (std::size_t i = 0; i < cover.size(); ++i) {
    const double add = 255.0 * p.intensity * std::min(cover[i], 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      result.image.pixels[i * 3 + c] = to_u8(img.pixels[i * 3 + c] + add);
    }
  }
  return result;
}

inline Image add_rain(const Image& img, const RainParams& p, std::uint64_t seed) {
  return add_rain_traced(img, p, seed).image;
}

/// Box-average downsampling by 2 or 4; extents must be multiples of the factor.
inline Image downscale(const Image& img, std::size_t factor) {
  if (factor != 2 && factor != 4) throw ContractError("downscale: factor must be 2 or 4");
  if (img.width % factor || img.height % factor) {
    throw DimensionError("downscale: " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " is not divisible by " + std::to_string(factor) + "; pad first");
  }
  Image out(img.width / factor, img.height / factor);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        unsigned acc = 0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy, c);
        }
        out.at(x, y, c) = to_u8(acc * inv);
      }
    }
  }
  return out;
}

inline Image upscale_nearest(const Image& img, std::size_t factor) {
  if (factor == 0) throw ContractError("upscale_nearest: factor must be >= 1");
  Image out(img.width * factor, img.height * factor);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x / factor, y / factor, c);
    }
  }
  return out;
}

/// Reflect-pads right and bottom so both extents are multiples of `m`.
inline Image pad_to_multiple(const Image& img, std::size_t m) {
  const std::size_t w = (img.width + m - 1) / m * m, h = (img.height + m - 1) / m * m;
  if (w == img.width && h == img.height) return img;
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto sy = static_cast<std::size_t>(detail::reflect_coord(static_cast<long>(y), img.height));
    for (std::size_t x = 0; x < w; ++x) {
      const auto sx = static_cast<std::size_t>(detail::reflect_coord(static_cast<long>(x), img.width));
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

struct UnderwaterParams {
  double cast_strength = 0.5;
  double blur_radius = 1.0;  // Gaussian sigma in pixels
  double noise_sigma = 3.0;
};

/// Synthetic underwater degradation: red attenuation, blue-green cast toward
/// a water tint, Gaussian blur, then mild sensor noise.
inline Image synth_underwater(const Image& img, const UnderwaterParams& p, std::uint64_t seed) {
  if (p.cast_strength < 0 || p.blur_radius < 0 || p.noise_sigma < 0) {
    throw ContractError("synth_underwater: parameters must be nonnegative");
  }
  Image out = img;
  if (p.cast_strength > 0) {
    const double s = std::min(p.cast_strength, 1.0);
    for (std::size_t i = 0; i < img.width * img.height; ++i) {
      const double r = img.pixels[i * 3], g = img.pixels[i * 3 + 1], b = img.pixels[i * 3 + 2];
      out.pixels[i * 3] = to_u8(r * (1.0 - 0.6 * s));
      out.pixels[i * 3 + 1] = to_u8(g + 0.15 * s * (200.0 - g));
      out.pixels[i * 3 + 2] = to_u8(b + 0.35 * s * (255.0 - b));
    }
  }
  out = gaussian_blur(out, p.blur_radius);
  return add_gaussian_noise(out, p.noise_sigma, Rng(seed).split("underwater")());
}

/// Procedural clean photograph stand-in: smooth background gradient, a few
/// shaded shapes and fine texture, so restoration has structure to recover.
inline Image synth_clean_image(std::size_t width, std::size_t height, std::uint64_t seed) {
  Rng rng = Rng(seed).split("clean-image");
  Image img(width, height);
  std::array<double, 3> base{}, grad_x{}, grad_y{};
  for (std::size_t c = 0; c < 3; ++c) {
    base[c] = rng.uniform(40, 200);
    grad_x[c] = rng.uniform(-60, 60);
    grad_y[c] = rng.uniform(-60, 60);
  }
  std::vector<double> field(width * height * 3);
  const double fw = static_cast<double>(width), fh = static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        field[(y * width + x) * 3 + c] = base[c] + grad_x[c] * (x / fw - 0.5) + grad_y[c] * (y / fh - 0.5);
      }
    }
  }
  const std::size_t shapes = 3 + rng.below(4);
  for (std::size_t k = 0; k < shapes; ++k) {
    const double cx = rng.uniform(0, fw), cy = rng.uniform(0, fh);
    const double rx = rng.uniform(0.08, 0.35) * fw, ry = rng.uniform(0.08, 0.35) * fh;
    const bool ellipse = rng.uniform() < 0.5;
    std::array<double, 3> color{};
    for (auto& v : color) v = rng.uniform(10, 245);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        const double shade = 0.85 + 0.15 * (1.0 - std::min(1.0, std::sqrt(dx * dx + dy * dy)));
        for (std::size_t c = 0; c < 3; ++c) field[(y * width + x) * 3 + c] = color[c] * shade;
      }
    }
  }
  const double freq = rng.uniform(0.3, 0.9), phase = rng.uniform(0, 2 * std::numbers::pi);
  const double amp = rng.uniform(4, 12);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double t = amp * std::sin(freq * x + 0.7 * freq * y + phase);
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = to_u8(field[(y * width + x) * 3 + c] + t);
    }
  }
  return img;
}

}  // namespace uwipt
