#pragma once

// Forward haze model I = J t + A (1 - t) on a scene that obeys the dark
// channel prior: every pixel has one channel near zero. The top band plays
// the role of sky: dense haze (t = 0.02) over scene content, or, with
// `uniform`, the airlight itself seen through the same t as the rest.

#include <array>
#include <cstdint>

#include "uwipt/core/rng.hpp"
#include "uwipt/data/image.hpp"

namespace haze {

struct Scene {
  uwipt::Image clear;
  uwipt::Image hazy;
  std::array<double, 3> atmospheric;
  std::vector<double> t;
};

inline Scene make_scene(std::uint64_t seed, std::size_t w = 64, std::size_t h = 64, double t_body = 0.6,
                        bool uniform = false) {
  uwipt::Rng rng(seed);
  Scene s;
  s.atmospheric = {rng.uniform(190, 235), rng.uniform(200, 245), rng.uniform(210, 250)};
  s.clear = uwipt::Image(w, h);
  s.hazy = uwipt::Image(w, h);
  s.t.resize(w * h);
  // Piecewise-constant colored blocks; one channel per block stays dark.
  const std::size_t block = 8;
  std::vector<std::array<double, 3>> colors((w / block + 1) * (h / block + 1));
  for (auto& c : colors) {
    for (auto& v : c) v = rng.uniform(40, 230);
    c[rng.below(3)] = rng.uniform(0, 6);
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto& col = colors[(y / block) * (w / block + 1) + x / block];
      const bool sky = y < h / 6;
      const double t = sky && !uniform ? 0.02 : t_body;
      s.t[y * w + x] = t;
      for (std::size_t c = 0; c < 3; ++c) {
        const double j = sky && uniform ? s.atmospheric[c] : col[c];
        s.clear.at(x, y, c) = uwipt::to_u8(j);
        s.hazy.at(x, y, c) = uwipt::to_u8(j * t + s.atmospheric[c] * (1.0 - t));
      }
    }
  }
  return s;
}

}  // namespace haze
