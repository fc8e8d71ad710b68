#pragma once

#include <cmath>
#include <vector>

#include "uwipt/data/image.hpp"

namespace oracle {

using uwipt::Image;

// Brute-force SSIM: 2-D Gaussian weights per window, direct moments, no
// separable filtering.
inline double ssim_reference(const Image& a, const Image& b) {
  const int n = 11;
  const double sigma = 1.5, c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double w[11][11], total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double di = i - 5.0, dj = j - 5.0;
      w[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += w[i][j];
    }
  auto luma = [](const Image& im, std::size_t x, std::size_t y) {
    return 0.299 * im.at(x, y, 0) + 0.587 * im.at(x, y, 1) + 0.114 * im.at(x, y, 2);
  };
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + n <= a.height; ++y0) {
    for (std::size_t x0 = 0; x0 + n <= a.width; ++x0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double wt = w[i][j] / total;
          const double va = luma(a, x0 + j, y0 + i), vb = luma(b, x0 + j, y0 + i);
          ma += wt * va, mb += wt * vb;
          saa += wt * va * va, sbb += wt * vb * vb, sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

struct Quadratic {
  std::vector<double> center, curvature;
};

// Straight-line Adam over plain arrays.
inline std::vector<double> adam(std::vector<double> p, const Quadratic& q, std::size_t steps, double lr, double b1,
                                double b2, double eps) {
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0);
  for (std::size_t t = 1; t <= steps; ++t) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = 2.0 * q.curvature[i] * (p[i] - q.center[i]);
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mhat = m[i] / (1 - std::pow(b1, double(t)));
      const double vhat = v[i] / (1 - std::pow(b2, double(t)));
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  return p;
}

}  // namespace oracle
