#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/data/dataset.hpp"
#include "uwipt/data/image.hpp"

namespace uwipt {

/// 10 log10(255^2 / MSE) over all samples; +inf when the images are equal.
inline double psnr(const Image& a, const Image& b) {
  require_same_extents(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  bool per_channel = false;  // false: luma only
};

namespace detail {

inline std::vector<double> luma_plane(const Image& img) {
  std::vector<double> y(img.width * img.height);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * img.pixels[i * 3] + 0.587 * img.pixels[i * 3 + 1] + 0.114 * img.pixels[i * 3 + 2];
  }
  return y;
}

inline std::vector<double> channel_plane(const Image& img, std::size_t c) {
  std::vector<double> p(img.width * img.height);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.pixels[i * 3 + c];
  return p;
}

/// Separable Gaussian-weighted sums over every fully contained window.
inline std::vector<double> valid_filter(const std::vector<double>& plane, std::size_t w, std::size_t h,
                                        const std::vector<double>& k) {
  const std::size_t n = k.size(), ow = w - n + 1, oh = h - n + 1;
  std::vector<double> rows(ow * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * plane[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t w, std::size_t h,
                         const SsimOptions& opt) {
  std::vector<double> k(opt.window);
  const double mid = (static_cast<double>(opt.window) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < opt.window; ++i) {
    const double d = static_cast<double>(i) - mid;
    k[i] = std::exp(-d * d / (2.0 * opt.sigma * opt.sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;

  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = valid_filter(a, w, h, k), mu_b = valid_filter(b, w, h, k);
  const auto e_aa = valid_filter(aa, w, h, k), e_bb = valid_filter(bb, w, h, k), e_ab = valid_filter(ab, w, h, k);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0), c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace detail

/// Mean local SSIM over Gaussian windows (11x11, sigma 1.5) that fit inside
/// the image, on luma by default or averaged over RGB channels.
inline double ssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
  require_same_extents(a, b, "ssim");
  if (a.width < opt.window || a.height < opt.window) {
    throw ContractError("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                        " is smaller than the " + std::to_string(opt.window) + "x" + std::to_string(opt.window) +
                        " window");
  }
  if (!opt.per_channel) {
    return detail::ssim_plane(detail::luma_plane(a), detail::luma_plane(b), a.width, a.height, opt);
  }
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    s += detail::ssim_plane(detail::channel_plane(a, c), detail::channel_plane(b, c), a.width, a.height, opt);
  }
  return s / 3.0;
}

struct MetricRow {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double elapsed_ms = 0.0;
};

struct MetricReport {
  std::string method;
  std::vector<MetricRow> per_image;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double mean_elapsed_ms = 0.0;

  void aggregate() {
    double p = 0.0, s = 0.0, t = 0.0;
    for (const auto& r : per_image) {
      p += r.psnr_db;
      s += r.ssim;
      t += r.elapsed_ms;
    }
    const double n = static_cast<double>(per_image.size());
    mean_psnr_db = n ? p / n : 0.0;
    mean_ssim = n ? s / n : 0.0;
    mean_elapsed_ms = n ? t / n : 0.0;
  }
};

using Enhancer = std::function<Image(const Image&)>;

/// Runs `enhance` on every corrupted image and scores it against the clean one.
/// Only the enhancer call is timed.
inline MetricReport evaluate(const std::string& method, const Enhancer& enhance, const std::vector<ImagePair>& pairs,
                             const SsimOptions& opt = {}) {
  if (pairs.empty()) throw ContractError("evaluate: empty test set");
  MetricReport report;
  report.method = method;
  for (const auto& p : pairs) {
    const auto t0 = std::chrono::steady_clock::now();
    const Image out = enhance(p.corrupted);
    const auto t1 = std::chrono::steady_clock::now();
    MetricRow row;
    row.id = pair_label(p);
    row.psnr_db = psnr(out, p.clean);
    row.ssim = ssim(out, p.clean, opt);
    row.elapsed_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    report.per_image.push_back(std::move(row));
  }
  report.aggregate();
  return report;
}

namespace detail {

inline std::string fmt_fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace detail

inline std::string report_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "method,id,psnr_db,ssim,elapsed_ms\n";
  for (const auto& r : reports) {
    for (const auto& row : r.per_image) {
      os << r.method << ',' << row.id << ',' << detail::fmt_fixed(row.psnr_db, 6) << ','
         << detail::fmt_fixed(row.ssim, 6) << ',' << detail::fmt_fixed(row.elapsed_ms, 3) << '\n';
    }
  }
  return os.str();
}

/// Aligned Method / PSNR / SSIM table, one row per method.
inline std::string report_table(const std::vector<MetricReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Method" << "  " << std::right << std::setw(8) << "PSNR"
     << "  " << std::setw(6) << "SSIM" << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(width)) << r.method << "  " << std::right << std::setw(8)
       << detail::fmt_fixed(r.mean_psnr_db, 2) << "  " << std::setw(6) << detail::fmt_fixed(r.mean_ssim, 4) << '\n';
  }
  return os.str();
}

}  // namespace uwipt
