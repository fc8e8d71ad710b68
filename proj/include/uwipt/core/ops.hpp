#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "uwipt/core/tensor.hpp"

// Differentiable operations over Tensor<T>. No broadcasting: shapes must match
// exactly, and row vectors are widened with expand_rows().

namespace uwipt {

namespace detail {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMajor<T>>;
template <typename T>
using MapM = Eigen::Map<RowMajor<T>>;

/// Owned copy of a row-major block. Eigen picks its kernels by address
/// alignment, so products run on owned (aligned) storage to keep results
/// independent of where the operands happen to live.
template <typename T>
RowMajor<T> owned(const T* p, std::size_t rows, std::size_t cols) {
  return MapC<T>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(a.shape()));
  }
}

/// Mirror index into [0, n) without repeating the edge sample.
inline std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = std::abs(i) % period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

using IndexMap = std::shared_ptr<const std::vector<std::uint32_t>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(out), "add", {a, b}, [](detail::Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    detail::accumulate<T>(*self.inputs[1], self.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(out), "sub", {a, b}, [](detail::Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    if (!self.inputs[1]->requires_grad) return;
    auto& g = self.inputs[1]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.data[i];
    }
    if (y.requires_grad) {
      auto& g = y.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return detail::make_result<T>(a.shape(), std::move(out), "scale", {a},
                                [factor](detail::Node<T>& self) {
                                  auto& x = *self.inputs[0];
                                  if (!x.requires_grad) return;
                                  auto& g = x.ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
                                });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T{0} ? a[i] : T{0};
  return detail::make_result<T>(a.shape(), std::move(out), "relu", {a}, [](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.data[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a[i];
    out[i] = T{0.5} * x * (T{1} + std::erf(x * inv_sqrt2));
  }
  return detail::make_result<T>(a.shape(), std::move(out), "gelu", {a}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    constexpr T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = in.data[i];
      const T cdf = T{0.5} * (T{1} + std::erf(x * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T{-0.5} * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  return detail::make_result<T>({1}, {static_cast<T>(acc)}, "sum", {a}, [](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const T inv_n = T{1} / static_cast<T>(a.numel());
  double acc = 0.0;
  for (T v : a.data()) acc += v;
  return detail::make_result<T>({1}, {static_cast<T>(acc / static_cast<double>(a.numel()))}, "mean", {a}, [inv_n](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.ensure_grad();
    for (auto& v : g) v += self.grad[0] * inv_n;
  });
}

/// Mean absolute difference. The subgradient at a == b is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "l1_loss");
  const T inv_n = T{1} / static_cast<T>(a.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
  return detail::make_result<T>(
      {1}, {static_cast<T>(acc / static_cast<double>(a.numel()))}, "l1_loss", {a, b}, [inv_n](detail::Node<T>& self) {
        auto& x = *self.inputs[0];
        auto& y = *self.inputs[1];
        const T g0 = self.grad[0] * inv_n;
        for (int side = 0; side < 2; ++side) {
          auto& target = side == 0 ? x : y;
          if (!target.requires_grad) continue;
          auto& g = target.ensure_grad();
          const T sign_flip = side == 0 ? T{1} : T{-1};
          for (std::size_t i = 0; i < g.size(); ++i) {
            const T d = x.data[i] - y.data[i];
            const T s = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
            g[i] += sign_flip * s * g0;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return detail::make_result<T>(std::move(shape), a.values(), "reshape", {a},
                                [](detail::Node<T>& self) {
                                  detail::accumulate<T>(*self.inputs[0], self.grad);
                                });
}

/// out[i] = a[index[i]]; the backward rule scatters.
template <typename T>
Tensor<T> gather(const Tensor<T>& a, Shape shape, detail::IndexMap index, const char* op = "gather") {
  if (shape_numel(shape) != index->size()) {
    throw DimensionError(std::string(op) + ": index map length does not match " + shape_str(shape));
  }
  std::vector<T> out(index->size());
  const auto src = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[(*index)[i]];
  return detail::make_result<T>(std::move(shape), std::move(out), op, {a},
                                [index](detail::Node<T>& self) {
                                  auto& x = *self.inputs[0];
                                  if (!x.requires_grad) return;
                                  auto& g = x.ensure_grad();
                                  for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  auto index = std::make_shared<std::vector<std::uint32_t>>(rows * cols);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) (*index)[c * rows + r] = static_cast<std::uint32_t>(r * cols + c);
  }
  return gather(a, {cols, rows}, std::move(index), "transpose");
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t len) {
  detail::require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  if (len == 0 || start + len > cols) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of range for " + shape_str(a.shape()));
  }
  auto index = std::make_shared<std::vector<std::uint32_t>>(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < len; ++c) (*index)[r * len + c] = static_cast<std::uint32_t>(r * cols + start + c);
  }
  return gather(a, {rows, len}, std::move(index), "slice_cols");
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t len) {
  detail::require_rank(a, 2, "slice_rows");
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  if (len == 0 || start + len > rows) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of range for " + shape_str(a.shape()));
  }
  auto index = std::make_shared<std::vector<std::uint32_t>>(len * cols);
  std::iota(index->begin(), index->end(), static_cast<std::uint32_t>(start * cols));
  return gather(a, {len, cols}, std::move(index), "slice_rows");
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts[0].extent(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_cols");
    if (p.extent(0) != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    cols += p.extent(1);
  }
  std::vector<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.extent(1);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.data().begin() + r * w, w, out.begin() + r * cols + offset);
    }
    offset += w;
  }
  return detail::make_result<T>({rows, cols}, std::move(out), "concat_cols", parts,
                                [rows, cols](detail::Node<T>& self) {
                                  std::size_t off = 0;
                                  for (auto& in : self.inputs) {
                                    const std::size_t w = in->shape[1];
                                    if (in->requires_grad) {
                                      auto& g = in->ensure_grad();
                                      for (std::size_t r = 0; r < rows; ++r) {
                                        for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * cols + off + c];
                                      }
                                    }
                                    off += w;
                                  }
                                });
}

/// Repeats a length-d vector into an n x d matrix.
template <typename T>
Tensor<T> expand_rows(const Tensor<T>& v, std::size_t n) {
  const std::size_t d = v.numel();
  std::vector<T> out(n * d);
  for (std::size_t r = 0; r < n; ++r) std::copy(v.data().begin(), v.data().end(), out.begin() + r * d);
  return detail::make_result<T>({n, d}, std::move(out), "expand_rows", {v}, [n, d](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.ensure_grad();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// [m x k] * [k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  const detail::RowMajor<T> r = detail::owned(a.data().data(), m, k) * detail::owned(b.data().data(), k, n);
  detail::MapM<T>(out.data(), m, n) = r;
  return detail::make_result<T>({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    const detail::RowMajor<T> dc = detail::owned(self.grad.data(), m, n);
    if (x.requires_grad) {
      const detail::RowMajor<T> dx = dc * detail::owned(y.data.data(), k, n).transpose();
      detail::MapM<T>(x.ensure_grad().data(), m, k) += dx;
    }
    if (y.requires_grad) {
      const detail::RowMajor<T> dy = detail::owned(x.data.data(), m, k).transpose() * dc;
      detail::MapM<T>(y.ensure_grad().data(), k, n) += dy;
    }
  });
}

/// [m x k] * [n x k]^T, used for attention scores.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  if (b.extent(1) != k) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  std::vector<T> out(m * n);
  const detail::RowMajor<T> r =
      detail::owned(a.data().data(), m, k) * detail::owned(b.data().data(), n, k).transpose();
  detail::MapM<T>(out.data(), m, n) = r;
  return detail::make_result<T>({m, n}, std::move(out), "matmul_nt", {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    const detail::RowMajor<T> dc = detail::owned(self.grad.data(), m, n);
    if (x.requires_grad) {
      const detail::RowMajor<T> dx = dc * detail::owned(y.data.data(), n, k);
      detail::MapM<T>(x.ensure_grad().data(), m, k) += dx;
    }
    if (y.requires_grad) {
      const detail::RowMajor<T> dy = dc.transpose() * detail::owned(x.data.data(), m, k);
      detail::MapM<T>(y.ensure_grad().data(), n, k) += dy;
    }
  });
}

/// x [n x in] * weight [in x out] + bias [out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add(matmul(x, weight), expand_rows(bias, x.extent(0)));
}

// ---------------------------------------------------------------------------
// Normalizers

/// Softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      total += o[i];
    }
    const T inv = static_cast<T>(1.0 / total);
    for (std::size_t i = 0; i < n; ++i) o[i] *= inv;
  }
  return detail::make_result<T>(a.shape(), std::move(out), "softmax", {a}, [rows, n](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot{0};
      for (std::size_t i = 0; i < n; ++i) dot += y[i] * dy[i];
      for (std::size_t i = 0; i < n; ++i) g[r * n + i] += y[i] * (dy[i] - dot);
    }
  });
}

/// Per-row normalization over the last axis followed by an affine map.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& shift, T eps = T{1e-5}) {
  const std::size_t d = a.shape().back();
  if (gain.numel() != d || shift.numel() != d) {
    throw DimensionError("layernorm: affine parameters must have length " + std::to_string(d));
  }
  const std::size_t rows = a.numel() / d;
  auto normalized = std::make_shared<std::vector<T>>(a.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += in[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(d);
    const T rstd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*inv_std)[r] = rstd;
    for (std::size_t i = 0; i < d; ++i) {
      const T xh = static_cast<T>(in[i] - mu) * rstd;
      (*normalized)[r * d + i] = xh;
      out[r * d + i] = xh * gain[i] + shift[i];
    }
  }
  return detail::make_result<T>(
      a.shape(), std::move(out), "layernorm", {a, gain, shift},
      [rows, d, normalized, inv_std](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& g = *self.inputs[1];
        auto& b = *self.inputs[2];
        const auto& xh = *normalized;
        if (g.requires_grad || b.requires_grad) {
          auto* dg = g.requires_grad ? g.ensure_grad().data() : nullptr;
          auto* db = b.requires_grad ? b.ensure_grad().data() : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < d; ++i) {
              const T dy = self.grad[r * d + i];
              if (dg) dg[i] += dy * xh[r * d + i];
              if (db) db[i] += dy;
            }
          }
        }
        if (!in.requires_grad) return;
        auto& dx = in.ensure_grad();
        const T inv_d = T{1} / static_cast<T>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_dxh{0}, mean_dxh_xh{0};
          for (std::size_t i = 0; i < d; ++i) {
            const T dxh = self.grad[r * d + i] * g.data[i];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[r * d + i];
          }
          mean_dxh *= inv_d;
          mean_dxh_xh *= inv_d;
          for (std::size_t i = 0; i < d; ++i) {
            const T dxh = self.grad[r * d + i] * g.data[i];
            dx[r * d + i] += (*inv_std)[r] * (dxh - mean_dxh - xh[r * d + i] * mean_dxh_xh);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

enum class PaddingMode { Reflect, Zero };

struct Conv2dOptions {
  std::size_t stride = 1;
  int padding = -1;  // -1 selects k / 2
  PaddingMode mode = PaddingMode::Reflect;
};

/// Cross-correlation of x [C x H x W] with weight [O x C x k x k] plus bias [O],
/// lowered to one GEMM over an im2col buffer.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dOptions& options = {}) {
  detail::require_rank(x, 3, "conv2d");
  detail::require_rank(weight, 4, "conv2d");
  const std::size_t channels = x.extent(0), height = x.extent(1), width = x.extent(2);
  const std::size_t out_channels = weight.extent(0), k = weight.extent(2);
  if (weight.extent(1) != channels || weight.extent(3) != k) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  if (k % 2 == 0) throw DimensionError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (options.stride == 0) throw ContractError("conv2d: stride must be >= 1");
  if (bias.numel() != out_channels) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.numel()) + " != " +
                         std::to_string(out_channels) + " output channels");
  }
  const long pad = options.padding < 0 ? static_cast<long>(k / 2) : options.padding;
  const long padded_h = static_cast<long>(height) + 2 * pad;
  const long padded_w = static_cast<long>(width) + 2 * pad;
  if (static_cast<long>(k) > padded_h || static_cast<long>(k) > padded_w) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + "x" + std::to_string(k) +
                         " larger than padded input " + std::to_string(padded_h) + "x" +
                         std::to_string(padded_w));
  }
  const std::size_t out_h = static_cast<std::size_t>(padded_h - static_cast<long>(k)) / options.stride + 1;
  const std::size_t out_w = static_cast<std::size_t>(padded_w - static_cast<long>(k)) / options.stride + 1;
  const std::size_t patch = channels * k * k;
  const std::size_t positions = out_h * out_w;

  // -1 marks a zero-padded tap.
  auto taps = std::make_shared<std::vector<std::int32_t>>(patch * positions);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        std::int32_t* dst = taps->data() + row * positions;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long sy = static_cast<long>(oy * options.stride + ky) - pad;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const long sx = static_cast<long>(ox * options.stride + kx) - pad;
            std::int32_t src = -1;
            if (options.mode == PaddingMode::Reflect) {
              src = static_cast<std::int32_t>((c * height + detail::reflect_index(sy, static_cast<long>(height))) * width +
                                              detail::reflect_index(sx, static_cast<long>(width)));
            } else if (sy >= 0 && sx >= 0 && sy < static_cast<long>(height) && sx < static_cast<long>(width)) {
              src = static_cast<std::int32_t>((c * height + static_cast<std::size_t>(sy)) * width +
                                              static_cast<std::size_t>(sx));
            }
            dst[oy * out_w + ox] = src;
          }
        }
      }
    }
  }
  auto cols = std::make_shared<std::vector<T>>(patch * positions);
  const auto xs = x.data();
  for (std::size_t i = 0; i < cols->size(); ++i) {
    const std::int32_t src = (*taps)[i];
    (*cols)[i] = src < 0 ? T{0} : xs[static_cast<std::size_t>(src)];
  }

  std::vector<T> out(out_channels * positions);
  detail::MapM<T> y(out.data(), out_channels, positions);
  y = detail::RowMajor<T>(detail::owned(weight.data().data(), out_channels, patch) *
                          detail::owned(cols->data(), patch, positions));
  for (std::size_t o = 0; o < out_channels; ++o) y.row(o).array() += bias[o];

  return detail::make_result<T>(
      {out_channels, out_h, out_w}, std::move(out), "conv2d", {x, weight, bias},
      [taps, cols, out_channels, patch, positions](detail::Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& w = *self.inputs[1];
        auto& b = *self.inputs[2];
        const detail::RowMajor<T> dy = detail::owned(self.grad.data(), out_channels, positions);
        if (w.requires_grad) {
          const detail::RowMajor<T> dw = dy * detail::owned(cols->data(), patch, positions).transpose();
          detail::MapM<T>(w.ensure_grad().data(), out_channels, patch) += dw;
        }
        if (b.requires_grad) {
          auto& db = b.ensure_grad();
          for (std::size_t o = 0; o < out_channels; ++o) db[o] += dy.row(o).sum();
        }
        if (!in.requires_grad) return;
        detail::RowMajor<T> dcols = detail::owned(w.data.data(), out_channels, patch).transpose() * dy;
        auto& dx = in.ensure_grad();
        const T* dc = dcols.data();
        for (std::size_t i = 0; i < taps->size(); ++i) {
          const std::int32_t src = (*taps)[i];
          if (src >= 0) dx[static_cast<std::size_t>(src)] += dc[i];
        }
      });
}

/// [C*s*s x H x W] -> [C x H*s x W*s]; channel c*s*s + dy*s + dx lands at
/// output offset (dy, dx) inside each s x s block.
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& x, std::size_t s) {
  detail::require_rank(x, 3, "depth_to_space");
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (s == 0 || cin % (s * s) != 0) {
    throw DimensionError("depth_to_space: " + std::to_string(cin) + " channels not divisible by " +
                         std::to_string(s * s));
  }
  const std::size_t cout = cin / (s * s);
  const std::size_t oh = h * s, ow = w * s;
  auto index = std::make_shared<std::vector<std::uint32_t>>(cout * oh * ow);
  for (std::size_t c = 0; c < cout; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t src_c = c * s * s + (y % s) * s + (xx % s);
        (*index)[(c * oh + y) * ow + xx] = static_cast<std::uint32_t>((src_c * h + y / s) * w + xx / s);
      }
    }
  }
  return gather(x, {cout, oh, ow}, std::move(index), "depth_to_space");
}

}  // namespace uwipt
