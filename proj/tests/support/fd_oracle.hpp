#pragma once

// Test-only finite-difference oracle. It only ever runs forward passes and
// scalarizes outputs itself, so it shares no code with the backward rules.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "uwipt/core/ops.hpp"
#include "uwipt/core/rng.hpp"

namespace fd {

template <typename T>
uwipt::Tensor<T> random_tensor(uwipt::Shape shape, uwipt::Rng& rng, double lo = -1.0, double hi = 1.0,
                               bool requires_grad = true) {
  std::vector<T> data(uwipt::shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  return uwipt::Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

/// Values with |v| >= margin, so kinks (relu, |.|) stay out of step range.
template <typename T>
uwipt::Tensor<T> random_away_from_zero(uwipt::Shape shape, uwipt::Rng& rng, double margin = 0.05) {
  std::vector<T> data(uwipt::shape_numel(shape));
  for (auto& v : data) {
    const double m = rng.uniform(margin, 1.0);
    v = static_cast<T>(rng.uniform() < 0.5 ? -m : m);
  }
  return uwipt::Tensor<T>(std::move(shape), std::move(data), true);
}

struct Report {
  double worst_rel = 0.0;
  std::size_t checked = 0;
};

/// Scalarizes fn's output as sum_i w_i * out_i with fixed random weights,
/// takes tape gradients, and compares each against a central difference.
template <typename T>
Report compare(const std::function<uwipt::Tensor<T>(const std::vector<uwipt::Tensor<T>>&)>& fn,
               std::vector<uwipt::Tensor<T>> inputs, double step, double floor, uwipt::Rng& rng,
               std::size_t max_per_input = 1000000) {
  const auto probe = [&] {
    uwipt::NoGradGuard g;
    return fn(inputs);
  }();
  std::vector<double> weights(probe.numel());
  for (auto& w : weights) w = rng.uniform(-1.0, 1.0);
  auto scalarize = [&](const uwipt::Tensor<T>& out) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += weights[i] * static_cast<double>(out[i]);
    return acc;
  };

  for (auto& t : inputs) t.zero_grad();
  {
    std::vector<T> w(weights.begin(), weights.end());
    const auto out = fn(inputs);
    uwipt::backward(uwipt::sum(uwipt::mul(out, uwipt::Tensor<T>(out.shape(), w))));
  }

  Report report;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::size_t n = std::min(t.numel(), max_per_input);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = (t.numel() == n) ? i : rng.below(t.numel());
      const double analytic = t.has_grad() ? static_cast<double>(t.grad()[idx]) : 0.0;
      const T saved = t.data()[idx];
      const T up = static_cast<T>(saved + step), down = static_cast<T>(saved - step);
      double plus, minus;
      {
        uwipt::NoGradGuard g;
        t.mutable_data()[idx] = up;
        plus = scalarize(fn(inputs));
        t.mutable_data()[idx] = down;
        minus = scalarize(fn(inputs));
        t.mutable_data()[idx] = saved;
      }
      const double numeric = (plus - minus) / (static_cast<double>(up) - static_cast<double>(down));
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      report.worst_rel = std::max(report.worst_rel, std::abs(analytic - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace fd
