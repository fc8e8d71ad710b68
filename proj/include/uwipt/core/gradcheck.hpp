#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uwipt/core/ops.hpp"
#include "uwipt/core/rng.hpp"
#include "uwipt/core/tensor.hpp"

namespace uwipt {

/// Central-difference step and acceptance threshold for one precision.
struct GradcheckTolerance {
  double step;
  double max_rel_error;
  /// Gradients smaller than this are compared on an absolute scale.
  double magnitude_floor;
  /// Also scale the floor by the largest analytic gradient entry over all
  /// checked tensors, so each error is relative to their gradient magnitude.
  bool normwise;
};

template <typename T>
constexpr GradcheckTolerance default_tolerance() {
  if constexpr (sizeof(T) >= 8) {
    return {1e-5, 1e-6, 1e-6, false};
  } else {
    return {1e-3, 1e-3, 1e-6, true};
  }
}

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

struct GradcheckSample {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckResult {
  std::string group;
  std::vector<GradcheckSample> samples;
  double worst = 0.0;
  bool passed = true;
};

/// Objective sum_i w_i * out_i / n over an op's output; an empty weight list
/// means plain mean. The tape sees it through ordinary ops, the finite
/// differences evaluate it in double.
template <typename T>
struct Objective {
  std::function<Tensor<T>()> output;
  std::vector<double> weights;

  Tensor<T> tape_value() const {
    const Tensor<T> out = output();
    if (weights.empty()) return mean(out);
    std::vector<T> w(weights.begin(), weights.end());
    return mean(mul(out, Tensor<T>(out.shape(), std::move(w))));
  }

  double exact_value() const {
    NoGradGuard guard;
    const Tensor<T> out = output();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double w = weights.empty() ? 1.0 : static_cast<double>(static_cast<T>(weights[i]));
      acc += w * static_cast<double>(out[i]);
    }
    return acc / static_cast<double>(out.numel());
  }
};

namespace detail {

/// Central difference of `obj` in element `i` of `t`; the divisor uses the
/// perturbations actually representable in U.
template <typename U>
double central_difference(const Objective<U>& obj, Tensor<U>& t, std::size_t i, double step) {
  const U saved = t.data()[i];
  const U up = static_cast<U>(saved + step);
  const U down = static_cast<U>(saved - step);
  t.mutable_data()[i] = up;
  const double plus = obj.exact_value();
  t.mutable_data()[i] = down;
  const double minus = obj.exact_value();
  t.mutable_data()[i] = saved;
  return (plus - minus) / (static_cast<double>(up) - static_cast<double>(down));
}

template <typename T>
double max_abs_grad(const std::vector<Tensor<T>>& inputs) {
  double scale = 0.0;
  for (const auto& t : inputs) {
    if (!t.has_grad()) continue;
    for (T g : t.grad()) scale = std::max(scale, std::abs(static_cast<double>(g)));
  }
  return scale;
}

template <typename T, typename U>
GradcheckResult run_check(const std::string& group, const Objective<T>& objective, std::vector<Tensor<T>> inputs,
                          const Objective<U>& reference, std::vector<Tensor<U>> ref_inputs,
                          const std::vector<std::pair<std::size_t, std::size_t>>& coords, GradcheckTolerance tol) {
  for (auto& t : inputs) t.zero_grad();
  backward(objective.tape_value());
  GradcheckResult result;
  result.group = group;
  for (auto [ti, ei] : coords) {
    const auto& t = inputs.at(ti);
    GradcheckSample s;
    s.tensor = ti;
    s.index = ei;
    s.analytic = t.has_grad() ? static_cast<double>(t.grad()[ei]) : 0.0;
    s.numeric = central_difference(reference, ref_inputs.at(ti), ei, tol.step);
    result.samples.push_back(s);
  }
  const double floor = tol.normwise ? std::max(tol.magnitude_floor, max_abs_grad(inputs)) : tol.magnitude_floor;
  for (auto& s : result.samples) {
    s.rel_error = relative_error(s.analytic, s.numeric, floor);
    result.worst = std::max(result.worst, s.rel_error);
  }
  result.passed = std::isfinite(result.worst) && result.worst < tol.max_rel_error;
  for (auto& t : inputs) t.zero_grad();
  return result;
}

}  // namespace detail

/// Compares tape gradients of the objective against central differences at
/// the requested (tensor, element) coordinates. Inputs are perturbed in place
/// and restored afterwards.
template <typename T>
GradcheckResult check_gradients(const std::string& group, const Objective<T>& objective,
                                const std::vector<Tensor<T>>& inputs,
                                const std::vector<std::pair<std::size_t, std::size_t>>& coords,
                                GradcheckTolerance tol = default_tolerance<T>()) {
  return detail::run_check(group, objective, inputs, objective, inputs, coords, tol);
}

/// Tape gradients at precision T against central differences of a float64
/// shadow of the same computation (`ref_inputs` mirror `inputs` value for
/// value). `tol.step` applies to the shadow.
template <typename T>
GradcheckResult check_gradients_shadow(const std::string& group, const Objective<T>& objective,
                                       const std::vector<Tensor<T>>& inputs, const Objective<double>& reference,
                                       const std::vector<Tensor<double>>& ref_inputs,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& coords,
                                       GradcheckTolerance tol) {
  if (ref_inputs.size() != inputs.size()) throw ContractError("check_gradients_shadow: input lists differ");
  return detail::run_check(group, objective, inputs, reference, ref_inputs, coords, tol);
}

/// `count` random coordinates drawn from each input tensor.
template <typename T>
std::vector<std::pair<std::size_t, std::size_t>> sample_coords(const std::vector<Tensor<T>>& inputs,
                                                                std::size_t count, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::size_t n = inputs[t].numel();
    const std::size_t take = std::min(count, n);
    std::vector<std::size_t> picks(n);
    for (std::size_t i = 0; i < n; ++i) picks[i] = i;
    shuffle(picks, rng);
    for (std::size_t i = 0; i < take; ++i) coords.emplace_back(t, picks[i]);
  }
  return coords;
}

template <typename T>
std::vector<std::pair<std::size_t, std::size_t>> all_coords(const std::vector<Tensor<T>>& inputs) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) coords.emplace_back(t, i);
  }
  return coords;
}

}  // namespace uwipt
