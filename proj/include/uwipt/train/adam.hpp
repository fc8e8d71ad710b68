#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uwipt/core/error.hpp"
#include "uwipt/core/tensor.hpp"

namespace uwipt {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: betas must lie in [0, 1)");
    }
    if (learning_rate < 0.0) throw ConfigError("adam: learning rate must be >= 0");
    if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
  }
};

/// First and second moments per parameter, zero-initialized, and the step count.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update over `params`. Every listed parameter must
/// carry a gradient.
template <typename T>
void adam_step(const std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), T{0});
      state.v.emplace_back(p.numel(), T{0});
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: parameter list changed between steps");
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].second;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = cfg.beta1 * static_cast<double>(m[k]) + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * static_cast<double>(v[k]) + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double step = cfg.learning_rate * (mk / bc1) / (std::sqrt(vk / bc2) + cfg.eps);
      w[k] = static_cast<T>(static_cast<double>(w[k]) - step);
    }
  }
}

}  // namespace uwipt
