#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uwipt/core/gradcheck.hpp"
#include "uwipt/core/ops.hpp"
#include "uwipt/data/image.hpp"
#include "uwipt/model/ipt.hpp"

namespace uwipt {

struct GradcheckOptions {
  std::size_t size = 8;      // input side length for the model check
  std::size_t layers = 1;    // encoder and decoder depth
  std::size_t samples = 5;   // coordinates per parameter group
  std::size_t op_trials = 20;
  std::uint64_t seed = 0;
};

/// Small model used by the end-to-end check.
inline ModelConfig gradcheck_model_config(const GradcheckOptions& opt) {
  ModelConfig c;
  c.channels = 4;
  c.patch = 2;
  c.encoder_layers = opt.layers;
  c.decoder_layers = opt.layers;
  c.attn_heads = 2;
  c.ffn_multiplier = 2;
  c.max_tokens = std::max<std::size_t>(64, (opt.size / 2) * (opt.size / 2));
  return c;
}

namespace detail {

template <typename T>
Tensor<T> random_input(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

/// Values at least `margin` away from zero, so a kink stays outside the step.
template <typename T>
Tensor<T> random_nonzero(Shape shape, Rng& rng, double margin = 0.05) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(margin, 1.0);
    x = static_cast<T>(rng.uniform() < 0.5 ? -m : m);
  }
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& x : w) x = static_cast<double>(static_cast<T>(rng.uniform(-1.0, 1.0)));
  return w;
}

template <typename T>
struct OpCase {
  std::string name;
  std::function<std::vector<Tensor<T>>(Rng&)> inputs;
  std::function<Tensor<T>(const std::vector<Tensor<T>>&)> fn;
};

template <typename T>
std::vector<OpCase<T>> op_cases() {
  using V = std::vector<Tensor<T>>;
  auto rin = [](Shape s) { return [s](Rng& r) { return V{random_input<T>(s, r)}; }; };
  Conv2dOptions zero_pad;
  zero_pad.mode = PaddingMode::Zero;
  Conv2dOptions strided;
  strided.stride = 2;
  auto conv_inputs = [](Rng& r) {
    return V{random_input<T>({2, 4, 4}, r), random_input<T>({3, 2, 3, 3}, r), random_input<T>({3}, r)};
  };
  return {
      {"add", [](Rng& r) { return V{random_input<T>({3, 4}, r), random_input<T>({3, 4}, r)}; },
       [](const V& in) { return add(in[0], in[1]); }},
      {"sub", [](Rng& r) { return V{random_input<T>({3, 4}, r), random_input<T>({3, 4}, r)}; },
       [](const V& in) { return sub(in[0], in[1]); }},
      {"mul", [](Rng& r) { return V{random_input<T>({3, 4}, r), random_input<T>({3, 4}, r)}; },
       [](const V& in) { return mul(in[0], in[1]); }},
      {"scale", rin({3, 4}), [](const V& in) { return scale(in[0], T{-1.75}); }},
      {"relu", [](Rng& r) { return V{random_nonzero<T>({3, 4}, r)}; }, [](const V& in) { return relu(in[0]); }},
      {"gelu", rin({3, 4}), [](const V& in) { return gelu(in[0]); }},
      {"sum", rin({3, 4}), [](const V& in) { return sum(in[0]); }},
      {"mean", rin({3, 4}), [](const V& in) { return mean(in[0]); }},
      {"l1_loss",
       [](Rng& r) {
         auto a = random_nonzero<T>({3, 4}, r, 0.1);
         auto b = Tensor<T>::zeros({3, 4}, true);
         return V{a, b};
       },
       [](const V& in) { return l1_loss(in[0], in[1]); }},
      {"reshape", rin({3, 4}), [](const V& in) { return reshape(in[0], {2, 6}); }},
      {"transpose", rin({3, 5}), [](const V& in) { return transpose(in[0]); }},
      {"slice_cols", rin({3, 6}), [](const V& in) { return slice_cols(in[0], 2, 3); }},
      {"slice_rows", rin({5, 3}), [](const V& in) { return slice_rows(in[0], 1, 3); }},
      {"concat_cols", [](Rng& r) { return V{random_input<T>({3, 2}, r), random_input<T>({3, 4}, r)}; },
       [](const V& in) { return concat_cols(in); }},
      {"expand_rows", rin({4}), [](const V& in) { return expand_rows(in[0], 3); }},
      {"matmul", [](Rng& r) { return V{random_input<T>({3, 4}, r), random_input<T>({4, 2}, r)}; },
       [](const V& in) { return matmul(in[0], in[1]); }},
      {"matmul_nt", [](Rng& r) { return V{random_input<T>({3, 4}, r), random_input<T>({5, 4}, r)}; },
       [](const V& in) { return matmul_nt(in[0], in[1]); }},
      {"linear",
       [](Rng& r) { return V{random_input<T>({3, 4}, r), random_input<T>({4, 2}, r), random_input<T>({2}, r)}; },
       [](const V& in) { return linear(in[0], in[1], in[2]); }},
      {"softmax", [](Rng& r) { return V{random_input<T>({3, 5}, r, -3, 3)}; },
       [](const V& in) { return softmax(in[0]); }},
      {"layernorm",
       [](Rng& r) { return V{random_input<T>({3, 8}, r), random_input<T>({8}, r), random_input<T>({8}, r)}; },
       [](const V& in) { return layernorm(in[0], in[1], in[2]); }},
      {"conv2d_reflect", conv_inputs, [](const V& in) { return conv2d(in[0], in[1], in[2]); }},
      {"conv2d_zero", conv_inputs, [zero_pad](const V& in) { return conv2d(in[0], in[1], in[2], zero_pad); }},
      {"conv2d_stride2", conv_inputs, [strided](const V& in) { return conv2d(in[0], in[1], in[2], strided); }},
      {"depth_to_space", rin({8, 2, 3}), [](const V& in) { return depth_to_space(in[0], 2); }},
      {"patch_tokens", rin({2, 4, 6}),
       [](const V& in) { return unflatten_patches(flatten_patches(in[0], 2)); }},
  };
}

}  // namespace detail

/// Every differentiable op on `trials` random instances; one result per op
/// holding the worst error over all instances.
template <typename T>
std::vector<GradcheckResult> op_gradchecks(const GradcheckOptions& opt,
                                           GradcheckTolerance tol = default_tolerance<T>()) {
  std::vector<GradcheckResult> results;
  const Rng root = Rng(opt.seed).split("op-gradcheck");
  for (const auto& c : detail::op_cases<T>()) {
    GradcheckResult merged;
    merged.group = "op." + c.name;
    Rng rng = root.split(c.name);
    for (std::size_t trial = 0; trial < opt.op_trials; ++trial) {
      auto inputs = c.inputs(rng);
      const auto fn = c.fn;
      Objective<T> obj{[inputs, fn] { return fn(inputs); }, {}};
      {
        NoGradGuard g;
        obj.weights = detail::random_weights<T>(fn(inputs).numel(), rng);
      }
      auto r = check_gradients<T>(merged.group, obj, inputs, all_coords(inputs), tol);
      merged.worst = std::max(merged.worst, r.worst);
      merged.passed = merged.passed && r.passed;
      merged.samples.insert(merged.samples.end(), r.samples.begin(), r.samples.end());
    }
    results.push_back(std::move(merged));
  }
  return results;
}

/// Redraws every parameter uniformly in [-amplitude, amplitude]. At the
/// default initialisation some gradients (task embeddings) sit near 1e-8,
/// below what central differences resolve; an O(1) point exercises every
/// backward rule with gradients of comparable size.
template <typename T>
void randomize_parameters(IptModel<T>& model, std::uint64_t seed, double amplitude = 0.5) {
  Rng rng = Rng(seed).split("gradcheck-point");
  for (auto& [name, t] : model.named_parameters()) {
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-amplitude, amplitude));
  }
}

/// Tolerance for float32 tape gradients checked against float64 shadow
/// differences.
constexpr GradcheckTolerance shadow_tolerance() { return {1e-5, 1e-3, 1e-6, true}; }

/// End-to-end check of mean(model(x, task)) on a size x size input. Every
/// parameter group is sampled at `samples` coordinates, through a task that
/// uses it. With `shadow`, the finite differences come from a float64 copy
/// of the model instead of the model itself.
template <typename T>
std::vector<GradcheckResult> model_gradchecks(const IptModel<T>& model, const GradcheckOptions& opt,
                                              GradcheckTolerance tol = default_tolerance<T>(), bool shadow = false) {
  Rng rng = Rng(opt.seed).split("model-gradcheck");
  Tensor<T> x = detail::random_input<T>({3, opt.size, opt.size}, rng, 0.0, 1.0);
  x.set_requires_grad(false);
  const IptModel<double> ref = model.template cast<double>();
  const Tensor<double> x_ref = x.template cast<double>(false);

  std::map<std::string, std::vector<std::pair<std::string, Tensor<T>>>> groups;
  for (auto& p : model.named_parameters()) groups[parameter_group(p.first)].push_back(p);
  std::map<std::string, Tensor<double>> ref_params;
  for (auto& p : ref.named_parameters()) ref_params.emplace(p.first, p.second);

  // Shared groups are exercised by the first task; task-specific ones by the
  // task that owns them.
  auto task_for_group = [&](const std::string& group) -> std::optional<TaskId> {
    for (TaskId t : model.config().tasks) {
      const std::string route(task_name(model.config().route(t)));
      const std::string owner(task_name(model.config().embedding_owner(t)));
      if (group == "head." + route || group == "tail." + route || group == "task_embedding." + owner) return t;
    }
    if (group.rfind("head.", 0) == 0 || group.rfind("tail.", 0) == 0 || group.rfind("task_embedding.", 0) == 0) {
      return std::nullopt;
    }
    return model.config().tasks.front();
  };

  std::vector<GradcheckResult> results;
  for (const auto& [group, params] : groups) {
    const auto task = task_for_group(group);
    if (!task) continue;
    std::vector<Tensor<T>> inputs;
    std::vector<Tensor<double>> ref_inputs;
    std::vector<std::size_t> sizes;
    for (const auto& p : params) {
      inputs.push_back(p.second);
      ref_inputs.push_back(ref_params.at(p.first));
      sizes.push_back(p.second.numel());
    }
    std::size_t total = 0;
    for (auto s : sizes) total += s;
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    std::vector<std::size_t> flat(total);
    for (std::size_t i = 0; i < total; ++i) flat[i] = i;
    Rng pick = rng.split(group);
    shuffle(flat, pick);
    for (std::size_t k = 0; k < std::min(opt.samples, total); ++k) {
      std::size_t idx = flat[k], t = 0;
      while (idx >= sizes[t]) idx -= sizes[t++];
      coords.emplace_back(t, idx);
    }
    const TaskId tk = *task;
    Objective<T> obj{[&model, x, tk] { return model.forward(x, tk); }, {}};
    if (shadow) {
      Objective<double> ref_obj{[&ref, x_ref, tk] { return ref.forward(x_ref, tk); }, {}};
      results.push_back(check_gradients_shadow<T>(group, obj, inputs, ref_obj, ref_inputs, coords, tol));
    } else {
      results.push_back(check_gradients<T>(group, obj, inputs, coords, tol));
    }
  }
  return results;
}

}  // namespace uwipt
