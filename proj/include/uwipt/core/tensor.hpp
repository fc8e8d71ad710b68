#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "uwipt/core/error.hpp"

namespace uwipt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

/// One recorded operation. `backward` reads this node's grad and accumulates
/// into the grads of `inputs`.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means "no gradient"
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

/// Test hook: names an op whose backward rule is deliberately skewed so
/// verification harnesses can prove they detect a wrong gradient.
inline std::string& corrupted_backward_op() {
  static std::string name;
  return name;
}

}  // namespace detail

/// Whether newly created op results record a backward rule on this thread.
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the enclosing scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor handle. Copies share the underlying node, so a
/// parameter held in a model and in an optimizer list is the same storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    for (std::size_t extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be >= 1, got " + shape_str(shape));
    }
    if (shape.empty()) shape = {1};
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t extent(std::size_t axis) const { return node().shape.at(axis); }
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  /// Direct write access; reserved for optimizers and initializers.
  std::span<T> mutable_data() { return node().data; }
  const std::vector<T>& values() const { return node().data; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
  }
  T operator[](std::size_t i) const { return node().data[i]; }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }

  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() { node().grad.clear(); }

  const char* op_name() const { return node().op; }

  /// Same values, no history.
  Tensor detach() const { return Tensor(shape(), values(), false); }

  template <typename U>
  Tensor<U> cast(bool requires_grad) const {
    std::vector<U> out(numel());
    std::transform(node().data.begin(), node().data.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape(), std::move(out), requires_grad);
  }

  const NodePtr& node_ptr() const { return node_; }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  detail::Node<T>& node() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

namespace detail {

/// Builds an op result. The backward rule is attached only when grad mode is
/// on and some input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node_ptr();
  node.requires_grad = true;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.node_ptr());
  node.backward = std::move(backward);
  return out;
}

template <typename T>
void accumulate(Node<T>& node, std::span<const T> delta) {
  if (!node.requires_grad) return;
  auto& g = node.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace detail

/// Recorded operations reachable from a root, in topological order (inputs
/// before consumers). Each node appears once.
template <typename T>
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor<T>& root) {
    using NodeT = detail::Node<T>;
    std::unordered_set<const NodeT*> seen;
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(root.node_ptr().get(), 0);
    seen.insert(root.node_ptr().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        NodeT* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  const std::vector<detail::Node<T>*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<detail::Node<T>*> order_;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
/// every reachable requires_grad tensor, including leaves used more than once.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a tensor that is not connected to any trainable input");
  }
  ComputationTape<T> tape(loss);
  loss.node_ptr()->ensure_grad()[0] += T{1};
  const auto& order = tape.nodes();
  const std::string& corrupted = detail::corrupted_backward_op();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    if (!corrupted.empty() && corrupted == node->op) {
      for (auto& g : node->grad) g *= T{1.5};
    }
    node->backward(*node);
  }
}

}  // namespace uwipt
