#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A BasicTensor is a cheap handle onto shared storage. Data is immutable once
// an op has produced it; only gradient buffers (and parameters, through
// mutable_data()) change afterwards. Ops run eagerly. When a Tape is active on
// the calling thread and at least one input requires a gradient, the op
// appends a backward closure to that tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvalign/errors.hpp"

namespace mvalign {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <class T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

}  // namespace detail

template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{0}, std::vector<T>{}) {}

  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode<T>>()) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return BasicTensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static BasicTensor scalar(T value, bool requires_grad = false) {
    return BasicTensor(Shape{}, std::vector<T>{value}, requires_grad);
  }

  template <class Rng>
  static BasicTensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(dist(rng));
    return BasicTensor(std::move(shape), std::move(data), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Parameter updates and in-place initialisation only; never call on a tensor
  // that a recorded op still needs for its backward pass.
  std::span<T> mutable_data() { return node_->data; }
  T operator[](std::size_t i) const { return node_->data[i]; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->data.size() && numel() > 0; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  /// Independent copy with the same values and no gradient history.
  BasicTensor clone(bool requires_grad = false) const {
    return BasicTensor(shape(), node_->data, requires_grad);
  }

  template <class U>
  BasicTensor<U> cast(bool requires_grad = false) const {
    std::vector<U> out(node_->data.begin(), node_->data.end());
    return BasicTensor<U>(shape(), std::move(out), requires_grad);
  }

  bool same_storage(const BasicTensor& other) const { return node_ == other.node_; }

  const detail::NodePtr<T>& node() const { return node_; }

  explicit BasicTensor(detail::NodePtr<T> node) : node_(std::move(node)) {}

 private:
  detail::NodePtr<T> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Ordered record of differentiable ops. Single-threaded; activate with Tape::Scope.
template <class T>
class Tape {
 public:
  struct Op {
    std::string_view name;
    std::vector<detail::NodePtr<T>> inputs;
    detail::NodePtr<T> output;
    std::function<void()> backward;
  };

  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(active_) { active_ = &tape; }
    explicit Scope(std::nullptr_t) : previous_(active_) { active_ = nullptr; }
    ~Scope() { active_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() { return active_; }

  void record(Op op) { ops_.push_back(std::move(op)); }
  const std::vector<Op>& ops() const { return ops_; }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<Op> ops_;
  static inline thread_local Tape* active_ = nullptr;
};

/// Scope during which no op is recorded, whatever tape is active.
template <class T>
class NoGradScope {
 public:
  NoGradScope() : scope_(nullptr) {}

 private:
  typename Tape<T>::Scope scope_;
};

namespace detail {

template <class T>
inline void check_finite(const TensorNode<T>& node, std::string_view op) {
  for (const T v : node.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output " + shape_str(node.shape));
    }
  }
}

// Wraps a freshly computed result. `make_backward(out_node)` must return a
// callable that reads out_node->grad and accumulates into its inputs' grads;
// it is only invoked when the op is actually recorded.
template <class T, class MakeBackward>
BasicTensor<T> finish_op(std::string_view name, Shape shape, std::vector<T> data,
                         std::vector<NodePtr<T>> inputs, MakeBackward&& make_backward) {
  auto out = std::make_shared<TensorNode<T>>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  check_finite(*out, name);

  Tape<T>* tape = Tape<T>::active();
  const bool any_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const NodePtr<T>& n) { return n->requires_grad; });
  if (tape != nullptr && any_grad) {
    out->requires_grad = true;
    std::function<void()> bw = make_backward(out.get());
    tape->record({name, std::move(inputs), out, std::move(bw)});
  }
  return BasicTensor<T>(std::move(out));
}

}  // namespace detail

/// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
/// gradients of intermediate results are reset on every call.
template <class T>
void backward(const BasicTensor<T>& loss, Tape<T>& tape) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  const auto& ops = tape.ops();
  std::ptrdiff_t last = -1;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].output == loss.node()) last = static_cast<std::ptrdiff_t>(i);
  }
  if (last < 0) throw ContractError("backward: loss was not produced on this tape");

  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    auto& out = *ops[static_cast<std::size_t>(i)].output;
    out.grad.assign(out.data.size(), T(0));
  }
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    for (const auto& in : ops[static_cast<std::size_t>(i)].inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
  }
  loss.node()->grad[0] = T(1);
  for (std::ptrdiff_t i = last; i >= 0; --i) ops[static_cast<std::size_t>(i)].backward();
}

}  // namespace mvalign
