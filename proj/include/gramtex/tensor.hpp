#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gramtex/error.hpp"

namespace gramtex {

enum class DType { f32, f64 };

std::string_view dtype_name(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Invokes f.template operator()<T>() with T = float or double according to dtype.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f.template operator()<float>();
  return f.template operator()<double>();
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

using Storage = std::variant<std::vector<float>, std::vector<double>>;

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward rule: reads self.grad and accumulates into the grads of self.inputs.
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  Storage value;
  std::optional<Storage> grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;
  std::string_view op = "leaf";

  DType dtype() const { return value.index() == 0 ? DType::f32 : DType::f64; }
  bool is_leaf() const { return !backward; }
};

Storage make_storage(DType dtype, std::size_t n, double fill = 0.0);

template <class T>
std::span<T> span_of(Storage& s) {
  return std::get<std::vector<T>>(s);
}
template <class T>
std::span<const T> span_of(const Storage& s) {
  return std::get<std::vector<T>>(s);
}

// Gradient buffer of a node, allocated zero-filled on first use.
template <class T>
std::span<T> grad_of(Node& n) {
  if (!n.grad) n.grad = make_storage(n.dtype(), shape_numel(n.shape));
  return span_of<T>(*n.grad);
}

}  // namespace detail

// Dense row-major array of float or double values. Copies share the underlying
// node; results of operations on tensors that require grad are recorded in a
// dynamic graph which backward() linearizes into a Tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::span<const double> values, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            DType dtype = DType::f32);
  template <class T>
  static Tensor from_vector(Shape shape, std::vector<T> values);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const;

  template <class T>
  std::span<const T> data() const;
  // Mutable access is reserved for explicit update operations (optimizers,
  // clamping, parameter initialization); it does not touch the graph.
  template <class T>
  std::span<T> mutable_data();

  double item() const;
  double value_at(std::size_t flat_index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  // Gradient as a standalone tensor (copy); throws ContractError if absent.
  Tensor grad() const;
  template <class T>
  std::span<const T> grad_data() const;
  void zero_grad();

  // Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }
  Tensor to(DType dtype) const;
  Tensor reshape(Shape shape) const;

  std::string_view op_name() const;

  const detail::NodePtr& node() const { return node_; }
  static Tensor from_node(detail::NodePtr node);

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

template <class T>
Tensor Tensor::from_vector(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("from_vector: shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <class T>
std::span<const T> Tensor::data() const {
  if (dtype() != dtype_of<T>()) {
    throw ContractError(std::string("tensor dtype is ") + std::string(dtype_name(dtype())));
  }
  return detail::span_of<T>(node_->value);
}

template <class T>
std::span<T> Tensor::mutable_data() {
  if (dtype() != dtype_of<T>()) {
    throw ContractError(std::string("tensor dtype is ") + std::string(dtype_name(dtype())));
  }
  return detail::span_of<T>(node_->value);
}

template <class T>
std::span<const T> Tensor::grad_data() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return detail::span_of<T>(*node_->grad);
}

// Gradient recording is on by default; the guard disables it for its scope on
// the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered record of the primitive applications reachable from a
// root tensor. Entry k only consumes leaves or results of entries < k.
class Tape {
 public:
  struct Entry {
    detail::NodePtr result;
    std::string_view rule;
  };

  static Tape record(const Tensor& root);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Seeds d(root)/d(root) = 1 and runs every backward rule once in reverse
  // order. Intermediate gradients are released after use; leaves keep theirs.
  void replay(const Tensor& root) const;

 private:
  std::vector<Entry> entries_;
};

// Populates gradients on every requires-grad leaf reachable from a scalar loss.
void backward(const Tensor& loss);

namespace detail {

// Builds a result tensor. When recording is enabled and any input requires grad,
// the inputs and backward rule are attached; otherwise the result is a plain leaf.
Tensor make_result(Shape shape, Storage value, std::vector<Tensor> inputs, std::string_view op,
                   BackwardFn backward);

}  // namespace detail

}  // namespace gramtex
