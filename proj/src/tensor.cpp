#include "gramtex/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace gramtex {

std::string_view dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Storage make_storage(DType dtype, std::size_t n, double fill) {
  if (dtype == DType::f32) return std::vector<float>(n, static_cast<float>(fill));
  return std::vector<double>(n, fill);
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void require_defined(const detail::NodePtr& node) {
  if (!node) throw ContractError("operation on an undefined tensor");
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  auto node = std::make_shared<detail::Node>();
  node->value = detail::make_storage(dtype, shape_numel(shape), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("from_values: shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  if (dtype == DType::f64) return from_vector(std::move(shape), std::vector<double>(values.begin(), values.end()));
  std::vector<float> v(values.size());
  std::transform(values.begin(), values.end(), v.begin(), [](double x) { return static_cast<float>(x); });
  return from_vector(std::move(shape), std::move(v));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

const Shape& Tensor::shape() const {
  require_defined(node_);
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

DType Tensor::dtype() const {
  require_defined(node_);
  return node_->dtype();
}

double Tensor::value_at(std::size_t i) const {
  return dispatch(dtype(), [&]<class T>() { return static_cast<double>(data<T>()[i]); });
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return value_at(0);
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<class T>() {
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

bool Tensor::requires_grad() const {
  require_defined(node_);
  return node_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool on) {
  require_defined(node_);
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const {
  require_defined(node_);
  return node_->is_leaf();
}

bool Tensor::has_grad() const {
  require_defined(node_);
  return node_->grad.has_value();
}

Tensor Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = *node_->grad;
  return Tensor(std::move(node));
}

void Tensor::zero_grad() {
  require_defined(node_);
  node_->grad.reset();
}

Tensor Tensor::detach() const {
  require_defined(node_);
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::to(DType target) const {
  if (dtype() == target) return detach();
  auto values = to_vector();
  return from_values(shape(), values, target);
}

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw DimensionError("reshape " + shape_string(shape()) + " -> " + shape_string(new_shape) +
                         " changes element count");
  }
  Shape old_shape = shape();
  return detail::make_result(new_shape, node_->value, {*this}, "reshape", [](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    dispatch(self.dtype(), [&]<class T>() {
      auto g = detail::span_of<T>(*self.grad);
      auto gi = detail::grad_of<T>(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
  });
}

std::string_view Tensor::op_name() const {
  require_defined(node_);
  return node_->op;
}

Tensor Tensor::from_node(detail::NodePtr node) { return Tensor(std::move(node)); }

namespace detail {

Tensor make_result(Shape shape, Storage value, std::vector<Tensor> inputs, std::string_view op,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any && grad_enabled()) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

Tape Tape::record(const Tensor& root) {
  require_defined(root.node());
  Tape tape;
  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    if (!node->is_leaf()) tape.entries_.push_back({node, node->op});
    stack.pop_back();
  }
  return tape;
}

void Tape::replay(const Tensor& root) const {
  auto& r = *root.node();
  r.grad = detail::make_storage(r.dtype(), shape_numel(r.shape), 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto& node = *it->result;
    if (!node.grad) continue;
    node.backward(node);
    node.grad.reset();
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("loss does not depend on any tensor that requires grad");
  if (loss.is_leaf()) {
    auto& n = *loss.node();
    n.grad = detail::make_storage(n.dtype(), 1, 1.0);
    return;
  }
  Tape::record(loss).replay(loss);
}

}  // namespace gramtex
