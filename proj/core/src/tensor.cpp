#include "audiomod/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "audiomod/errors.hpp"

namespace audiomod::nn {
namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_tape_counter = 0;

template <typename T>
bool any_requires_grad(const std::vector<Tensor<T>>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>& t) { return t.defined() && t.requires_grad(); });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::uint64_t detail::next_tape_position() { return ++t_tape_counter; }

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<NodeType>()) {
  const auto n = shape_numel(shape);
  node_->shape = std::move(shape);
  node_->value.assign(n, fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<NodeType>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
int Tensor<T>::dim(int axis) const {
  const int n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) throw ShapeError("axis out of range for shape " + shape_str(shape()));
  return node_->shape[static_cast<size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <typename T>
void Tensor<T>::backward() const {
  if (!defined()) throw ContractError("backward on undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) throw ContractError("loss is not on the tape");

  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> seen;
  std::vector<NodeType*> stack{node_.get()};
  while (!stack.empty()) {
    NodeType* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad) stack.push_back(in.get());
    }
  }
  // Reverse tape order: every consumer runs before the nodes it read.
  std::sort(order.begin(), order.end(),
            [](const NodeType* a, const NodeType* b) { return a->tape_pos > b->tape_pos; });

  // Each op allocates its inputs' gradients on first write; an intermediate
  // gradient is released as soon as its own backward has run.
  for (NodeType* n : order) {
    if (!n->is_leaf()) std::vector<T>().swap(n->grad);
  }
  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (NodeType* n : order) {
    if (n->is_leaf()) continue;
    n->ensure_grad();
    n->backward_fn(*n);
    std::vector<T>().swap(n->grad);
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(detail::Node<T>&)> backward_fn) {
  auto node = std::make_shared<detail::Node<T>>();
  if (shape_numel(shape) != value.size()) {
    throw ShapeError(std::string(op) + ": result size does not match " + shape_str(shape));
  }
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled() && any_requires_grad(inputs)) {
    node->requires_grad = true;
    node->tape_pos = detail::next_tape_position();
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (in.defined()) node->inputs.push_back(in.node());
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<Tensor<T>> inputs, const char* op,
                      std::function<void(detail::Node<T>&)> backward_fn) {
  return make_result<T>(std::move(shape), std::move(value), std::vector<Tensor<T>>(inputs), op,
                        std::move(backward_fn));
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   const char*, std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&, const char*,
                                    std::function<void(detail::Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, std::initializer_list<Tensor<float>>,
                                   const char*, std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::initializer_list<Tensor<double>>, const char*,
                                    std::function<void(detail::Node<double>&)>);

}  // namespace audiomod::nn
