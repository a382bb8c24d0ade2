#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace audiomod::nn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One recorded value. Nodes created while grad mode is on and at least one
// input requires grad are stamped with a tape position; backward replays the
// reachable nodes in strictly decreasing tape position.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t tape_pos = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

std::uint64_t next_tape_position();

}  // namespace detail

bool grad_enabled();

// Disables recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Shared handle to a dense row-major array with an optional gradient.
// Copies alias the same storage; use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad();

  // New leaf holding a copy of the values, off the tape.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls.
  void backward() const;

  const std::shared_ptr<NodeType>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<NodeType> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<NodeType> node_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  loss.backward();
}

// Creates an op output. Records a backward closure when grad mode is on and
// any input requires grad; otherwise returns a plain leaf.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<Tensor<T>> inputs, const char* op,
                      std::function<void(detail::Node<T>&)> backward_fn);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(detail::Node<T>&)> backward_fn);

// Learnable tensor with a unique dotted path, e.g. "stage1.block0.conv1.w".
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

}  // namespace audiomod::nn
