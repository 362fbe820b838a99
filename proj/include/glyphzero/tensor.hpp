#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gz {

std::string shape_str(const std::vector<int>& shape);
int64_t numel_of(const std::vector<int>& shape);

namespace detail {

// One vertex of the differentiation graph. Nodes are created by the op
// functions in ops.hpp; leaves are created directly through Tensor.
template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // same length as value once allocated
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

bool grad_enabled();

}  // namespace detail

// Scoped guard that disables graph construction; ops executed under it
// produce plain leaf results. Used for eval forwards.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense n-dimensional array with optional gradient tracking. Value semantics
// over a shared node: copies alias the same storage. Scalar type T is float
// for training and double for the gradient-check suites.
template <typename T>
class Tensor {
 public:
  Tensor() : n_(std::make_shared<detail::Node<T>>()) {}
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<T> data);

  static Tensor zeros(const std::vector<int>& shape) { return Tensor(shape); }
  static Tensor full(const std::vector<int>& shape, T v);

  const std::vector<int>& shape() const { return n_->shape; }
  int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }
  std::vector<T>& data() { return n_->value; }
  const std::vector<T>& data() const { return n_->value; }

  bool requires_grad() const { return n_->requires_grad; }
  // Leaf tensors only; allocates a zero grad buffer so unused leaves report
  // an all-zero gradient after backward().
  Tensor& set_requires_grad(bool b);
  std::vector<T>& grad();
  const std::vector<T>& grad() const;
  void zero_grad();

  // Scalar tensors only.
  T item() const;

  // Reverse-mode sweep from a scalar. Gradients of intermediate nodes are
  // reset per call; leaf gradients accumulate until zero_grad().
  void backward();

  std::shared_ptr<detail::Node<T>>& node() { return n_; }
  const std::shared_ptr<detail::Node<T>>& node() const { return n_; }

 private:
  std::shared_ptr<detail::Node<T>> n_;
};

// A named trainable tensor. Names are unique within a model and key the
// checkpoint entries. no_decay marks norm scales/shifts and prelu slopes,
// which are excluded from weight decay.
template <typename T>
struct Parameter {
  Tensor<T> tensor;
  std::string name;
  bool no_decay = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gz
