#include "glyphzero/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace gz {

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape) : n_(std::make_shared<detail::Node<T>>()) {
  n_->shape = std::move(shape);
  n_->value.assign(static_cast<size_t>(numel_of(n_->shape)), T(0));
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, std::vector<T> data)
    : n_(std::make_shared<detail::Node<T>>()) {
  n_->shape = std::move(shape);
  if (static_cast<int64_t>(data.size()) != numel_of(n_->shape)) {
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(n_->shape));
  }
  n_->value = std::move(data);
}

template <typename T>
Tensor<T> Tensor<T>::full(const std::vector<int>& shape, T v) {
  Tensor t(shape);
  std::fill(t.data().begin(), t.data().end(), v);
  return t;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool b) {
  if (!n_->leaf) throw std::logic_error("set_requires_grad: only leaf tensors can be tracked");
  n_->requires_grad = b;
  if (b) n_->ensure_grad();
  return *this;
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
  n_->ensure_grad();
  return n_->grad;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  n_->grad.assign(n_->value.size(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor has shape " + shape_str(shape()));
  return n_->value[0];
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) {
    throw std::invalid_argument("backward: requires a scalar, got shape " + shape_str(shape()));
  }
  using NodeT = detail::Node<T>;

  // Iterative post-order DFS; reversing it yields root-first order. Traversal
  // order depends only on graph structure, so accumulation order is fixed.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, size_t>> stack;
  stack.push_back({n_.get(), 0});
  visited.insert(n_.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeT* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());

  // Intermediate grads are scratch per sweep; leaf grads persist.
  for (NodeT* node : order) {
    if (!node->leaf) {
      node->grad.assign(node->value.size(), T(0));
    } else {
      node->ensure_grad();
    }
  }
  n_->grad[0] += T(1);
  for (NodeT* node : order) {
    if (node->backprop) node->backprop(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gz
