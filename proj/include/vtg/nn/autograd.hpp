#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vtg/core/tensor.hpp"

namespace vtg::nn {

// A value in the computation graph. Leaves created with `parameter` keep
// their gradient across backward passes until the optimizer clears it.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Gradient buffer, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

bool grad_enabled() noexcept;

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto node = constant(std::move(value));
  node->requires_grad = true;
  return node;
}

// Creates an op output. Parents and the backward closure are dropped when no
// parent needs a gradient or recording is disabled.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!grad_enabled()) return node;
  bool needs = false;
  for (const auto& p : parents) needs = needs || (p && p->requires_grad);
  if (!needs) return node;
  node->requires_grad = true;
  node->parents = std::move(parents);
  node->backward = std::move(backward);
  return node;
}

// Reverse-mode sweep from `root`, seeded with ones (or `seed`).
template <typename T>
void backward(const Var<T>& root);
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed);

}  // namespace vtg::nn
