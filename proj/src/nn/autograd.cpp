#include "vtg/nn/autograd.hpp"

#include <unordered_set>

namespace vtg::nn {
namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  require(root && root->requires_grad, "backward: root does not require a gradient");
  require(seed.shape() == root->value.shape(), "backward: seed shape mismatch");

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& g = root->grad_buffer();
  for (int64_t i = 0; i < g.numel(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // Intermediate results release their buffers; leaves keep gradients.
  for (Node<T>* node : order) {
    if (node->backward) {
      node->grad = Tensor<T>();
    }
  }
}

template <typename T>
void backward(const Var<T>& root) {
  backward(root, Tensor<T>(root->value.shape(), T(1)));
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);
template void backward<float>(const Var<float>&, const Tensor<float>&);
template void backward<double>(const Var<double>&, const Tensor<double>&);

}  // namespace vtg::nn
