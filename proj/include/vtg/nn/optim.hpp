#pragma once

#include <vector>

#include "vtg/nn/autograd.hpp"

namespace vtg::nn {

template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 2e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Var<T>> params, Options options);

  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  int64_t steps() const { return t_; }

 private:
  std::vector<Var<T>> params_;
  Options options_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
};

// SGD with momentum and L2 weight decay folded into the gradient.
template <typename T>
class Sgd {
 public:
  struct Options {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
  };

  Sgd(std::vector<Var<T>> params, Options options);

  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }

 private:
  std::vector<Var<T>> params_;
  Options options_;
  std::vector<Tensor<T>> velocity_;
};

// Half-cosine decay from base_lr at step 0 to 0 at total_steps.
double cosine_lr(double base_lr, int64_t step, int64_t total_steps);

// Rescales all gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(const std::vector<Var<T>>& params, double max_norm);

}  // namespace vtg::nn
