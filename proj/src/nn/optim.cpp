#include "vtg/nn/optim.hpp"

#include <cmath>
#include <numbers>

namespace vtg::nn {

template <typename T>
Adam<T>::Adam(std::vector<Var<T>> params, Options options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const T step_size = static_cast<T>(options_.lr / bc1);
  const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(options_.eps);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.empty()) continue;
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
Sgd<T>::Sgd(std::vector<Var<T>> params, Options options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) velocity_.emplace_back(p->value.shape());
}

template <typename T>
void Sgd<T>::step() {
  const T lr = static_cast<T>(options_.lr);
  const T mom = static_cast<T>(options_.momentum);
  const T wd = static_cast<T>(options_.weight_decay);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.empty()) continue;
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* vel = velocity_[i].data();
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      vel[j] = mom * vel[j] + g[j] + wd * w[j];
      w[j] -= lr * vel[j];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

double cosine_lr(double base_lr, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
double clip_grad_norm(const std::vector<Var<T>>& params, double max_norm) {
  double total = 0;
  for (const auto& p : params)
    for (T g : p->grad.storage()) total += static_cast<double>(g) * g;
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& p : params)
      for (auto& g : p->grad.storage()) g *= factor;
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template class Sgd<float>;
template class Sgd<double>;
template double clip_grad_norm<float>(const std::vector<Var<float>>&, double);
template double clip_grad_norm<double>(const std::vector<Var<double>>&, double);

}  // namespace vtg::nn
