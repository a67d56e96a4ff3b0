#pragma once

#include <functional>
#include <vector>

#include "vtg/diffusion/schedule.hpp"
#include "vtg/nn/autograd.hpp"

namespace vtg::diffusion {

template <typename T>
using DenoiseFn = std::function<nn::Var<T>(const nn::Var<T>& x, const std::vector<int>& t, const nn::Var<T>& context)>;

template <typename T>
struct EpsLossBatch {
  Tensor<T> z0;           // [N, C, h, w]
  std::vector<int> t;     // per item, in [1, T]
  Tensor<T> eps;          // same shape as z0
  Tensor<T> mask;         // [N, 1, h, w] latent mask or empty
  Tensor<T> cond_map;     // [N, C', h, w] concatenated conditioning or empty
};

// Mean over kept latent elements of (eps - eps_theta([z_t, cond_map], t, context))^2.
template <typename T>
nn::Var<T> eps_loss(const DenoiseFn<T>& model, const EpsLossBatch<T>& batch, const nn::Var<T>& context,
                    const NoiseSchedule& sched);

// Fills batch.t ~ U{1..T} and batch.eps ~ N(0, 1) from streams keyed by (seed, step).
template <typename T>
void draw_timesteps_and_noise(EpsLossBatch<T>& batch, uint64_t seed, uint64_t step, const NoiseSchedule& sched);

}  // namespace vtg::diffusion
