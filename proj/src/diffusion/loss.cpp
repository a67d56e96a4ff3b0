#include "vtg/diffusion/loss.hpp"

#include <algorithm>
#include <cmath>

#include "vtg/nn/ops.hpp"

namespace vtg::diffusion {

template <typename T>
nn::Var<T> eps_loss(const DenoiseFn<T>& model, const EpsLossBatch<T>& b, const nn::Var<T>& context,
                    const NoiseSchedule& sched) {
  require(b.z0.rank() == 4, "eps_loss expects latents [N, C, h, w]");
  const int64_t N = b.z0.dim(0), C = b.z0.dim(1), h = b.z0.dim(2), w = b.z0.dim(3);
  require(b.eps.shape() == b.z0.shape(), "eps_loss: noise shape mismatch");
  require(static_cast<int64_t>(b.t.size()) == N, "eps_loss: one timestep per item");
  if (!b.mask.empty())
    require(b.mask.shape() == Shape({N, 1, h, w}),
            "latent mask " + shape_string(b.mask.shape()) + " does not match latent " + shape_string(b.z0.shape()));
  if (!b.cond_map.empty())
    require(b.cond_map.rank() == 4 && b.cond_map.dim(0) == N && b.cond_map.dim(2) == h && b.cond_map.dim(3) == w,
            "conditioning map " + shape_string(b.cond_map.shape()) + " does not match latent " + shape_string(b.z0.shape()));

  const int64_t Cc = b.cond_map.empty() ? 0 : b.cond_map.dim(1);
  const int64_t hw = h * w;
  Tensor<T> x({N, C + Cc, h, w});
  for (int64_t n = 0; n < N; ++n) {
    const int t = b.t[static_cast<size_t>(n)];
    require(t >= 1 && t <= sched.T, "training timestep outside [1, T]");
    const double a = std::sqrt(sched.alpha_bar[static_cast<size_t>(t)]);
    const double s = std::sqrt(1.0 - sched.alpha_bar[static_cast<size_t>(t)]);
    T* dst = x.data() + n * (C + Cc) * hw;
    for (int64_t i = 0; i < C * hw; ++i)
      dst[i] = static_cast<T>(a * b.z0[n * C * hw + i] + s * b.eps[n * C * hw + i]);
    if (Cc) std::copy_n(b.cond_map.data() + n * Cc * hw, Cc * hw, dst + C * hw);
  }
  auto pred = model(nn::constant(std::move(x)), b.t, context);
  require(pred->value.shape() == b.z0.shape(), "denoiser output " + shape_string(pred->value.shape()) +
                                                   " does not match latent " + shape_string(b.z0.shape()));
  return nn::masked_mse(pred, b.eps, b.mask);
}

template <typename T>
void draw_timesteps_and_noise(EpsLossBatch<T>& b, uint64_t seed, uint64_t step, const NoiseSchedule& sched) {
  const int64_t N = b.z0.dim(0);
  RandomStream ts(seed, Purpose::timestep, step);
  b.t.resize(static_cast<size_t>(N));
  for (auto& t : b.t) t = 1 + static_cast<int>(ts.below(static_cast<uint64_t>(sched.T)));
  b.eps = Tensor<T>(b.z0.shape());
  const int64_t per = b.z0.numel() / N;
  for (int64_t n = 0; n < N; ++n) {
    RandomStream rng(seed, Purpose::noise, step, static_cast<uint32_t>(n));
    rng.fill_normal(std::span<T>(b.eps.data() + n * per, static_cast<size_t>(per)));
  }
}

template nn::Var<float> eps_loss<float>(const DenoiseFn<float>&, const EpsLossBatch<float>&, const nn::Var<float>&,
                                        const NoiseSchedule&);
template nn::Var<double> eps_loss<double>(const DenoiseFn<double>&, const EpsLossBatch<double>&,
                                          const nn::Var<double>&, const NoiseSchedule&);
template void draw_timesteps_and_noise<float>(EpsLossBatch<float>&, uint64_t, uint64_t, const NoiseSchedule&);
template void draw_timesteps_and_noise<double>(EpsLossBatch<double>&, uint64_t, uint64_t, const NoiseSchedule&);

}  // namespace vtg::diffusion
