#pragma once

#include <functional>
#include <vector>

#include "vtg/diffusion/schedule.hpp"

namespace vtg::diffusion {

// Noise prediction for a batch: x [N, C_in, h, w] (noisy latent plus any
// concatenated conditioning), one timestep per item, context [N, D].
using EpsFn = std::function<Tensor<float>(const Tensor<float>& x, const std::vector<int>& t, const Tensor<float>& context)>;

struct Guidance {
  double scale = 7.5;
  double drop_prob = 0.1;
};

// Concatenates z [N, C, h, w] with cond_map [N, C', h, w] along channels; cond_map may be empty.
Tensor<float> concat_channels(const Tensor<float>& z, const Tensor<float>& cond_map);

// u + s * (c - u) with u from the zero (null) context. s = 1 and s = 0 return
// the conditional and unconditional predictions unchanged.
Tensor<float> cfg_eps(const EpsFn& eps, const Tensor<float>& z_t, const std::vector<int>& t, const Tensor<float>& cond,
                      double scale, const Tensor<float>& cond_map = {});

// Per-item seeds; item n draws from streams keyed by (seeds[n], sampling, step).
struct ChainOptions {
  int steps = 200;
  double guidance = 7.5;
  double x0_clip = 0.0;  // 0 disables; see reverse_step
};

// Reverse chain from pure noise over strided_timesteps(T, steps).
Tensor<float> sample(const EpsFn& eps, const Shape& latent_shape, const Tensor<float>& cond,
                     const std::vector<uint64_t>& seeds, const ChainOptions& opts, const NoiseSchedule& sched,
                     const Tensor<float>& cond_map = {});

// Noises z0 to level N then denoises over an evenly spaced sub-sequence of
// {N..1} of length ceil(steps * N / T). N = 0 returns z0; N = T starts from
// pure noise and follows exactly the path of sample().
Tensor<float> sdedit_sample(const EpsFn& eps, const Tensor<float>& z0, int level, const Tensor<float>& cond,
                            const std::vector<uint64_t>& seeds, const ChainOptions& opts, const NoiseSchedule& sched,
                            const Tensor<float>& cond_map = {});

// Standard normal draws for batch item n from the sampling stream at `step`.
void fill_item_noise(Tensor<float>& out, const std::vector<uint64_t>& seeds, uint64_t step);

}  // namespace vtg::diffusion
