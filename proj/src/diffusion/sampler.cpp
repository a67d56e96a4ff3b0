#include "vtg/diffusion/sampler.hpp"

#include <algorithm>

namespace vtg::diffusion {

Tensor<float> concat_channels(const Tensor<float>& z, const Tensor<float>& cond_map) {
  if (cond_map.empty()) return z;
  require(z.rank() == 4 && cond_map.rank() == 4 && z.dim(0) == cond_map.dim(0) && z.dim(2) == cond_map.dim(2) &&
              z.dim(3) == cond_map.dim(3),
          "conditioning map " + shape_string(cond_map.shape()) + " does not match latent " + shape_string(z.shape()));
  const int64_t N = z.dim(0), C = z.dim(1), Cc = cond_map.dim(1), hw = z.dim(2) * z.dim(3);
  Tensor<float> out({N, C + Cc, z.dim(2), z.dim(3)});
  for (int64_t n = 0; n < N; ++n) {
    std::copy_n(z.data() + n * C * hw, C * hw, out.data() + n * (C + Cc) * hw);
    std::copy_n(cond_map.data() + n * Cc * hw, Cc * hw, out.data() + n * (C + Cc) * hw + C * hw);
  }
  return out;
}

Tensor<float> cfg_eps(const EpsFn& eps, const Tensor<float>& z_t, const std::vector<int>& t, const Tensor<float>& cond,
                      double scale, const Tensor<float>& cond_map) {
  require(scale >= 0.0, "guidance scale must be >= 0");
  require(cond.rank() == 2 && cond.dim(0) == z_t.dim(0), "one conditioning vector per batch item");
  const Tensor<float> x = concat_channels(z_t, cond_map);
  if (scale == 1.0) return eps(x, t, cond);
  const Tensor<float> null_ctx(cond.shape());
  if (scale == 0.0) return eps(x, t, null_ctx);

  // One batched evaluation: first half unconditional, second half conditional.
  const int64_t N = z_t.dim(0);
  const std::vector<Tensor<float>> xs{x, x}, cs{null_ctx, cond};
  Shape xshape = x.shape(), cshape = cond.shape();
  xshape[0] *= 2;
  cshape[0] *= 2;
  std::vector<int> tt(t);
  tt.insert(tt.end(), t.begin(), t.end());
  const auto both = eps(stack(xs).reshaped(xshape), tt, stack(cs).reshaped(cshape));
  const int64_t half = both.numel() / 2;
  Shape out_shape = both.shape();
  out_shape[0] = N;
  Tensor<float> out(out_shape);
  const float s = static_cast<float>(scale);
  for (int64_t i = 0; i < half; ++i) {
    const float u = both[i], c = both[half + i];
    out[i] = u + s * (c - u);
  }
  return out;
}

void fill_item_noise(Tensor<float>& out, const std::vector<uint64_t>& seeds, uint64_t step) {
  require(out.rank() >= 1 && out.dim(0) == static_cast<int64_t>(seeds.size()), "one seed per batch item");
  const int64_t per = out.numel() / out.dim(0);
  for (size_t n = 0; n < seeds.size(); ++n) {
    RandomStream rng(seeds[n], Purpose::sampling, step);
    rng.fill_normal(std::span<float>(out.data() + static_cast<int64_t>(n) * per, static_cast<size_t>(per)));
  }
}

namespace {

Tensor<float> run_chain(const EpsFn& eps, Tensor<float> z, const std::vector<int>& ts, const Tensor<float>& cond,
                        const std::vector<uint64_t>& seeds, const ChainOptions& opts, const NoiseSchedule& sched,
                        const Tensor<float>& cond_map) {
  const auto N = static_cast<size_t>(z.dim(0));
  for (size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int s = i + 1 < ts.size() ? ts[i + 1] : 0;
    const auto e = cfg_eps(eps, z, std::vector<int>(N, t), cond, opts.guidance, cond_map);
    if (s == 0) {
      z = reverse_step(z, t, 0, e, sched, nullptr, opts.x0_clip);
    } else {
      Tensor<float> noise(z.shape());
      fill_item_noise(noise, seeds, static_cast<uint64_t>(t));
      z = reverse_step(z, t, s, e, sched, &noise, opts.x0_clip);
    }
  }
  return z;
}

}  // namespace

Tensor<float> sample(const EpsFn& eps, const Shape& latent_shape, const Tensor<float>& cond,
                     const std::vector<uint64_t>& seeds, const ChainOptions& opts, const NoiseSchedule& sched,
                     const Tensor<float>& cond_map) {
  const auto ts = strided_timesteps(sched.T, opts.steps);
  Shape shape = latent_shape;
  shape.insert(shape.begin(), static_cast<int64_t>(seeds.size()));
  Tensor<float> z(shape);
  fill_item_noise(z, seeds, 0);
  return run_chain(eps, std::move(z), ts, cond, seeds, opts, sched, cond_map);
}

Tensor<float> sdedit_sample(const EpsFn& eps, const Tensor<float>& z0, int level, const Tensor<float>& cond,
                            const std::vector<uint64_t>& seeds, const ChainOptions& opts, const NoiseSchedule& sched,
                            const Tensor<float>& cond_map) {
  require(level >= 0 && level <= sched.T, "SDEdit level N=" + std::to_string(level) + " outside [0, T]");
  require(opts.steps >= 1 && opts.steps <= sched.T, "steps must be in [1, T]");
  if (level == 0) return z0;
  Tensor<float> z(z0.shape());
  fill_item_noise(z, seeds, 0);
  if (level < sched.T) z = q_sample(z0, level, z, sched);
  const int64_t wanted = (static_cast<int64_t>(opts.steps) * level + sched.T - 1) / sched.T;
  const int steps = static_cast<int>(std::clamp<int64_t>(wanted, 1, level));
  return run_chain(eps, std::move(z), strided_timesteps(level, steps), cond, seeds, opts, sched, cond_map);
}

}  // namespace vtg::diffusion
