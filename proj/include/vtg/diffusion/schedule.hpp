#pragma once

#include <json.hpp>

#include <vector>

#include "vtg/core/random.hpp"
#include "vtg/core/tensor.hpp"

namespace vtg::diffusion {

enum class ScheduleKind { linear };

// Coefficients indexed by t = 0..T; beta[0] = 0 and alpha_bar[0] = 1.
struct NoiseSchedule {
  int T = 0;
  ScheduleKind kind = ScheduleKind::linear;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  std::vector<double> beta, alpha, alpha_bar;

  nlohmann::json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);
};

NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::linear, double beta_start = 1e-4,
                            double beta_end = 2e-2);

// floor(i * top / steps) for i = steps..1: an evenly spaced descending
// sub-sequence of {top..1} that starts at top.
std::vector<int> strided_timesteps(int top, int steps);

// sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps.
Tensor<float> q_sample(const Tensor<float>& z0, int t, const Tensor<float>& eps, const NoiseSchedule& sched);
// Per-item timesteps for a batch [N, ...].
Tensor<float> q_sample(const Tensor<float>& z0, const std::vector<int>& t, const Tensor<float>& eps,
                       const NoiseSchedule& sched);

// Posterior step from t to s < t with the respaced coefficients
// alpha' = abar_t / abar_s. `noise` may be null; it is ignored when s = 0.
// With x0_clip > 0 the implied z0 estimate is clamped to [-x0_clip, x0_clip]
// before forming the posterior mean.
Tensor<float> reverse_step(const Tensor<float>& z_t, int t, int s, const Tensor<float>& eps_hat,
                           const NoiseSchedule& sched, const Tensor<float>* noise, double x0_clip = 0.0);

// One full-resolution DDPM step t -> t-1, drawing the noise from rng (no draw at t = 1).
Tensor<float> ddpm_step(const Tensor<float>& z_t, int t, const Tensor<float>& eps_hat, const NoiseSchedule& sched,
                        RandomStream& rng);

}  // namespace vtg::diffusion
