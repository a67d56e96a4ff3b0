#include "vtg/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace vtg::diffusion {

nlohmann::json NoiseSchedule::to_json() const {
  return {{"T", T}, {"kind", "linear"}, {"beta_start", beta_start}, {"beta_end", beta_end}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string("linear")) != "linear")
    fail(ErrorCode::configuration, "unsupported schedule kind " + j.value("kind", std::string()));
  return make_schedule(j.at("T").get<int>(), ScheduleKind::linear, j.value("beta_start", 1e-4),
                       j.value("beta_end", 2e-2));
}

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_start, double beta_end) {
  require(T >= 1, "schedule needs T >= 1, got " + std::to_string(T));
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "beta range must satisfy 0 < start <= end < 1");
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.assign(static_cast<size_t>(T + 1), 0.0);
  s.alpha.assign(static_cast<size_t>(T + 1), 1.0);
  s.alpha_bar.assign(static_cast<size_t>(T + 1), 1.0);
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    s.beta[static_cast<size_t>(t)] = beta_start + frac * (beta_end - beta_start);
    s.alpha[static_cast<size_t>(t)] = 1.0 - s.beta[static_cast<size_t>(t)];
    s.alpha_bar[static_cast<size_t>(t)] = s.alpha_bar[static_cast<size_t>(t - 1)] * s.alpha[static_cast<size_t>(t)];
  }
  return s;
}

std::vector<int> strided_timesteps(int top, int steps) {
  require(steps >= 1 && steps <= top, "steps must be in [1, " + std::to_string(top) + "], got " + std::to_string(steps));
  std::vector<int> out;
  out.reserve(static_cast<size_t>(steps));
  for (int i = steps; i >= 1; --i)
    out.push_back(static_cast<int>(static_cast<int64_t>(i) * top / steps));
  return out;
}

namespace {
void check_t(int t, const NoiseSchedule& sched) {
  require(t >= 0 && t <= sched.T, "timestep " + std::to_string(t) + " outside [0, " + std::to_string(sched.T) + "]");
}
}  // namespace

Tensor<float> q_sample(const Tensor<float>& z0, int t, const Tensor<float>& eps, const NoiseSchedule& sched) {
  check_t(t, sched);
  require(z0.shape() == eps.shape(), "q_sample: noise shape " + shape_string(eps.shape()) + " vs " + shape_string(z0.shape()));
  if (t == 0) return z0;
  const double a = std::sqrt(sched.alpha_bar[static_cast<size_t>(t)]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[static_cast<size_t>(t)]);
  Tensor<float> out(z0.shape());
  for (int64_t i = 0; i < z0.numel(); ++i) out[i] = static_cast<float>(a * z0[i] + b * eps[i]);
  return out;
}

Tensor<float> q_sample(const Tensor<float>& z0, const std::vector<int>& t, const Tensor<float>& eps,
                       const NoiseSchedule& sched) {
  require(z0.rank() >= 1 && static_cast<int64_t>(t.size()) == z0.dim(0), "q_sample: one timestep per batch item");
  require(z0.shape() == eps.shape(), "q_sample: noise shape mismatch");
  Tensor<float> out(z0.shape());
  const int64_t per = z0.numel() / z0.dim(0);
  for (int64_t n = 0; n < z0.dim(0); ++n) {
    const int tn = t[static_cast<size_t>(n)];
    check_t(tn, sched);
    const double a = std::sqrt(sched.alpha_bar[static_cast<size_t>(tn)]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[static_cast<size_t>(tn)]);
    for (int64_t i = n * per; i < (n + 1) * per; ++i)
      out[i] = tn == 0 ? z0[i] : static_cast<float>(a * z0[i] + b * eps[i]);
  }
  return out;
}

Tensor<float> reverse_step(const Tensor<float>& z_t, int t, int s, const Tensor<float>& eps_hat,
                           const NoiseSchedule& sched, const Tensor<float>* noise, double x0_clip) {
  require(t >= 1 && t <= sched.T && s >= 0 && s < t, "reverse step needs 0 <= s < t <= T");
  require(z_t.shape() == eps_hat.shape(), "reverse step: eps shape mismatch");
  const double abar_t = sched.alpha_bar[static_cast<size_t>(t)];
  const double abar_s = sched.alpha_bar[static_cast<size_t>(s)];
  const double alpha = abar_t / abar_s;
  const double beta = 1.0 - alpha;
  const double coef = beta / std::sqrt(1.0 - abar_t);
  const double sqrt_alpha = std::sqrt(alpha);
  const double sigma = s == 0 ? 0.0 : std::sqrt(beta * (1.0 - abar_s) / (1.0 - abar_t));
  const bool add_noise = s > 0 && noise != nullptr;
  if (add_noise) require(noise->shape() == z_t.shape(), "reverse step: noise shape mismatch");
  require(x0_clip >= 0.0, "x0 clip must be >= 0");
  const double c0 = std::sqrt(abar_s) * beta / (1.0 - abar_t);
  const double ct = sqrt_alpha * (1.0 - abar_s) / (1.0 - abar_t);
  const double ra = std::sqrt(abar_t), rb = std::sqrt(1.0 - abar_t);
  Tensor<float> out(z_t.shape());
  for (int64_t i = 0; i < z_t.numel(); ++i) {
    double v;
    if (x0_clip > 0.0) {
      const double x0 = std::clamp((z_t[i] - rb * eps_hat[i]) / ra, -x0_clip, x0_clip);
      v = c0 * x0 + ct * z_t[i];
    } else {
      v = (z_t[i] - coef * eps_hat[i]) / sqrt_alpha;
    }
    if (add_noise) v += sigma * (*noise)[i];
    out[i] = static_cast<float>(v);
  }
  return out;
}

Tensor<float> ddpm_step(const Tensor<float>& z_t, int t, const Tensor<float>& eps_hat, const NoiseSchedule& sched,
                        RandomStream& rng) {
  require(t >= 1 && t <= sched.T, "ddpm_step: timestep " + std::to_string(t) + " outside [1, T]");
  if (t == 1) return reverse_step(z_t, 1, 0, eps_hat, sched, nullptr);
  Tensor<float> n(z_t.shape());
  rng.fill_normal(n.span());
  return reverse_step(z_t, t, t - 1, eps_hat, sched, &n);
}

}  // namespace vtg::diffusion
