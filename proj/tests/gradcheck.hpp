#pragma once

// Central finite differences against reverse-mode gradients, double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vtg/nn/autograd.hpp"

namespace vtg::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  int64_t checked = 0;
};

// `loss` rebuilds the graph from the current parameter values and returns a
// one-element Var. At most `max_per_param` coordinates are probed per tensor
// (evenly strided) to keep large layers affordable. `five_point` switches to
// the fourth-order stencil, which tolerates a larger step on deep graphs.
inline GradCheckResult grad_check(const std::function<nn::Var<double>()>& loss, const std::vector<nn::Var<double>>& params,
                                  double step = 1e-6, int64_t max_per_param = 64, double floor = 1e-7,
                                  bool five_point = false) {
  for (auto& p : params) p->zero_grad();
  nn::backward(loss());
  std::vector<Tensor<double>> analytic;
  for (auto& p : params) analytic.push_back(p->grad.empty() ? Tensor<double>(p->value.shape()) : p->grad);

  GradCheckResult result;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i]->value;
    const int64_t n = value.numel();
    const int64_t stride = std::max<int64_t>(1, n / max_per_param);
    for (int64_t j = 0; j < n; j += stride) {
      const double saved = value[j];
      auto at = [&](double delta) {
        value[j] = saved + delta;
        nn::NoGradGuard guard;
        return loss()->value[0];
      };
      const double numeric = five_point
                                 ? (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12 * step)
                                 : (at(step) - at(-step)) / (2 * step);
      value[j] = saved;
      const double a = analytic[i][j];
      const double abs_err = std::fabs(a - numeric);
      const double rel = abs_err / std::max({std::fabs(a), std::fabs(numeric), floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      // Tiny gradients carry cancellation noise from the difference quotient;
      // judge them by absolute error against the floor.
      if (std::max(std::fabs(a), std::fabs(numeric)) > floor) result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  for (auto& p : params) p->zero_grad();
  return result;
}

}  // namespace vtg::testing
