#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vtg/core/random.hpp"
#include "vtg/nn/ops.hpp"

namespace vtg::nn {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Hands out one independent stream per parameter tensor, in construction order.
class Initializer {
 public:
  explicit Initializer(uint64_t seed) : seed_(seed) {}
  RandomStream next() { return RandomStream(seed_, Purpose::init, counter_++); }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for conv/linear layers.
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, int64_t fan_in, Initializer& init) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  auto rng = init.next();
  rng.fill_uniform(t.span(), -bound, bound);
  return t;
}

template <typename T>
struct Linear {
  Var<T> weight;  // [out, in]
  Var<T> bias;    // [out] or null

  Linear() = default;
  Linear(int64_t in, int64_t out, Initializer& init, bool with_bias = true)
      : weight(parameter(fan_in_uniform<T>({out, in}, in, init))),
        bias(with_bias ? parameter(fan_in_uniform<T>({out}, in, init)) : nullptr) {}

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
  void zero_init() {
    weight->value.fill(T(0));
    if (bias) bias->value.fill(T(0));
  }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias) out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
struct Conv2d {
  Var<T> weight;  // [out, in, k, k]
  Var<T> bias;    // [out]
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(int64_t in, int64_t out, int kernel, int stride_, int pad_, Initializer& init, bool with_bias = true)
      : weight(parameter(fan_in_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, init))),
        bias(with_bias ? parameter(fan_in_uniform<T>({out}, in * kernel * kernel, init)) : nullptr),
        stride(stride_),
        pad(pad_) {}

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
  void zero_init() {
    weight->value.fill(T(0));
    if (bias) bias->value.fill(T(0));
  }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias) out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
struct GroupNorm {
  Var<T> gamma, beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(int groups_, int64_t channels)
      : gamma(parameter(Tensor<T>({channels}, T(1)))), beta(parameter(Tensor<T>({channels}))), groups(groups_) {}

  Var<T> operator()(const Var<T>& x) const { return group_norm(x, groups, gamma, beta); }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

template <typename T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int64_t dim) : gamma(parameter(Tensor<T>({dim}, T(1)))), beta(parameter(Tensor<T>({dim}))) {}

  Var<T> operator()(const Var<T>& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

// Largest group count <= preferred that divides the channel count.
int norm_groups(int64_t channels, int preferred);

template <typename T>
std::vector<Var<T>> vars_of(const ParamList<T>& params) {
  std::vector<Var<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var);
  return out;
}

template <typename T>
int64_t parameter_count(const ParamList<T>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.var->value.numel();
  return n;
}

}  // namespace vtg::nn
