#pragma once

#include <json.hpp>

#include <memory>
#include <vector>

#include "vtg/nn/layers.hpp"

namespace vtg::diffusion {

struct UNetConfig {
  int in_channels = 3;  // latent channels plus any concatenated conditioning
  int out_channels = 3;
  int base_channels = 64;
  std::vector<int> channel_mult{1, 2, 3, 5};
  std::vector<int> attention_factors{8, 4, 2};  // downsampling factors that get attention
  int num_res_blocks = 2;
  int head_channels = 32;
  int context_dim = 512;
  int transformer_depth = 1;
  int norm_groups = 32;

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
};

// Noise predictor with timestep embedding, residual blocks and spatial
// transformers whose cross-attention reads a single context token.
template <typename T>
class UNet {
 public:
  UNet(const UNetConfig& config, uint64_t seed);
  ~UNet();
  UNet(UNet&&) noexcept;

  // x [N, in, h, w], t per item, context [N, context_dim] -> [N, out, h, w].
  nn::Var<T> forward(const nn::Var<T>& x, const std::vector<int>& t, const nn::Var<T>& context) const;

  const UNetConfig& config() const { return config_; }
  const nn::ParamList<T>& params() const { return params_; }

 private:
  struct Impl;
  UNetConfig config_;
  std::unique_ptr<Impl> impl_;
  nn::ParamList<T> params_;
};

// Sinusoidal embedding [N, dim] of integer timesteps.
template <typename T>
Tensor<T> timestep_embedding(const std::vector<int>& t, int dim);

}  // namespace vtg::diffusion
