#pragma once

#include <json.hpp>

#include <memory>
#include <vector>

#include "vtg/data/image.hpp"
#include "vtg/nn/layers.hpp"

namespace vtg::cvtp {

inline constexpr int kEmbedDim = 512;

struct EncoderConfig {
  int window = 5;                       // frames fused channel-wise
  int base_width = 64;
  std::vector<int> stage_blocks{2, 2, 2, 2};
  int embed_dim = kEmbedDim;
  int norm_groups = 8;
  double tau = 0.07;

  int in_channels() const { return 3 * window; }
  int feature_dim() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

// Residual network over early-fused clips: 7x7/2 stem, 2x2 max pool, basic
// blocks (group norm, ReLU), global average pool, linear head, L2 norm.
template <typename T>
class ClipEncoder {
 public:
  ClipEncoder(const EncoderConfig& config, uint64_t seed);
  ~ClipEncoder();
  ClipEncoder(ClipEncoder&&) noexcept;
  ClipEncoder& operator=(ClipEncoder&&) noexcept;

  // x [N, 3w, H, W] -> unit-norm embeddings [N, embed_dim].
  nn::Var<T> forward(const nn::Var<T>& x) const;
  // Pooled features before the head, [N, feature_dim].
  nn::Var<T> features(const nn::Var<T>& x) const;

  const EncoderConfig& config() const { return config_; }
  const nn::ParamList<T>& params() const { return params_; }

 private:
  struct Impl;
  EncoderConfig config_;
  std::unique_ptr<Impl> impl_;
  nn::ParamList<T> params_;
};

// Stacks fused clips into [N, 3w, H, W]; throws when a clip has the wrong window.
template <typename Clip>
Tensor<float> batch_clips(const std::vector<const Clip*>& clips, int window);

// Inference helpers (no graph).
Tensor<float> embed(const ClipEncoder<float>& encoder, const Tensor<float>& fused);
Tensor<float> embed_visual(const ClipEncoder<float>& encoder, const data::VisualClip& clip);
Tensor<float> embed_tactile(const ClipEncoder<float>& encoder, const data::TactileClip& clip);

}  // namespace vtg::cvtp
