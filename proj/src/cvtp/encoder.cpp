#include "vtg/cvtp/encoder.hpp"

#include <optional>

namespace vtg::cvtp {

using nn::Var;

int EncoderConfig::feature_dim() const {
  return stage_blocks.empty() ? base_width : base_width << (stage_blocks.size() - 1);
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"window", window},         {"base_width", base_width}, {"stage_blocks", stage_blocks},
          {"embed_dim", embed_dim},   {"norm_groups", norm_groups}, {"tau", tau}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.window = j.value("window", c.window);
  c.base_width = j.value("base_width", c.base_width);
  c.stage_blocks = j.value("stage_blocks", c.stage_blocks);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.norm_groups = j.value("norm_groups", c.norm_groups);
  c.tau = j.value("tau", c.tau);
  return c;
}

namespace {

template <typename T>
struct BasicBlock {
  nn::Conv2d<T> conv1, conv2, down;
  nn::GroupNorm<T> gn1, gn2, gn_down;
  bool has_down = false;

  BasicBlock(int in, int out, int stride, int groups, nn::Initializer& init)
      : conv1(in, out, 3, stride, 1, init, false),
        conv2(out, out, 3, 1, 1, init, false),
        gn1(nn::norm_groups(out, groups), out),
        gn2(nn::norm_groups(out, groups), out),
        has_down(stride != 1 || in != out) {
    if (has_down) {
      down = nn::Conv2d<T>(in, out, 1, stride, 0, init, false);
      gn_down = nn::GroupNorm<T>(nn::norm_groups(out, groups), out);
    }
  }

  Var<T> operator()(const Var<T>& x) const {
    auto h = nn::relu(gn1(conv1(x)));
    h = gn2(conv2(h));
    return nn::relu(nn::add(h, has_down ? gn_down(down(x)) : x));
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    conv1.collect(p + ".conv1", o);
    gn1.collect(p + ".gn1", o);
    conv2.collect(p + ".conv2", o);
    gn2.collect(p + ".gn2", o);
    if (has_down) {
      down.collect(p + ".down", o);
      gn_down.collect(p + ".gn_down", o);
    }
  }
};

}  // namespace

template <typename T>
struct ClipEncoder<T>::Impl {
  nn::Conv2d<T> stem;
  nn::GroupNorm<T> stem_gn;
  std::vector<BasicBlock<T>> blocks;
  nn::Linear<T> head;
};

template <typename T>
ClipEncoder<T>::ClipEncoder(const EncoderConfig& c, uint64_t seed) : config_(c), impl_(std::make_unique<Impl>()) {
  require(c.window >= 1 && c.window % 2 == 1, "encoder window must be odd");
  require(c.base_width > 0 && c.embed_dim > 0, "invalid encoder widths");
  require(c.tau > 0.0, "temperature must be positive");
  nn::Initializer init(seed);
  auto& m = *impl_;
  m.stem = nn::Conv2d<T>(c.in_channels(), c.base_width, 7, 2, 3, init, false);
  m.stem_gn = nn::GroupNorm<T>(nn::norm_groups(c.base_width, c.norm_groups), c.base_width);
  int ch = c.base_width;
  for (size_t s = 0; s < c.stage_blocks.size(); ++s) {
    const int out = c.base_width << s;
    for (int b = 0; b < c.stage_blocks[s]; ++b) {
      m.blocks.emplace_back(ch, out, (s > 0 && b == 0) ? 2 : 1, c.norm_groups, init);
      ch = out;
    }
  }
  m.head = nn::Linear<T>(ch, c.embed_dim, init);

  m.stem.collect("stem.conv", params_);
  m.stem_gn.collect("stem.gn", params_);
  for (size_t i = 0; i < m.blocks.size(); ++i) m.blocks[i].collect("block" + std::to_string(i), params_);
  m.head.collect("head", params_);
}

template <typename T>
ClipEncoder<T>::~ClipEncoder() = default;
template <typename T>
ClipEncoder<T>::ClipEncoder(ClipEncoder&&) noexcept = default;
template <typename T>
ClipEncoder<T>& ClipEncoder<T>::operator=(ClipEncoder&&) noexcept = default;

template <typename T>
Var<T> ClipEncoder<T>::features(const Var<T>& x) const {
  require(x->value.rank() == 4 && x->value.dim(1) == config_.in_channels(),
          "encoder expects [N, " + std::to_string(config_.in_channels()) + ", H, W] (window " +
              std::to_string(config_.window) + "), got " + shape_string(x->value.shape()));
  const auto& m = *impl_;
  auto h = nn::max_pool2x2(nn::relu(m.stem_gn(m.stem(x))));
  for (const auto& b : m.blocks) h = b(h);
  return nn::global_avg_pool(h);
}

template <typename T>
Var<T> ClipEncoder<T>::forward(const Var<T>& x) const {
  return nn::l2_normalize_rows(impl_->head(features(x)));
}

template class ClipEncoder<float>;
template class ClipEncoder<double>;

template <typename Clip>
Tensor<float> batch_clips(const std::vector<const Clip*>& clips, int window) {
  require(!clips.empty(), "empty clip batch");
  std::vector<Tensor<float>> fused;
  fused.reserve(clips.size());
  for (const auto* c : clips) {
    if (c->window() != window)
      fail(ErrorCode::validation, "clip has " + std::to_string(c->window()) + " frames, encoder expects " +
                                      std::to_string(window));
    fused.push_back(c->fused());
  }
  return stack(fused);
}

template Tensor<float> batch_clips<data::VisualClip>(const std::vector<const data::VisualClip*>&, int);
template Tensor<float> batch_clips<data::TactileClip>(const std::vector<const data::TactileClip*>&, int);

Tensor<float> embed(const ClipEncoder<float>& encoder, const Tensor<float>& fused) {
  nn::NoGradGuard guard;
  return encoder.forward(nn::constant(fused))->value;
}

Tensor<float> embed_visual(const ClipEncoder<float>& encoder, const data::VisualClip& clip) {
  return embed(encoder, batch_clips<data::VisualClip>({&clip}, encoder.config().window)).reshaped({encoder.config().embed_dim});
}

Tensor<float> embed_tactile(const ClipEncoder<float>& encoder, const data::TactileClip& clip) {
  return embed(encoder, batch_clips<data::TactileClip>({&clip}, encoder.config().window)).reshaped({encoder.config().embed_dim});
}

}  // namespace vtg::cvtp
