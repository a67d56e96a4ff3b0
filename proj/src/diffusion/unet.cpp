#include "vtg/diffusion/unet.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace vtg::diffusion {

using nn::Var;

nlohmann::json UNetConfig::to_json() const {
  return {{"in_channels", in_channels},     {"out_channels", out_channels},
          {"base_channels", base_channels}, {"channel_mult", channel_mult},
          {"attention_factors", attention_factors}, {"num_res_blocks", num_res_blocks},
          {"head_channels", head_channels}, {"context_dim", context_dim},
          {"transformer_depth", transformer_depth}, {"norm_groups", norm_groups}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.channel_mult = j.value("channel_mult", c.channel_mult);
  c.attention_factors = j.value("attention_factors", c.attention_factors);
  c.num_res_blocks = j.value("num_res_blocks", c.num_res_blocks);
  c.head_channels = j.value("head_channels", c.head_channels);
  c.context_dim = j.value("context_dim", c.context_dim);
  c.transformer_depth = j.value("transformer_depth", c.transformer_depth);
  c.norm_groups = j.value("norm_groups", c.norm_groups);
  return c;
}

template <typename T>
Tensor<T> timestep_embedding(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Tensor<T> out({static_cast<int64_t>(t.size()), dim});
  for (size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = t[n] * freq;
      out[static_cast<int64_t>(n) * dim + i] = static_cast<T>(std::cos(arg));
      out[static_cast<int64_t>(n) * dim + half + i] = static_cast<T>(std::sin(arg));
    }
  return out;
}

namespace {

template <typename T>
struct ResBlock {
  nn::GroupNorm<T> norm1, norm2;
  nn::Conv2d<T> conv1, conv2, skip;
  nn::Linear<T> emb_proj;
  bool has_skip = false;

  ResBlock(int in, int out, int emb_dim, int groups, nn::Initializer& init)
      : norm1(nn::norm_groups(in, groups), in),
        norm2(nn::norm_groups(out, groups), out),
        conv1(in, out, 3, 1, 1, init),
        conv2(out, out, 3, 1, 1, init),
        emb_proj(emb_dim, out, init),
        has_skip(in != out) {
    conv2.zero_init();
    if (has_skip) skip = nn::Conv2d<T>(in, out, 1, 1, 0, init);
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& emb) const {
    auto h = conv1(nn::silu(norm1(x)));
    h = nn::add_channel_vector(h, emb_proj(nn::silu(emb)));
    h = conv2(nn::silu(norm2(h)));
    return nn::add(has_skip ? skip(x) : x, h);
  }

  void collect(const std::string& p, nn::ParamList<T>& out) const {
    norm1.collect(p + ".norm1", out);
    conv1.collect(p + ".conv1", out);
    emb_proj.collect(p + ".emb_proj", out);
    norm2.collect(p + ".norm2", out);
    conv2.collect(p + ".conv2", out);
    if (has_skip) skip.collect(p + ".skip", out);
  }
};

template <typename T>
struct Attention {
  nn::Linear<T> q, k, v, out;
  int heads;

  Attention(int query_dim, int context_dim, int heads_, int head_dim, nn::Initializer& init)
      : q(query_dim, heads_ * head_dim, init, false),
        k(context_dim, heads_ * head_dim, init, false),
        v(context_dim, heads_ * head_dim, init, false),
        out(heads_ * head_dim, query_dim, init),
        heads(heads_) {}

  // x [N, L, query_dim], ctx [N, S, context_dim].
  Var<T> operator()(const Var<T>& x, const Var<T>& ctx) const {
    auto qh = nn::split_heads(q(x), heads);
    auto kh = nn::split_heads(k(ctx), heads);
    auto vh = nn::split_heads(v(ctx), heads);
    const T scale = T(1) / std::sqrt(static_cast<T>(qh->value.dim(2)));
    auto attn = nn::softmax_last(nn::scale(nn::bmm(qh, kh, false, true), scale));
    return out(nn::merge_heads(nn::bmm(attn, vh, false, false), heads));
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    q.collect(p + ".q", o);
    k.collect(p + ".k", o);
    v.collect(p + ".v", o);
    out.collect(p + ".out", o);
  }
};

template <typename T>
struct TransformerBlock {
  nn::LayerNorm<T> ln1, ln2, ln3;
  Attention<T> self_attn, cross_attn;
  nn::Linear<T> ff1, ff2;

  TransformerBlock(int dim, int context_dim, int heads, int head_dim, nn::Initializer& init)
      : ln1(dim),
        ln2(dim),
        ln3(dim),
        self_attn(dim, dim, heads, head_dim, init),
        cross_attn(dim, context_dim, heads, head_dim, init),
        ff1(dim, 4 * dim, init),
        ff2(4 * dim, dim, init) {}

  Var<T> operator()(Var<T> x, const Var<T>& ctx) const {
    auto h = ln1(x);
    x = nn::add(x, self_attn(h, h));
    x = nn::add(x, cross_attn(ln2(x), ctx));
    return nn::add(x, ff2(nn::gelu(ff1(ln3(x)))));
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    ln1.collect(p + ".ln1", o);
    self_attn.collect(p + ".attn1", o);
    ln2.collect(p + ".ln2", o);
    cross_attn.collect(p + ".attn2", o);
    ln3.collect(p + ".ln3", o);
    ff1.collect(p + ".ff1", o);
    ff2.collect(p + ".ff2", o);
  }
};

template <typename T>
struct SpatialTransformer {
  nn::GroupNorm<T> norm;
  nn::Conv2d<T> proj_in, proj_out;
  std::vector<TransformerBlock<T>> blocks;

  SpatialTransformer(int channels, const UNetConfig& c, nn::Initializer& init)
      : norm(nn::norm_groups(channels, c.norm_groups), channels) {
    const int heads = std::max(1, channels / c.head_channels);
    const int inner = heads * c.head_channels;
    proj_in = nn::Conv2d<T>(channels, inner, 1, 1, 0, init);
    for (int d = 0; d < c.transformer_depth; ++d) blocks.emplace_back(inner, c.context_dim, heads, c.head_channels, init);
    proj_out = nn::Conv2d<T>(inner, channels, 1, 1, 0, init);
    proj_out.zero_init();
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& ctx) const {
    const auto h = x->value.dim(2), w = x->value.dim(3);
    auto tokens = nn::nchw_to_tokens(proj_in(norm(x)));
    for (const auto& b : blocks) tokens = b(tokens, ctx);
    return nn::add(x, proj_out(nn::tokens_to_nchw(tokens, h, w)));
  }

  void collect(const std::string& p, nn::ParamList<T>& o) const {
    norm.collect(p + ".norm", o);
    proj_in.collect(p + ".proj_in", o);
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(p + ".block" + std::to_string(i), o);
    proj_out.collect(p + ".proj_out", o);
  }
};

template <typename T>
struct Downsample {
  nn::Conv2d<T> conv;
  Downsample(int ch, nn::Initializer& init) : conv(ch, ch, 3, 2, 1, init) {}
  Var<T> operator()(const Var<T>& x) const { return conv(x); }
  void collect(const std::string& p, nn::ParamList<T>& o) const { conv.collect(p + ".conv", o); }
};

template <typename T>
struct Upsample {
  nn::Conv2d<T> conv;
  Upsample(int ch, nn::Initializer& init) : conv(ch, ch, 3, 1, 1, init) {}
  Var<T> operator()(const Var<T>& x) const { return conv(nn::upsample_nearest2x(x)); }
  void collect(const std::string& p, nn::ParamList<T>& o) const { conv.collect(p + ".conv", o); }
};

// One stage of the encoder or decoder path.
template <typename T>
struct Stage {
  std::optional<ResBlock<T>> res;
  std::optional<SpatialTransformer<T>> attn;
  std::optional<Downsample<T>> down;
  std::optional<Upsample<T>> up;
  int out_channels = 0;
};

}  // namespace

template <typename T>
struct UNet<T>::Impl {
  int emb_dim;
  nn::Linear<T> time1, time2;
  nn::Conv2d<T> input_conv;
  std::vector<Stage<T>> down, up;
  std::optional<ResBlock<T>> mid1, mid2;
  std::optional<SpatialTransformer<T>> mid_attn;
  nn::GroupNorm<T> out_norm;
  nn::Conv2d<T> out_conv;
  int base;
};

template <typename T>
UNet<T>::UNet(const UNetConfig& c, uint64_t seed) : config_(c), impl_(std::make_unique<Impl>()) {
  require(c.base_channels > 0 && c.base_channels % 2 == 0, "base_channels must be positive and even");
  require(!c.channel_mult.empty() && c.num_res_blocks >= 1, "invalid U-Net layout");
  require(c.head_channels > 0 && c.context_dim > 0 && c.transformer_depth >= 1, "invalid attention settings");
  nn::Initializer init(seed);
  auto& m = *impl_;
  m.base = c.base_channels;
  m.emb_dim = 4 * c.base_channels;
  m.time1 = nn::Linear<T>(c.base_channels, m.emb_dim, init);
  m.time2 = nn::Linear<T>(m.emb_dim, m.emb_dim, init);
  m.input_conv = nn::Conv2d<T>(c.in_channels, c.base_channels, 3, 1, 1, init);
  auto wants_attn = [&](int factor) {
    return std::find(c.attention_factors.begin(), c.attention_factors.end(), factor) != c.attention_factors.end();
  };

  std::vector<int> skip_channels{c.base_channels};
  int ch = c.base_channels, factor = 1;
  const int levels = static_cast<int>(c.channel_mult.size());
  for (int level = 0; level < levels; ++level) {
    const int out = c.base_channels * c.channel_mult[static_cast<size_t>(level)];
    for (int b = 0; b < c.num_res_blocks; ++b) {
      Stage<T> s;
      s.res.emplace(ch, out, m.emb_dim, c.norm_groups, init);
      if (wants_attn(factor)) s.attn.emplace(out, c, init);
      ch = s.out_channels = out;
      m.down.push_back(std::move(s));
      skip_channels.push_back(ch);
    }
    if (level + 1 < levels) {
      Stage<T> s;
      s.down.emplace(ch, init);
      s.out_channels = ch;
      m.down.push_back(std::move(s));
      skip_channels.push_back(ch);
      factor *= 2;
    }
  }
  m.mid1.emplace(ch, ch, m.emb_dim, c.norm_groups, init);
  m.mid_attn.emplace(ch, c, init);
  m.mid2.emplace(ch, ch, m.emb_dim, c.norm_groups, init);

  for (int level = levels - 1; level >= 0; --level) {
    const int out = c.base_channels * c.channel_mult[static_cast<size_t>(level)];
    for (int b = 0; b <= c.num_res_blocks; ++b) {
      Stage<T> s;
      const int skip = skip_channels.back();
      skip_channels.pop_back();
      s.res.emplace(ch + skip, out, m.emb_dim, c.norm_groups, init);
      if (wants_attn(factor)) s.attn.emplace(out, c, init);
      ch = s.out_channels = out;
      if (level > 0 && b == c.num_res_blocks) {
        s.up.emplace(ch, init);
        factor /= 2;
      }
      m.up.push_back(std::move(s));
    }
  }
  m.out_norm = nn::GroupNorm<T>(nn::norm_groups(ch, c.norm_groups), ch);
  m.out_conv = nn::Conv2d<T>(ch, c.out_channels, 3, 1, 1, init);
  m.out_conv.zero_init();

  m.time1.collect("time_embed.0", params_);
  m.time2.collect("time_embed.2", params_);
  m.input_conv.collect("input", params_);
  for (size_t i = 0; i < m.down.size(); ++i) {
    const std::string p = "down." + std::to_string(i);
    const auto& s = m.down[i];
    if (s.res) s.res->collect(p + ".res", params_);
    if (s.attn) s.attn->collect(p + ".attn", params_);
    if (s.down) s.down->collect(p + ".down", params_);
  }
  m.mid1->collect("mid.res1", params_);
  m.mid_attn->collect("mid.attn", params_);
  m.mid2->collect("mid.res2", params_);
  for (size_t i = 0; i < m.up.size(); ++i) {
    const std::string p = "up." + std::to_string(i);
    const auto& s = m.up[i];
    s.res->collect(p + ".res", params_);
    if (s.attn) s.attn->collect(p + ".attn", params_);
    if (s.up) s.up->collect(p + ".up", params_);
  }
  m.out_norm.collect("out.norm", params_);
  m.out_conv.collect("out.conv", params_);
}

template <typename T>
UNet<T>::~UNet() = default;
template <typename T>
UNet<T>::UNet(UNet&&) noexcept = default;

template <typename T>
Var<T> UNet<T>::forward(const Var<T>& x, const std::vector<int>& t, const Var<T>& context) const {
  const auto& c = config_;
  const auto& m = *impl_;
  require(x->value.rank() == 4 && x->value.dim(1) == c.in_channels,
          "denoiser input must be [N, " + std::to_string(c.in_channels) + ", h, w], got " + shape_string(x->value.shape()));
  const int64_t N = x->value.dim(0);
  require(static_cast<int64_t>(t.size()) == N, "one timestep per batch item");
  require(context->value.rank() == 2 && context->value.dim(0) == N && context->value.dim(1) == c.context_dim,
          "context must be [N, " + std::to_string(c.context_dim) + "]");
  const int64_t divisor = int64_t{1} << (c.channel_mult.size() - 1);
  require(x->value.dim(2) % divisor == 0 && x->value.dim(3) % divisor == 0,
          "latent size must be divisible by " + std::to_string(divisor));

  auto emb = m.time2(nn::silu(m.time1(nn::constant(timestep_embedding<T>(t, m.base)))));
  // Unit-norm embeddings are rescaled to unit RMS per element.
  auto ctx = nn::scale(nn::reshape(context, {N, 1, c.context_dim}), static_cast<T>(std::sqrt(static_cast<double>(c.context_dim))));

  std::vector<Var<T>> skips;
  auto h = m.input_conv(x);
  skips.push_back(h);
  for (const auto& s : m.down) {
    if (s.res) h = (*s.res)(h, emb);
    if (s.attn) h = (*s.attn)(h, ctx);
    if (s.down) h = (*s.down)(h);
    skips.push_back(h);
  }
  h = (*m.mid1)(h, emb);
  h = (*m.mid_attn)(h, ctx);
  h = (*m.mid2)(h, emb);
  for (const auto& s : m.up) {
    h = nn::concat_channels(h, skips.back());
    skips.pop_back();
    h = (*s.res)(h, emb);
    if (s.attn) h = (*s.attn)(h, ctx);
    if (s.up) h = (*s.up)(h);
  }
  return m.out_conv(nn::silu(m.out_norm(h)));
}

template class UNet<float>;
template class UNet<double>;
template Tensor<float> timestep_embedding<float>(const std::vector<int>&, int);
template Tensor<double> timestep_embedding<double>(const std::vector<int>&, int);

}  // namespace vtg::diffusion
