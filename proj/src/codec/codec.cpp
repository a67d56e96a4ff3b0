#include "vtg/codec/codec.hpp"

#include <algorithm>

#include "vtg/io/archive.hpp"

namespace vtg::codec {

std::string codec_kind_name(CodecKind kind) {
  switch (kind) {
    case CodecKind::identity: return "identity";
    case CodecKind::pool: return "pool";
    case CodecKind::learned: return "learned";
  }
  return "?";
}

CodecKind parse_codec_kind(const std::string& name) {
  if (name == "identity") return CodecKind::identity;
  if (name == "pool") return CodecKind::pool;
  if (name == "learned") return CodecKind::learned;
  fail(ErrorCode::configuration, "unknown codec kind '" + name + "'");
}

nlohmann::json CodecSpec::to_json() const {
  nlohmann::json j{{"kind", codec_kind_name(kind)}, {"factor", factor}};
  if (kind == CodecKind::learned) j["weights"] = weights;
  return j;
}

CodecSpec CodecSpec::from_json(const nlohmann::json& j) {
  CodecSpec s;
  s.kind = parse_codec_kind(j.value("kind", std::string("identity")));
  s.factor = j.value("factor", s.kind == CodecKind::identity ? 1 : 4);
  s.weights = j.value("weights", std::string());
  return s;
}

Codec::Codec(CodecSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind == CodecKind::identity && spec_.factor != 1)
    fail(ErrorCode::configuration, "identity codec has factor 1");
  if (spec_.factor < 1) fail(ErrorCode::configuration, "codec factor must be >= 1");
  if (spec_.kind == CodecKind::learned) {
    const auto a = io::Archive::load(spec_.weights);
    const int f = a.metadata.value("factor", 0);
    if (f != spec_.factor)
      fail(ErrorCode::configuration, "codec weights have factor " + std::to_string(f) + ", spec says " +
                                         std::to_string(spec_.factor));
    const int64_t p = 3LL * f * f;
    learned_.enc_w = a.get_f32("encoder.weight", {3, p});
    learned_.enc_b = a.get_f32("encoder.bias", {3});
    learned_.dec_w = a.get_f32("decoder.weight", {p, 3});
    learned_.dec_b = a.get_f32("decoder.bias", {p});
  }
}

void Codec::save_learned_weights(const std::filesystem::path& path, int factor, const PatchWeights& w) {
  io::Archive a;
  a.metadata = {{"codec", "learned"}, {"factor", factor}};
  a.put("encoder.weight", w.enc_w);
  a.put("encoder.bias", w.enc_b);
  a.put("decoder.weight", w.dec_w);
  a.put("decoder.bias", w.dec_b);
  a.save(path);
}

void Codec::encode_one(const float* x, int64_t H, int64_t W, float* z) const {
  const int f = spec_.factor;
  const int64_t h = H / f, w = W / f;
  if (spec_.kind == CodecKind::identity) {
    std::copy_n(x, 3 * H * W, z);
    return;
  }
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      if (spec_.kind == CodecKind::pool) {
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) acc += x[(c * H + i * f + dy) * W + j * f + dx];
          z[(c * h + i) * w + j] = std::clamp(static_cast<float>(acc / (f * f)), -1.0f, 1.0f);
        }
      } else {
        const int64_t p = 3LL * f * f;
        for (int o = 0; o < 3; ++o) {
          double acc = learned_.enc_b[o];
          int64_t k = 0;
          for (int c = 0; c < 3; ++c)
            for (int dy = 0; dy < f; ++dy)
              for (int dx = 0; dx < f; ++dx, ++k)
                acc += static_cast<double>(learned_.enc_w[o * p + k]) * x[(c * H + i * f + dy) * W + j * f + dx];
          z[(o * h + i) * w + j] = static_cast<float>(acc);
        }
      }
    }
}

void Codec::decode_one(const float* z, int64_t h, int64_t w, float* x) const {
  const int f = spec_.factor;
  const int64_t H = h * f, W = w * f;
  if (spec_.kind == CodecKind::identity) {
    for (int64_t i = 0; i < 3 * H * W; ++i) x[i] = std::clamp(z[i], -1.0f, 1.0f);
    return;
  }
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      if (spec_.kind == CodecKind::pool) {
        for (int c = 0; c < 3; ++c) {
          const float v = std::clamp(z[(c * h + i) * w + j], -1.0f, 1.0f);
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) x[(c * H + i * f + dy) * W + j * f + dx] = v;
        }
      } else {
        int64_t k = 0;
        for (int c = 0; c < 3; ++c)
          for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx, ++k) {
              double acc = learned_.dec_b[k];
              for (int o = 0; o < 3; ++o) acc += static_cast<double>(learned_.dec_w[k * 3 + o]) * z[(o * h + i) * w + j];
              x[(c * H + i * f + dy) * W + j * f + dx] = std::clamp(static_cast<float>(acc), -1.0f, 1.0f);
            }
      }
    }
}

Tensor<float> Codec::encode_batch(const Tensor<float>& x) const {
  require(x.rank() == 4 && x.dim(1) == 3, "encode expects [N, 3, H, W], got " + shape_string(x.shape()));
  const int f = spec_.factor;
  const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
  require(H % f == 0 && W % f == 0,
          "image " + std::to_string(H) + "x" + std::to_string(W) + " is not divisible by codec factor " + std::to_string(f));
  Tensor<float> z({N, 3, H / f, W / f});
  for (int64_t n = 0; n < N; ++n) encode_one(x.data() + n * 3 * H * W, H, W, z.data() + n * 3 * (H / f) * (W / f));
  return z;
}

Tensor<float> Codec::decode_batch(const Tensor<float>& z) const {
  require(z.rank() == 4 && z.dim(1) == 3, "decode expects [N, 3, h, w], got " + shape_string(z.shape()));
  const int f = spec_.factor;
  const int64_t N = z.dim(0), h = z.dim(2), w = z.dim(3);
  Tensor<float> x({N, 3, h * f, w * f});
  for (int64_t n = 0; n < N; ++n) decode_one(z.data() + n * 3 * h * w, h, w, x.data() + n * 3 * h * w * f * f);
  return x;
}

LatentCode Codec::encode(const data::ImageFrame& x) const {
  return {encode_batch(x.pixels.reshaped({1, 3, x.height(), x.width()})).reshaped({3, x.height() / factor(), x.width() / factor()})};
}

data::ImageFrame Codec::decode(const LatentCode& z) const {
  require(z.code.rank() == 3 && z.code.dim(0) == 3, "latent must be [3, h, w], got " + shape_string(z.code.shape()));
  auto x = decode_batch(z.code.reshaped({1, 3, z.height(), z.width()}));
  return data::ImageFrame(x.reshaped({3, z.height() * factor(), z.width() * factor()}));
}

}  // namespace vtg::codec
