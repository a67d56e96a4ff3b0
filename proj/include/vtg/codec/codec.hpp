#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "vtg/data/image.hpp"

namespace vtg::codec {

enum class CodecKind { identity, pool, learned };

struct CodecSpec {
  CodecKind kind = CodecKind::identity;
  int factor = 1;
  std::string weights;  // archive path, learned kind only

  nlohmann::json to_json() const;
  static CodecSpec from_json(const nlohmann::json& j);
  friend bool operator==(const CodecSpec&, const CodecSpec&) = default;
};

std::string codec_kind_name(CodecKind kind);
CodecKind parse_codec_kind(const std::string& name);

// [3, h, w] spatial code.
struct LatentCode {
  Tensor<float> code;

  int64_t height() const { return code.dim(1); }
  int64_t width() const { return code.dim(2); }
};

class Codec {
 public:
  Codec() : Codec(CodecSpec{}) {}
  explicit Codec(CodecSpec spec);

  const CodecSpec& spec() const { return spec_; }
  int factor() const { return spec_.factor; }

  LatentCode encode(const data::ImageFrame& x) const;
  data::ImageFrame decode(const LatentCode& z) const;
  // Batched forms over [N, 3, H, W] and [N, 3, h, w].
  Tensor<float> encode_batch(const Tensor<float>& x) const;
  Tensor<float> decode_batch(const Tensor<float>& z) const;

  // Learned kind: per-patch linear maps between f*f*3 pixels and 3 latent channels.
  struct PatchWeights {
    Tensor<float> enc_w, enc_b, dec_w, dec_b;  // [3, 3ff], [3], [3ff, 3], [3ff]
  };
  static void save_learned_weights(const std::filesystem::path& path, int factor, const PatchWeights& w);

 private:
  void encode_one(const float* x, int64_t H, int64_t W, float* z) const;
  void decode_one(const float* z, int64_t h, int64_t w, float* x) const;

  CodecSpec spec_;
  PatchWeights learned_;
};

}  // namespace vtg::codec
