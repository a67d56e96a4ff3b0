#include <doctest.h>

#include <filesystem>

#include "vtg/codec/codec.hpp"
#include "vtg/core/random.hpp"
#include "vtg/io/archive.hpp"

using namespace vtg;
using namespace vtg::codec;
namespace fs = std::filesystem;

namespace {

data::ImageFrame random_frame(int64_t h, int64_t w, uint64_t seed) {
  data::ImageFrame f(h, w);
  RandomStream rng(seed, Purpose::test);
  rng.fill_uniform(f.pixels.span(), -1.0, 1.0);
  return f;
}

Codec pool4() { return Codec({CodecKind::pool, 4, ""}); }

}  // namespace

TEST_CASE("identity codec is exact both ways") {
  Codec c;
  const auto x = random_frame(64, 64, 1);
  const auto z = c.encode(x);
  CHECK(z.code == x.pixels);
  CHECK(c.decode(z) == x);
}

TEST_CASE("pool codec on constants") {
  for (float v : {-1.0f, -0.3f, 0.123456f, 0.7f}) {
    data::ImageFrame x(32, 32, v);
    const auto z = pool4().encode(x);
    CHECK(z.height() == 8);
    for (float e : z.code.span()) CHECK(e == v);
    const auto back = pool4().decode(z);
    for (float e : back.pixels.span()) CHECK(e == v);
  }
}

TEST_CASE("pool codec checkerboard matches block means") {
  // 4x4 blocks aligned with the pooling grid, alternating +-1, plus one
  // misaligned pattern whose block means are fractional.
  data::ImageFrame aligned(16, 16), shifted(16, 16);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        aligned.at(c, y, x) = ((y / 4 + x / 4) % 2) ? 1.0f : -1.0f;
        shifted.at(c, y, x) = (((y + 1) / 4 + (x + 2) / 4) % 2) ? 1.0f : -1.0f;
      }
  for (const auto* img : {&aligned, &shifted}) {
    const auto z = pool4().encode(*img);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          double s = 0.0;
          for (int dy = 0; dy < 4; ++dy)
            for (int dx = 0; dx < 4; ++dx) s += img->at(c, i * 4 + dy, j * 4 + dx);
          CHECK(z.code[(c * 4 + i) * 4 + j] == static_cast<float>(s / 16.0));
        }
  }
}

TEST_CASE("pool codec round trips") {
  // Block-constant images survive decode(encode(x)).
  const auto base = random_frame(8, 8, 2);
  data::ImageFrame blocky(32, 32);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) blocky.at(c, y, x) = base.at(c, y / 4, x / 4);
  CHECK(pool4().decode(pool4().encode(blocky)) == blocky);
  // Latents survive encode(decode(z)).
  LatentCode z{random_frame(8, 8, 3).pixels};
  CHECK(pool4().encode(pool4().decode(z)).code == z.code);
}

TEST_CASE("codec validation") {
  CHECK_THROWS_AS(pool4().encode(data::ImageFrame(30, 32)), Error);
  CHECK_THROWS_AS(Codec({CodecKind::identity, 2, ""}), Error);
  CHECK_THROWS_AS(pool4().decode(LatentCode{Tensor<float>({4, 8, 8})}), Error);
  CHECK_THROWS_AS(parse_codec_kind("vqgan"), Error);
}

TEST_CASE("learned codec loads patch weights") {
  const auto dir = fs::temp_directory_path() / "vtg_test_codec";
  fs::create_directories(dir);
  // Weights that reproduce the pool codec: mean over each channel's patch.
  const int f = 2, p = 3 * f * f;
  Codec::PatchWeights w{Tensor<float>({3, p}), Tensor<float>({3}), Tensor<float>({p, 3}), Tensor<float>({p})};
  for (int o = 0; o < 3; ++o)
    for (int k = 0; k < f * f; ++k) {
      w.enc_w[o * p + o * f * f + k] = 1.0f / (f * f);
      w.dec_w[(o * f * f + k) * 3 + o] = 1.0f;
    }
  Codec::save_learned_weights(dir / "codec.vtck", f, w);
  Codec learned({CodecKind::learned, f, (dir / "codec.vtck").string()});
  Codec pooled({CodecKind::pool, f, ""});
  const auto x = random_frame(8, 8, 4);
  const auto zl = learned.encode(x), zp = pooled.encode(x);
  for (int64_t i = 0; i < zl.code.numel(); ++i) CHECK(zl.code[i] == doctest::Approx(zp.code[i]).epsilon(1e-6));
  CHECK(learned.decode(zl).pixels.shape() == x.pixels.shape());
  CHECK_THROWS_AS(Codec({CodecKind::learned, 4, (dir / "codec.vtck").string()}), Error);
}

TEST_CASE("archive round trip is bit exact") {
  io::Archive a;
  a.metadata = {{"step", 12}, {"name", "x"}};
  Tensor<float> t({2, 3});
  RandomStream rng(9, Purpose::test);
  rng.fill_normal(t.span());
  Tensor<double> d({4});
  rng.fill_normal(d.span());
  a.put("w", t);
  a.put("d", d);
  a.put("idx", std::vector<int64_t>{1, -2, 3});
  const auto bytes = a.serialize();
  const auto b = io::Archive::parse(bytes);
  CHECK(b.metadata == a.metadata);
  CHECK(b.get_f32("w") == t);
  CHECK(b.get_f64("d") == d);
  CHECK(b.get_i64("idx") == std::vector<int64_t>{1, -2, 3});
  CHECK(b.serialize() == bytes);
  CHECK_THROWS_AS(b.get_f32("w", {3, 2}), Error);
  CHECK_THROWS_AS(b.get_f32("missing"), Error);

  auto corrupt = bytes;
  corrupt[20] ^= 1;
  CHECK_THROWS_AS(io::Archive::parse(corrupt), Error);
  CHECK_THROWS_AS(io::Archive::parse({bytes.begin(), bytes.begin() + 10}), Error);
}
