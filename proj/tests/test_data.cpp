#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vtg/core/random.hpp"
#include "vtg/data/manifest.hpp"
#include "vtg/data/png_io.hpp"
#include "vtg/data/synth.hpp"

using namespace vtg;
using namespace vtg::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vtg_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SynthParams small(int cls, uint64_t seed, bool occluder = false, int context = 2) {
  SynthParams p;
  p.roughness_class = cls;
  p.seed = seed;
  p.image_size = 32;
  p.tactile_size = 32;
  p.occluder = occluder;
  p.context = context;
  return p;
}

PairItem to_item(const SynthPair& s, const std::string& id) {
  PairItem item;
  item.id = id;
  item.visual = s.visual;
  item.tactile = s.tactile;
  item.mask = s.mask;
  item.reflectance = s.reflectance;
  item.shading = s.shading;
  item.label = s.label;
  return item;
}

// Sobel magnitude on the luminance of a frame, averaged over interior pixels.
double sobel_mean(const ImageFrame& f) {
  const auto h = f.height(), w = f.width();
  auto lum = [&](int64_t y, int64_t x) {
    return (f.at(0, y, x) + f.at(1, y, x) + f.at(2, y, x)) / 3.0;
  };
  double total = 0.0;
  for (int64_t y = 1; y + 1 < h; ++y)
    for (int64_t x = 1; x + 1 < w; ++x) {
      const double gx = lum(y - 1, x + 1) + 2 * lum(y, x + 1) + lum(y + 1, x + 1) - lum(y - 1, x - 1) -
                        2 * lum(y, x - 1) - lum(y + 1, x - 1);
      const double gy = lum(y + 1, x - 1) + 2 * lum(y + 1, x) + lum(y + 1, x + 1) - lum(y - 1, x - 1) -
                        2 * lum(y - 1, x) - lum(y - 1, x + 1);
      total += std::hypot(gx, gy);
    }
  return total / static_cast<double>((h - 2) * (w - 2));
}

}  // namespace

TEST_CASE("8-bit normalization endpoints") {
  CHECK(normalize_u8(255) == 1.0f);
  CHECK(normalize_u8(0) == -1.0f);
  for (int v = 0; v < 256; ++v) CHECK(quantize_signed(normalize_u8(static_cast<uint8_t>(v))) == v);
}

TEST_CASE("synthetic flat surface has constant shading") {
  for (uint64_t seed : {1u, 7u, 99u}) {
    const auto s = synth_pair(small(0, seed));
    for (const auto& sh : s.frame_shading) {
      const auto [lo, hi] = std::minmax_element(sh.span().begin(), sh.span().end());
      CHECK(*lo == *hi);
    }
  }
}

TEST_CASE("synthesis is deterministic") {
  const auto a = synth_pair(small(2, 42, true));
  const auto b = synth_pair(small(2, 42, true));
  for (size_t k = 0; k < a.visual.frames.size(); ++k) {
    CHECK(a.visual.frames[k] == b.visual.frames[k]);
    CHECK(a.tactile.frames[k] == b.tactile.frames[k]);
  }
  CHECK(a.mask.mask == b.mask.mask);
  CHECK(a.reflectance.pixels == b.reflectance.pixels);
  const auto c = synth_pair(small(2, 43, true));
  CHECK_FALSE(a.tactile.center() == c.tactile.center());
}

TEST_CASE("visual equals reflectance times shading exactly") {
  for (int cls = 0; cls < 3; ++cls)
    for (bool occ : {false, true}) {
      const auto s = synth_pair(small(cls, 5 + cls, occ));
      for (size_t k = 0; k < s.visual.frames.size(); ++k) {
        const auto& f = s.visual.frames[k];
        const auto& r = s.frame_reflectance[k].pixels;
        const auto& sh = s.frame_shading[k];
        const int64_t hw = f.height() * f.width();
        float worst = 0.0f;
        for (int c = 0; c < 3; ++c)
          for (int64_t i = 0; i < hw; ++i)
            worst = std::max(worst, std::abs(f.pixels[c * hw + i] - (2.0f * (r[c * hw + i] * sh[i]) - 1.0f)));
        CHECK(worst == 0.0f);
      }
    }
}

TEST_CASE("values stay in range and masks are binary") {
  const auto s = synth_pair(small(2, 11, true));
  for (const auto& f : s.visual.frames)
    for (float v : f.pixels.span()) CHECK((v >= -1.0f && v <= 1.0f));
  for (const auto& f : s.tactile.frames)
    for (float v : f.pixels.span()) CHECK((v >= -1.0f && v <= 1.0f));
  int zeros = 0;
  for (float v : s.mask.mask.span()) {
    CHECK((v == 0.0f || v == 1.0f));
    zeros += v == 0.0f;
  }
  CHECK(zeros > 0);
  const auto plain = synth_pair(small(2, 11, false));
  for (float v : plain.mask.mask.span()) CHECK(v == 1.0f);
}

TEST_CASE("tactile gradient magnitude increases with roughness") {
  std::array<double, 3> mean{};
  for (int cls = 0; cls < 3; ++cls) {
    for (uint64_t seed = 0; seed < 100; ++seed) {
      auto p = small(cls, seed);
      p.image_size = 8;
      p.tactile_size = 48;
      mean[static_cast<size_t>(cls)] += sobel_mean(synth_pair(p).tactile.center()) / 100.0;
    }
  }
  MESSAGE("mean Sobel magnitude per class: " << mean[0] << " " << mean[1] << " " << mean[2]);
  CHECK(mean[0] < mean[1]);
  CHECK(mean[1] < mean[2]);
}

TEST_CASE("contact area is non-decreasing across the clip") {
  for (int cls = 0; cls < 4; ++cls) {
    auto p = small(cls, 0);
    p.num_classes = 4;
    for (uint64_t seed = 0; seed < 20; ++seed) {
      p.seed = seed;
      const auto s = synth_pair(p);
      int64_t prev = -1;
      for (const auto& g : s.deformation) {
        const auto area = std::count_if(g.span().begin(), g.span().end(), [](float v) { return v > 1e-4f; });
        CHECK(area >= prev);
        prev = area;
      }
    }
  }
}

TEST_CASE("downsample_mask examples") {
  const auto ones = downsample_mask(SegMask::ones(256, 256), 64, 64);
  CHECK(ones.height() == 64);
  for (float v : ones.mask.span()) CHECK(v == 1.0f);

  auto single = SegMask::ones(16, 16);
  single.mask[0] = 0.0f;
  const auto d = downsample_mask(single, 4, 4);
  for (int64_t i = 0; i < 16; ++i) CHECK(d.mask[i] == (i == 0 ? 0.0f : 1.0f));

  CHECK_THROWS_AS(downsample_mask(SegMask::ones(10, 10), 4, 4), Error);
}

TEST_CASE("downsample_mask matches exhaustive block scan") {
  RandomStream rng(3, Purpose::test);
  for (int trial = 0; trial < 200; ++trial) {
    SegMask m{Tensor<float>({8, 8})};
    for (auto& v : m.mask.storage()) v = rng.uniform() < 0.9 ? 1.0f : 0.0f;
    const auto d = downsample_mask(m, 2, 2);
    for (int by = 0; by < 2; ++by)
      for (int bx = 0; bx < 2; ++bx) {
        bool any_zero = false;
        for (int y = 0; y < 4; ++y)
          for (int x = 0; x < 4; ++x) any_zero = any_zero || m.mask[(by * 4 + y) * 8 + bx * 4 + x] == 0.0f;
        CHECK(d.mask[by * 2 + bx] == (any_zero ? 0.0f : 1.0f));
      }
  }
}

TEST_CASE("manifest loading and pixel-exact round trip") {
  const auto root = scratch("roundtrip");
  std::vector<PairItem> items;
  for (int i = 0; i < 3; ++i) items.push_back(to_item(synth_pair(small(i, 100 + i, true, 3)), "pair_" + std::to_string(i)));
  items[1].reference = items[0].visual.center();
  write_dataset(root, items);

  auto stream = load_manifest(root, 2);
  CHECK(stream.size() == 3);
  std::vector<PairItem> loaded;
  while (auto item = stream.next()) {
    CHECK(item->visual.window() == 5);
    CHECK(item->tactile.window() == 5);
    loaded.push_back(*item);
  }
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[1].reference.has_value());
  CHECK(loaded[2].label == 2);
  // Centre frame survives 8-bit quantization within half a step.
  const auto& a = items[0].visual.center().pixels;
  const auto& b = loaded[0].visual.center().pixels;
  float worst = 0.0f;
  for (int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= 1.0f / 255.0f + 1e-6f);
  CHECK(loaded[0].mask->mask == items[0].mask->mask);

  // Re-serializing the loaded dataset reproduces the same pixels exactly.
  const auto root2 = scratch("roundtrip2");
  write_dataset(root2, loaded);
  const auto again = load_manifest(root2, 2).load_all();
  for (size_t i = 0; i < loaded.size(); ++i) {
    for (size_t k = 0; k < 5; ++k) {
      CHECK(again[i].visual.frames[k] == loaded[i].visual.frames[k]);
      CHECK(again[i].tactile.frames[k] == loaded[i].tactile.frames[k]);
    }
    CHECK(again[i].mask->mask == loaded[i].mask->mask);
    CHECK(again[i].reflectance->pixels == loaded[i].reflectance->pixels);
  }
}

TEST_CASE("manifest errors") {
  const auto root = scratch("errors");
  write_dataset(root, {to_item(synth_pair(small(1, 1)), "good"), to_item(synth_pair(small(1, 2)), "broken")});
  fs::remove(root / "broken" / "mask.png");
  try {
    load_manifest(root, 2);
    FAIL("expected a load error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::load);
    CHECK(std::string(e.what()).find("broken") != std::string::npos);
  }

  const auto short_root = scratch("short");
  write_dataset(short_root, {to_item(synth_pair(small(1, 1, false, 1)), "short")});
  try {
    load_manifest(short_root, 2);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
  }
  CHECK_THROWS_AS(load_manifest(scratch("empty") / "manifest.json", 2), Error);
}

TEST_CASE("PNG mask threshold") {
  const auto root = scratch("mask");
  Raster8 r{1, 4, 1, {0, 127, 128, 255}};
  write_png(root / "m.png", r);
  const auto m = read_mask(root / "m.png");
  CHECK(m.mask[0] == 0.0f);
  CHECK(m.mask[1] == 0.0f);
  CHECK(m.mask[2] == 1.0f);
  CHECK(m.mask[3] == 1.0f);
}
