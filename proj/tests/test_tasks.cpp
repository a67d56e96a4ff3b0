#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "vtg/data/synth.hpp"
#include "vtg/tasks/pipelines.hpp"
#include "vtg/tasks/train.hpp"

using namespace vtg;
using namespace vtg::tasks;
namespace fs = std::filesystem;

namespace {

data::PairItem synth_item(int cls, uint64_t seed, bool occluder = false, int64_t tactile_size = 16) {
  data::SynthParams p;
  p.num_classes = 2;
  p.roughness_class = cls;
  p.seed = seed;
  p.image_size = 16;
  p.tactile_size = tactile_size;
  p.occluder = occluder;
  auto s = data::synth_pair(p);
  data::PairItem it;
  it.id = "item" + std::to_string(seed);
  it.visual = std::move(s.visual);
  it.tactile = std::move(s.tactile);
  it.mask = std::move(s.mask);
  it.reflectance = std::move(s.reflectance);
  it.label = s.label;
  return it;
}

std::vector<data::PairItem> synth_items(int n, bool occluder = false, int64_t tactile_size = 16) {
  std::vector<data::PairItem> items;
  for (int i = 0; i < n; ++i) items.push_back(synth_item(i % 2, 700 + static_cast<uint64_t>(i), occluder, tactile_size));
  return items;
}

TaskModelConfig tiny_config(TaskSpec spec = {}) {
  TaskModelConfig c;
  c.spec = spec;
  c.codec = {codec::CodecKind::pool, 2, ""};
  c.unet.base_channels = 8;
  c.unet.channel_mult = {1, 2};
  c.unet.attention_factors = {2};
  c.unet.num_res_blocks = 1;
  c.unet.head_channels = 8;
  c.unet.context_dim = 8;
  c.unet.norm_groups = 4;
  c.encoder.base_width = 4;
  c.encoder.stage_blocks = {1};
  c.encoder.embed_dim = 8;
  c.encoder.norm_groups = 2;
  c.sample_steps = 8;
  return c;
}

DiffusionTrainOptions tiny_options(int64_t steps = 3) {
  DiffusionTrainOptions o;
  o.max_steps = steps;
  o.batch_size = 2;
  o.lr = 1e-3;
  o.seed = 5;
  return o;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vtg_test_tasks_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("enum names round trip") {
  for (auto d : {Direction::touch_to_image, Direction::image_to_touch}) CHECK(parse_direction(direction_name(d)) == d);
  for (auto c : {ConcatSource::none, ConcatSource::reflectance, ConcatSource::reference})
    CHECK(parse_concat(concat_name(c)) == c);
  for (auto k : {ConditionKind::clip, ConditionKind::label}) CHECK(parse_condition_kind(condition_kind_name(k)) == k);
  CHECK(code_of([] { parse_direction("sideways"); }) == ErrorCode::configuration);
}

TEST_CASE("task spec validation and json") {
  TaskSpec s;
  s.direction = Direction::image_to_touch;
  s.concat = ConcatSource::reflectance;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::configuration);
  s.concat = ConcatSource::none;
  s.hand_free = true;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::configuration);

  TaskSpec t;
  t.hand_free = true;
  t.concat = ConcatSource::reference;
  t.sdedit_level = 250;
  t.guidance = 3.0;
  const auto back = TaskSpec::from_json(t.to_json());
  CHECK(back.hand_free);
  CHECK(back.concat == ConcatSource::reference);
  CHECK(back.level(1000) == 250);
  CHECK(back.guidance == 3.0);
  CHECK(TaskSpec{}.level(1000) == 500);
}

TEST_CASE("preflight names the offending item") {
  auto items = synth_items(3);
  TaskSpec hand_free;
  hand_free.hand_free = true;
  items[1].mask.reset();
  try {
    preflight(hand_free, ConditionKind::clip, items);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
    CHECK(std::string(e.what()).find(items[1].id) != std::string::npos);
  }

  TaskSpec shading;
  shading.concat = ConcatSource::reflectance;
  items[2].reflectance.reset();
  CHECK(code_of([&] { preflight(shading, ConditionKind::clip, items); }) == ErrorCode::validation);

  TaskSpec reference;
  reference.concat = ConcatSource::reference;
  CHECK(code_of([&] { preflight(reference, ConditionKind::clip, synth_items(2)); }) == ErrorCode::validation);

  CHECK(code_of([] { preflight(TaskSpec{}, ConditionKind::clip, {}); }) == ErrorCode::validation);

  auto mixed = synth_items(2);
  mixed.push_back(synth_item(0, 99));
  data::SynthParams big;
  big.image_size = 24;
  big.tactile_size = 16;
  mixed.back().visual = data::synth_pair(big).visual;
  CHECK(code_of([&] { preflight(TaskSpec{}, ConditionKind::clip, mixed); }) == ErrorCode::validation);

  // Training refuses before any step runs.
  TrainReport rep;
  CHECK(code_of([&] { train_task(tiny_config(hand_free), items, tiny_options(), &rep); }) == ErrorCode::validation);
  CHECK(rep.losses.empty());
}

TEST_CASE("training is deterministic and bundles reproduce their fingerprint") {
  const auto items = synth_items(4);
  TrainReport r1, r2;
  const auto b1 = train_task(tiny_config(), items, tiny_options(), &r1);
  const auto b2 = train_task(tiny_config(), items, tiny_options(), &r2);
  REQUIRE(r1.losses.size() == 3);
  CHECK(r1.losses == r2.losses);
  for (double l : r1.losses) CHECK(std::isfinite(l));
  REQUIRE(b1.fingerprint);
  CHECK(same_bits(b1.fingerprint->latent, b2.fingerprint->latent));
  CHECK(b1.verify_fingerprint());

  const auto dir = scratch_dir("bundle");
  b1.save(dir);
  const auto loaded = Bundle::load(dir);
  CHECK(loaded.verify_fingerprint());
  CHECK(loaded.spec.direction == Direction::touch_to_image);
  CHECK(loaded.sample_steps == 8);
  CHECK(loaded.x0_clip == b1.x0_clip);
  CHECK(loaded.frame_height == 16);

  const auto a = touch_to_image(items[0].tactile, b1, 11);
  const auto b = touch_to_image(items[0].tactile, loaded, 11);
  CHECK(same_bits(a.pixels, b.pixels));
  CHECK(a.pixels.shape() == Shape({3, 16, 16}));
  for (float v : a.pixels.storage()) CHECK((v >= -1.0f && v <= 1.0f));
  fs::remove_all(dir);
}

TEST_CASE("bundle load errors") {
  const auto dir = scratch_dir("broken");
  fs::create_directories(dir);
  CHECK(code_of([&] { Bundle::load(dir); }) == ErrorCode::load);
  {
    std::ofstream(dir / "bundle.json") << "{ not json";
  }
  CHECK(code_of([&] { Bundle::load(dir); }) == ErrorCode::load);
  fs::remove_all(dir);
}

TEST_CASE("pipelines check the bundle direction and inputs") {
  const auto items = synth_items(2);
  const auto bundle = train_task(tiny_config(), items, tiny_options(1), nullptr);
  CHECK(code_of([&] { image_to_touch(items[0].visual, bundle, 1); }) == ErrorCode::configuration);
  CHECK(code_of([&] { shading_estimate(*items[0].reflectance, items[0].tactile, bundle, 1); }) ==
        ErrorCode::configuration);
  CHECK(code_of([&] { touch_to_image(items[0].tactile, items[0].visual.center(), bundle, 1); }) ==
        ErrorCode::configuration);
}

TEST_CASE("stylize") {
  const auto items = synth_items(2);
  const auto bundle = train_task(tiny_config(), items, tiny_options(1), nullptr);
  const auto& image = items[0].visual.center();
  const auto codec = bundle.codec();

  SUBCASE("N = 0 is the codec round trip") {
    const auto out = stylize(image, items[1].tactile, 0, bundle, 3);
    CHECK(same_bits(out.pixels, codec.decode(codec.encode(image)).pixels));
  }
  SUBCASE("N = T ignores the input image") {
    const int T = bundle.schedule.T;
    const auto a = stylize(image, items[1].tactile, T, bundle, 3);
    const auto b = stylize(items[1].visual.center(), items[1].tactile, T, bundle, 3);
    CHECK(same_bits(a.pixels, b.pixels));
  }
  SUBCASE("N out of range") {
    CHECK(code_of([&] { stylize(image, items[1].tactile, -1, bundle, 3); }) == ErrorCode::validation);
    CHECK(code_of([&] { stylize(image, items[1].tactile, bundle.schedule.T + 1, bundle, 3); }) ==
          ErrorCode::validation);
  }
  SUBCASE("deterministic under a fixed seed") {
    const auto a = stylize(image, items[1].tactile, 500, bundle, 4);
    const auto b = stylize(image, items[1].tactile, 500, bundle, 4);
    CHECK(same_bits(a.pixels, b.pixels));
  }
}

TEST_CASE("image to touch matches the tactile frame shape") {
  const auto items = synth_items(2, false, 8);
  TaskSpec spec;
  spec.direction = Direction::image_to_touch;
  const auto bundle = train_task(tiny_config(spec), items, tiny_options(1), nullptr);
  const auto a = image_to_touch(items[0].visual, bundle, 2);
  const auto b = image_to_touch(items[0].visual, bundle, 2);
  CHECK(a.pixels.shape() == Shape({3, 8, 8}));
  CHECK(same_bits(a.pixels, b.pixels));
  CHECK(code_of([&] { touch_to_image(items[0].tactile, bundle, 1); }) == ErrorCode::configuration);
}

TEST_CASE("shading estimation") {
  const auto items = synth_items(2);
  TaskSpec spec;
  spec.concat = ConcatSource::reflectance;
  const auto bundle = train_task(tiny_config(spec), items, tiny_options(1), nullptr);
  CHECK(bundle.denoiser.config().in_channels == 6);
  const auto& refl = *items[0].reflectance;
  const auto a = shading_estimate(refl, items[0].tactile, bundle, 9);
  const auto b = shading_estimate(refl, items[0].tactile, bundle, 9);
  CHECK(same_bits(a.image.pixels, b.image.pixels));
  CHECK(a.shading.shape() == refl.pixels.shape());
  const auto control = shading_estimate(refl, nullptr, bundle, {9, 10});
  CHECK(control.size() == 2);
  CHECK(code_of([&] { touch_to_image(items[0].tactile, bundle, 1); }) == ErrorCode::configuration);
}

TEST_CASE("implied shading divides by the guarded reflectance") {
  data::ImageFrame img(2, 2, 0.0f);  // 0.5 on the unit scale
  data::ReflectanceMap r{Tensor<float>({3, 2, 2}, 0.25f)};
  r.pixels[0] = 0.0f;
  const auto s = implied_shading(img, r);
  CHECK(s[0] == doctest::Approx(0.5 / 1e-3));
  CHECK(s[1] == doctest::Approx(0.5 / 0.251));
  CHECK(code_of([&] { implied_shading(data::ImageFrame(2, 3), r); }) == ErrorCode::validation);
}

TEST_CASE("hand-free training runs the gradient probe each epoch") {
  const auto items = synth_items(4, true);
  TaskSpec spec;
  spec.hand_free = true;
  auto opt = tiny_options(0);
  opt.epochs = 3;
  TrainReport rep;
  const auto bundle = train_task(tiny_config(spec), items, opt, &rep);
  CHECK(rep.losses.size() == 6);
  CHECK(rep.hand_free_probes == 3);
  CHECK(bundle.spec.hand_free);
}

TEST_CASE("label-conditioned variant") {
  const auto items = synth_items(4);
  auto config = tiny_config();
  config.condition = ConditionKind::label;
  config.num_labels = 3;
  const auto bundle = train_task(config, items, tiny_options(2), nullptr);
  CHECK(bundle.condition.kind() == ConditionKind::label);
  CHECK(bundle.condition.num_labels() == 3);
  const auto in = condition_input(bundle, items[1]);
  CHECK(in.shape() == Shape({1, 3}));
  CHECK(in[1] == 1.0f);
  CHECK(in[0] + in[2] == 0.0f);
  const auto e = bundle.condition.embed(in);
  double norm = 0;
  for (float v : e.storage()) norm += static_cast<double>(v) * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(code_of([&] { touch_to_image(items[0].tactile, bundle, 1); }) == ErrorCode::configuration);
}

TEST_CASE("training option errors") {
  const auto items = synth_items(2);
  auto opt = tiny_options();
  opt.batch_size = 0;
  CHECK(code_of([&] { train_task(tiny_config(), items, opt, nullptr); }) == ErrorCode::configuration);
  opt = tiny_options();
  opt.drop_prob = 1.0;
  CHECK(code_of([&] { train_task(tiny_config(), items, opt, nullptr); }) == ErrorCode::configuration);
}
