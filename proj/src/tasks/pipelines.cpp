#include "vtg/tasks/pipelines.hpp"

namespace vtg::tasks {

namespace {

Tensor<float> with_batch_dim(const Tensor<float>& t, int64_t copies) {
  Shape s = t.shape();
  s.insert(s.begin(), copies);
  Tensor<float> out(s);
  const int64_t m = t.numel();
  for (int64_t n = 0; n < copies; ++n) std::copy(t.data(), t.data() + m, out.data() + n * m);
  return out;
}

std::vector<data::ImageFrame> decode_all(const Bundle& bundle, const Tensor<float>& latents) {
  const auto x = bundle.codec().decode_batch(latents);
  std::vector<data::ImageFrame> frames;
  for (int64_t n = 0; n < x.dim(0); ++n) frames.emplace_back(x.slice0(n));
  return frames;
}

void require_direction(const Bundle& bundle, Direction d) {
  if (bundle.spec.direction != d)
    fail(ErrorCode::configuration, "bundle was trained for " + direction_name(bundle.spec.direction) + ", not " +
                                       direction_name(d));
}

void require_clip_condition(const Bundle& bundle) {
  if (bundle.condition.kind() != ConditionKind::clip)
    fail(ErrorCode::configuration, "bundle is label-conditioned; it cannot take a clip");
}

Tensor<float> clip_context(const Bundle& bundle, const data::TactileClip& clip, int64_t copies) {
  require_clip_condition(bundle);
  const auto e = bundle.condition.embed(cvtp::batch_clips<data::TactileClip>({&clip}, bundle.condition.encoder_config().window));
  return with_batch_dim(e.slice0(0), copies);
}

}  // namespace

std::vector<data::ImageFrame> generate(const Bundle& bundle, const Tensor<float>& context,
                                       const std::vector<uint64_t>& seeds, const Tensor<float>& concat,
                                       const SampleOptions& options) {
  return decode_all(bundle, bundle.sample_latents(context, seeds, concat, options.steps, options.guidance));
}

std::vector<data::ImageFrame> touch_to_image(const data::TactileClip& clip, const Bundle& bundle,
                                             const std::vector<uint64_t>& seeds, const SampleOptions& options) {
  require_direction(bundle, Direction::touch_to_image);
  if (bundle.spec.concat != ConcatSource::none)
    fail(ErrorCode::configuration, "bundle needs a " + concat_name(bundle.spec.concat) + " input");
  const auto n = static_cast<int64_t>(seeds.size());
  return generate(bundle, clip_context(bundle, clip, n), seeds, {}, options);
}

data::ImageFrame touch_to_image(const data::TactileClip& clip, const Bundle& bundle, uint64_t seed,
                                const SampleOptions& options) {
  return touch_to_image(clip, bundle, std::vector<uint64_t>{seed}, options).front();
}

data::ImageFrame touch_to_image(const data::TactileClip& clip, const data::ImageFrame& reference,
                                const Bundle& bundle, uint64_t seed, const SampleOptions& options) {
  require_direction(bundle, Direction::touch_to_image);
  if (bundle.spec.concat != ConcatSource::reference)
    fail(ErrorCode::configuration, "bundle was not trained with a reference image");
  const auto z_ref = bundle.codec().encode(reference).code;
  return generate(bundle, clip_context(bundle, clip, 1), {seed}, with_batch_dim(z_ref, 1), options).front();
}

data::ImageFrame image_to_touch(const data::VisualClip& clip, const Bundle& bundle, uint64_t seed,
                                const SampleOptions& options) {
  require_direction(bundle, Direction::image_to_touch);
  require_clip_condition(bundle);
  if (bundle.spec.concat != ConcatSource::none)
    fail(ErrorCode::configuration, "bundle needs a " + concat_name(bundle.spec.concat) + " input");
  const auto ctx = bundle.condition.embed(cvtp::batch_clips<data::VisualClip>({&clip}, bundle.condition.encoder_config().window));
  return generate(bundle, ctx, {seed}, {}, options).front();
}

std::vector<data::ImageFrame> stylize(const data::ImageFrame& image, const data::TactileClip& target, int level,
                                      const Bundle& bundle, const std::vector<uint64_t>& seeds,
                                      const SampleOptions& options) {
  require_direction(bundle, Direction::touch_to_image);
  if (bundle.spec.concat != ConcatSource::none)
    fail(ErrorCode::configuration, "stylization needs a bundle without concatenated conditioning");
  if (level < 0 || level > bundle.schedule.T)
    fail(ErrorCode::validation, "stylization level N=" + std::to_string(level) + " outside [0, " +
                                    std::to_string(bundle.schedule.T) + "]");
  const auto n = static_cast<int64_t>(seeds.size());
  const auto codec = bundle.codec();
  const auto z0 = with_batch_dim(codec.encode(image).code, n);
  diffusion::ChainOptions opts;
  opts.steps = options.steps > 0 ? options.steps : bundle.sample_steps;
  opts.guidance = options.guidance >= 0.0 ? options.guidance : bundle.spec.guidance;
  opts.x0_clip = bundle.x0_clip;
  const auto z = diffusion::sdedit_sample(bundle.eps_fn(), z0, level, clip_context(bundle, target, n), seeds, opts,
                                          bundle.schedule);
  return decode_all(bundle, z);
}

data::ImageFrame stylize(const data::ImageFrame& image, const data::TactileClip& target, int level,
                         const Bundle& bundle, uint64_t seed, const SampleOptions& options) {
  return stylize(image, target, level, bundle, std::vector<uint64_t>{seed}, options).front();
}

Tensor<float> implied_shading(const data::ImageFrame& image, const data::ReflectanceMap& reflectance) {
  require(image.pixels.shape() == reflectance.pixels.shape(), "image and reflectance sizes differ");
  Tensor<float> s(image.pixels.shape());
  for (int64_t i = 0; i < s.numel(); ++i)
    s[i] = ((image.pixels[i] + 1.0f) * 0.5f) / (reflectance.pixels[i] + 1e-3f);
  return s;
}

std::vector<ShadingEstimate> shading_estimate(const data::ReflectanceMap& reflectance, const data::TactileClip* clip,
                                              const Bundle& bundle, const std::vector<uint64_t>& seeds,
                                              const SampleOptions& options) {
  require_direction(bundle, Direction::touch_to_image);
  if (bundle.spec.concat != ConcatSource::reflectance)
    fail(ErrorCode::configuration, "bundle was not trained with reflectance concatenation");
  const auto n = static_cast<int64_t>(seeds.size());
  const auto z_r = bundle.codec().encode(data::unit_to_signed(reflectance.pixels)).code;
  const Tensor<float> ctx = clip ? clip_context(bundle, *clip, n) : Tensor<float>({n, bundle.condition.dim()});
  auto frames = generate(bundle, ctx, seeds, with_batch_dim(z_r, n), options);
  std::vector<ShadingEstimate> out;
  for (auto& f : frames) {
    auto s = implied_shading(f, reflectance);
    out.push_back({std::move(f), std::move(s)});
  }
  return out;
}

ShadingEstimate shading_estimate(const data::ReflectanceMap& reflectance, const data::TactileClip& clip,
                                 const Bundle& bundle, uint64_t seed, const SampleOptions& options) {
  return std::move(shading_estimate(reflectance, &clip, bundle, std::vector<uint64_t>{seed}, options).front());
}

}  // namespace vtg::tasks
