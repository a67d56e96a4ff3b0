#pragma once

#include <vector>

#include "vtg/tasks/task.hpp"

namespace vtg::tasks {

struct SampleOptions {
  int steps = 0;          // 0: bundle default
  double guidance = -1.0;  // < 0: spec default
};

// Generic batch generation: contexts [N, D], optional concat latents
// [N, C', h, w], one seed per item. Returns decoded frames.
std::vector<data::ImageFrame> generate(const Bundle& bundle, const Tensor<float>& context,
                                       const std::vector<uint64_t>& seeds, const Tensor<float>& concat = {},
                                       const SampleOptions& options = {});

data::ImageFrame touch_to_image(const data::TactileClip& clip, const Bundle& bundle, uint64_t seed,
                                const SampleOptions& options = {});
// Same, with a reference photo (reference-conditioned bundles).
data::ImageFrame touch_to_image(const data::TactileClip& clip, const data::ImageFrame& reference,
                                const Bundle& bundle, uint64_t seed, const SampleOptions& options = {});
data::ImageFrame image_to_touch(const data::VisualClip& clip, const Bundle& bundle, uint64_t seed,
                                const SampleOptions& options = {});

// Batched over seeds for a single conditioning clip.
std::vector<data::ImageFrame> touch_to_image(const data::TactileClip& clip, const Bundle& bundle,
                                             const std::vector<uint64_t>& seeds, const SampleOptions& options = {});

// Noises encode(image) to level N and denoises toward the target touch.
data::ImageFrame stylize(const data::ImageFrame& image, const data::TactileClip& target, int level,
                         const Bundle& bundle, uint64_t seed, const SampleOptions& options = {});
std::vector<data::ImageFrame> stylize(const data::ImageFrame& image, const data::TactileClip& target, int level,
                                      const Bundle& bundle, const std::vector<uint64_t>& seeds,
                                      const SampleOptions& options = {});

struct ShadingEstimate {
  data::ImageFrame image;
  Tensor<float> shading;  // [3, H, W], image in [0,1] over (reflectance + 1e-3)
};

// x / (R + 1e-3) per channel with x mapped to [0, 1].
Tensor<float> implied_shading(const data::ImageFrame& image, const data::ReflectanceMap& reflectance);

ShadingEstimate shading_estimate(const data::ReflectanceMap& reflectance, const data::TactileClip& clip,
                                 const Bundle& bundle, uint64_t seed, const SampleOptions& options = {});
// Batched over seeds; a zero context when `clip` is null (the null-condition control).
std::vector<ShadingEstimate> shading_estimate(const data::ReflectanceMap& reflectance, const data::TactileClip* clip,
                                              const Bundle& bundle, const std::vector<uint64_t>& seeds,
                                              const SampleOptions& options = {});

}  // namespace vtg::tasks
