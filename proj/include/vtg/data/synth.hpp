#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "vtg/data/image.hpp"

namespace vtg::data {

struct SynthParams {
  int roughness_class = 0;
  int num_classes = 3;
  // Drawn from the seed when absent.
  std::optional<std::array<float, 3>> albedo;
  uint64_t seed = 0;
  int context = 2;  // C; clips have 2C+1 frames
  int image_size = 256;
  int tactile_size = 256;
  bool occluder = false;
};

// Heightfield amplitude and grating frequency (cycles per image width) of class r.
double roughness_amplitude(int roughness_class);
double roughness_frequency(int roughness_class);

struct SynthPair {
  VisualClip visual;
  TactileClip tactile;
  SegMask mask;                // centre frame
  ReflectanceMap reflectance;  // centre frame
  Tensor<float> shading;       // centre frame, [H, W] in [0, 1]
  int label = 0;
  // Per-frame ground truth: visual frame k = 2 * (reflectance ⊙ shading) - 1.
  std::vector<ReflectanceMap> frame_reflectance;
  std::vector<Tensor<float>> frame_shading;
  // Gel indentation depth per tactile frame, [Ht, Wt].
  std::vector<Tensor<float>> deformation;
  std::vector<double> press_depth;
};

SynthPair synth_pair(const SynthParams& params);

}  // namespace vtg::data
