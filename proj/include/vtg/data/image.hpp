#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vtg/core/tensor.hpp"

namespace vtg::data {

// RGB frame stored channel-major [3, H, W], values in [-1, 1].
struct ImageFrame {
  Tensor<float> pixels;

  ImageFrame() = default;
  explicit ImageFrame(Tensor<float> p);
  ImageFrame(int64_t height, int64_t width, float fill = 0.0f) : pixels({3, height, width}, fill) {}

  int64_t height() const { return pixels.dim(1); }
  int64_t width() const { return pixels.dim(2); }
  float& at(int c, int64_t y, int64_t x) { return pixels[(c * height() + y) * width() + x]; }
  float at(int c, int64_t y, int64_t x) const { return pixels[(c * height() + y) * width() + x]; }

  friend bool operator==(const ImageFrame& a, const ImageFrame& b) { return a.pixels == b.pixels; }
};

// A temporal window of 2C+1 frames centred on the contact frame.
template <typename Tag>
struct FrameClip {
  std::vector<ImageFrame> frames;

  int window() const { return static_cast<int>(frames.size()); }
  const ImageFrame& center() const { return frames.at(frames.size() / 2); }
  // Throws when the window is even or frames disagree in size.
  void validate() const;
  // Channel-wise concatenation [3w, H, W] (early fusion input).
  Tensor<float> fused() const;
  // A clip made of one frame repeated w times.
  static FrameClip replicate(const ImageFrame& frame, int window);
};

using TactileClip = FrameClip<struct TactileTag>;
using VisualClip = FrameClip<struct VisualTag>;

// [H, W] with 0 = hand/sensor (excluded from the loss) and 1 = scene.
struct SegMask {
  Tensor<float> mask;

  int64_t height() const { return mask.dim(0); }
  int64_t width() const { return mask.dim(1); }
  static SegMask ones(int64_t height, int64_t width) { return {Tensor<float>({height, width}, 1.0f)}; }
};

// Per-pixel albedo [3, H, W] in [0, 1].
struct ReflectanceMap {
  Tensor<float> pixels;

  int64_t height() const { return pixels.dim(1); }
  int64_t width() const { return pixels.dim(2); }
};

// 8-bit value v maps to 2v/255 - 1.
inline float normalize_u8(uint8_t v) { return 2.0f * static_cast<float>(v) / 255.0f - 1.0f; }
uint8_t quantize_signed(float v);
uint8_t quantize_unit(float v);

// Interleaved 8-bit RGB (H*W*3) <-> ImageFrame.
ImageFrame frame_from_rgb8(const std::vector<uint8_t>& rgb, int64_t height, int64_t width);
std::vector<uint8_t> frame_to_rgb8(const ImageFrame& frame);

// Block minimum: a latent cell is 0 if any pixel in its block is 0.
SegMask downsample_mask(const SegMask& mask, int64_t height, int64_t width);

// Values in [0,1] -> [-1,1] (e.g. to feed a reflectance map through the codec).
ImageFrame unit_to_signed(const Tensor<float>& unit_chw);
Tensor<float> signed_to_unit(const ImageFrame& frame);

}  // namespace vtg::data
