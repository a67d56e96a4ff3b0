#include "vtg/data/image.hpp"

#include <algorithm>
#include <cmath>

namespace vtg::data {

ImageFrame::ImageFrame(Tensor<float> p) : pixels(std::move(p)) {
  require(pixels.rank() == 3 && pixels.dim(0) == 3, "image frame must be [3, H, W], got " + shape_string(pixels.shape()));
}

template <typename Tag>
void FrameClip<Tag>::validate() const {
  require(!frames.empty() && frames.size() % 2 == 1, "clip window must be odd, got " + std::to_string(frames.size()));
  for (const auto& f : frames)
    require(f.pixels.shape() == frames.front().pixels.shape(), "clip frames differ in size");
}

template <typename Tag>
Tensor<float> FrameClip<Tag>::fused() const {
  validate();
  const auto h = frames.front().height(), w = frames.front().width();
  Tensor<float> out({3 * static_cast<int64_t>(frames.size()), h, w});
  const int64_t block = 3 * h * w;
  for (size_t i = 0; i < frames.size(); ++i)
    std::copy_n(frames[i].pixels.data(), block, out.data() + static_cast<int64_t>(i) * block);
  return out;
}

template <typename Tag>
FrameClip<Tag> FrameClip<Tag>::replicate(const ImageFrame& frame, int window) {
  FrameClip clip;
  clip.frames.assign(static_cast<size_t>(window), frame);
  return clip;
}

template struct FrameClip<TactileTag>;
template struct FrameClip<VisualTag>;

uint8_t quantize_signed(float v) {
  const float unit = std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(unit * 255.0f));
}

uint8_t quantize_unit(float v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

ImageFrame frame_from_rgb8(const std::vector<uint8_t>& rgb, int64_t height, int64_t width) {
  require(static_cast<int64_t>(rgb.size()) == height * width * 3, "rgb buffer size mismatch");
  ImageFrame frame(height, width);
  for (int64_t y = 0; y < height; ++y)
    for (int64_t x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) frame.at(c, y, x) = normalize_u8(rgb[static_cast<size_t>((y * width + x) * 3 + c)]);
  return frame;
}

std::vector<uint8_t> frame_to_rgb8(const ImageFrame& frame) {
  const auto h = frame.height(), w = frame.width();
  std::vector<uint8_t> rgb(static_cast<size_t>(h * w * 3));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) rgb[static_cast<size_t>((y * w + x) * 3 + c)] = quantize_signed(frame.at(c, y, x));
  return rgb;
}

SegMask downsample_mask(const SegMask& mask, int64_t height, int64_t width) {
  require(height > 0 && width > 0 && mask.height() % height == 0 && mask.width() % width == 0,
          "downsample_mask: " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
              " is not divisible into " + std::to_string(height) + "x" + std::to_string(width));
  const int64_t by = mask.height() / height, bx = mask.width() / width;
  SegMask out{Tensor<float>({height, width}, 1.0f)};
  for (int64_t y = 0; y < mask.height(); ++y)
    for (int64_t x = 0; x < mask.width(); ++x) {
      float& cell = out.mask[(y / by) * width + x / bx];
      cell = std::min(cell, mask.mask[y * mask.width() + x]);
    }
  return out;
}

ImageFrame unit_to_signed(const Tensor<float>& unit_chw) {
  Tensor<float> t = unit_chw;
  for (auto& v : t.storage()) v = 2.0f * v - 1.0f;
  return ImageFrame(std::move(t));
}

Tensor<float> signed_to_unit(const ImageFrame& frame) {
  Tensor<float> t = frame.pixels;
  for (auto& v : t.storage()) v = (v + 1.0f) * 0.5f;
  return t;
}

}  // namespace vtg::data
