#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vtg/data/image.hpp"

namespace vtg::data {

struct PairItem {
  std::string id;
  VisualClip visual;
  TactileClip tactile;
  std::optional<SegMask> mask;
  std::optional<ReflectanceMap> reflectance;
  std::optional<ImageFrame> reference;
  std::optional<Tensor<float>> shading;  // [H, W] in [0, 1]
  int label = 0;
};

struct ManifestEntry {
  std::string id;
  std::vector<std::string> visual;
  std::vector<std::string> tactile;
  int contact = -1;  // centre frame index; -1 means the middle frame
  std::optional<std::string> mask, reflectance, reference, shading;
  int label = 0;
};

// Reads `manifest.json` (or the given file) and yields clips of 2C+1 frames
// centred on each entry's contact frame, in manifest order.
class ManifestStream {
 public:
  ManifestStream(const std::filesystem::path& path, int context);

  size_t size() const { return entries_.size(); }
  const ManifestEntry& entry(size_t i) const { return entries_.at(i); }
  PairItem load(size_t i) const;
  std::optional<PairItem> next();
  std::vector<PairItem> load_all() const;

 private:
  std::filesystem::path root_;
  int context_;
  std::vector<ManifestEntry> entries_;
  size_t cursor_ = 0;
};

inline ManifestStream load_manifest(const std::filesystem::path& path, int context) {
  return ManifestStream(path, context);
}

// Writes frames as 8-bit PNG plus `manifest.json` under root. Clip centres
// become the contact frames.
void write_dataset(const std::filesystem::path& root, const std::vector<PairItem>& items);

// Single-image helpers.
ImageFrame read_frame(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const ImageFrame& frame);
SegMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const SegMask& mask);
ReflectanceMap read_reflectance(const std::filesystem::path& path);
void write_reflectance(const std::filesystem::path& path, const ReflectanceMap& map);
Tensor<float> read_gray_unit(const std::filesystem::path& path);
void write_gray_unit(const std::filesystem::path& path, const Tensor<float>& gray);

}  // namespace vtg::data
