#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vtg::data {

struct Raster8 {
  int64_t height = 0;
  int64_t width = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<uint8_t> data;  // interleaved, row-major
};

// Reads any 8/16-bit PNG and converts it to `channels` (1 or 3) 8-bit planes.
Raster8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Raster8& raster);

}  // namespace vtg::data
