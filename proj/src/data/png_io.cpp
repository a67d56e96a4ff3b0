#include "vtg/data/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "vtg/core/error.hpp"

namespace vtg::data {
namespace {

struct FileCloser {
  void operator()(FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Raster8 read_png(const std::filesystem::path& path, int channels) {
  require(channels == 1 || channels == 3, "read_png: channels must be 1 or 3");
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorCode::load, "cannot open image " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::load, "libpng initialisation failed");
  }
  Raster8 out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::load, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  const bool gray_in = !(color & PNG_COLOR_MASK_COLOR) && color != PNG_COLOR_TYPE_PALETTE;
  if (channels == 3 && gray_in) png_set_gray_to_rgb(png);
  if (channels == 1 && !gray_in) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = channels;
  out.data.resize(static_cast<size_t>(out.width * out.height * channels));
  rows.resize(static_cast<size_t>(out.height));
  for (int64_t y = 0; y < out.height; ++y) rows[static_cast<size_t>(y)] = out.data.data() + y * out.width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster8& raster) {
  require(raster.channels == 1 || raster.channels == 3, "write_png: channels must be 1 or 3");
  require(static_cast<int64_t>(raster.data.size()) == raster.width * raster.height * raster.channels,
          "write_png: buffer size mismatch");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorCode::io, "cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::io, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
               raster.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < raster.height; ++y)
    png_write_row(png, const_cast<png_bytep>(raster.data.data() + y * raster.width * raster.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace vtg::data
