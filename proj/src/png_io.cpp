#include "dcpt/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace dcpt {

void write_png(const std::string& path, const Image& image) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw ValidationError("cannot open for writing: " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw ValidationError("libpng write failure: " + path);
  }
  png_init_io(png, fp);
  const int H = image.height(), W = image.width();
  png_set_IHDR(png, info, static_cast<png_uint_32>(W),
               static_cast<png_uint_32>(H), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(W) * 3);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c) {
        const float v =
            std::clamp(image.ch[static_cast<size_t>(c)](i, j), 0.0f, 1.0f);
        row[static_cast<size_t>(j) * 3 + static_cast<size_t>(c)] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw ValidationError("cannot open: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw ValidationError("libpng read failure: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // normalize everything to 8-bit RGB
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int H = static_cast<int>(png_get_image_height(png, info));
  const int W = static_cast<int>(png_get_image_width(png, info));
  Image image(H, W);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int i = 0; i < H; ++i) {
    png_read_row(png, row.data(), nullptr);
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c)
        image.ch[static_cast<size_t>(c)](i, j) =
            float(row[static_cast<size_t>(j) * 3 + static_cast<size_t>(c)]) /
            255.0f;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image;
}

}  // namespace dcpt
