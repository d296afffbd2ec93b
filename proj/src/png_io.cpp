#include "medvsr/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "medvsr/errors.hpp"

namespace medvsr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the message is parked here first.
void on_png_error(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct ReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadGuard() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct WriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteGuard() { png_destroy_write_struct(&png, &info); }
};

}  // namespace

ImageU8 read_png(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  require(bool(f), "png: cannot open: " + path);

  std::string errmsg;
  ReadGuard pg;
  pg.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg,
                                  on_png_error, on_png_warning);
  require(pg.png != nullptr, "png: reader allocation failed");
  pg.info = png_create_info_struct(pg.png);
  require(pg.info != nullptr, "png: info allocation failed");

  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(pg.png)))
    throw contract_error("png: " + errmsg + ": " + path);

  png_init_io(pg.png, f.get());
  png_read_info(pg.png, pg.info);

  png_uint_32 w = png_get_image_width(pg.png, pg.info);
  png_uint_32 h = png_get_image_height(pg.png, pg.info);
  int depth = png_get_bit_depth(pg.png, pg.info);
  int color = png_get_color_type(pg.png, pg.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(pg.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(pg.png);
  if (png_get_valid(pg.png, pg.info, PNG_INFO_tRNS))
    png_set_tRNS_to_alpha(pg.png);
  if (depth == 16) png_set_strip_16(pg.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(pg.png);
  png_set_strip_alpha(pg.png);
  png_read_update_info(pg.png, pg.info);

  require(png_get_channels(pg.png, pg.info) == 3 &&
              png_get_bit_depth(pg.png, pg.info) == 8,
          "png: could not normalize to 8-bit RGB: " + path);

  img.h = int64_t(h);
  img.w = int64_t(w);
  img.rgb.resize(size_t(img.h * img.w * 3));
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.rgb.data() + size_t(y) * size_t(w) * 3;
  png_read_image(pg.png, rows.data());
  png_read_end(pg.png, nullptr);
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  require(img.h > 0 && img.w > 0 &&
              img.rgb.size() == size_t(img.h * img.w * 3),
          "png: malformed image for: " + path);
  File f(std::fopen(path.c_str(), "wb"));
  require(bool(f), "png: cannot open for writing: " + path);

  std::string errmsg;
  WriteGuard pg;
  pg.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg,
                                   on_png_error, on_png_warning);
  require(pg.png != nullptr, "png: writer allocation failed");
  pg.info = png_create_info_struct(pg.png);
  require(pg.info != nullptr, "png: info allocation failed");

  if (setjmp(png_jmpbuf(pg.png)))
    throw contract_error("png: " + errmsg + ": " + path);

  png_init_io(pg.png, f.get());
  png_set_IHDR(pg.png, pg.info, png_uint_32(img.w), png_uint_32(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(pg.png, pg.info);
  for (int64_t y = 0; y < img.h; ++y)
    png_write_row(pg.png, const_cast<png_bytep>(img.rgb.data() +
                                                size_t(y * img.w * 3)));
  png_write_end(pg.png, pg.info);
}

}  // namespace medvsr
