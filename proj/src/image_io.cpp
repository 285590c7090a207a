#include "killchain/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace killchain {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

int read_pnm_token(std::FILE* f) {
  // Skips whitespace and '#' comments, then parses one unsigned integer.
  int ch = std::fgetc(f);
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = std::fgetc(f);
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = std::fgetc(f);
  }
  if (ch == EOF || !std::isdigit(ch)) return -1;
  int value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    ch = std::fgetc(f);
  }
  return value;
}

}  // namespace

RawImage read_ppm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IngestError("cannot open PPM file: " + path);
  char magic[3] = {0, 0, 0};
  if (std::fread(magic, 1, 2, f.get()) != 2 || magic[0] != 'P' ||
      (magic[1] != '6' && magic[1] != '5')) {
    throw IngestError("not a binary PPM/PGM file: " + path);
  }
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = read_pnm_token(f.get());
  const int h = read_pnm_token(f.get());
  const int maxval = read_pnm_token(f.get());
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw IngestError("unsupported PPM header in " + path);
  }
  RawImage img;
  img.h = h;
  img.w = w;
  img.c = channels;
  img.pixels.resize(static_cast<std::size_t>(h) * w * channels);
  if (std::fread(img.pixels.data(), 1, img.pixels.size(), f.get()) != img.pixels.size()) {
    throw IngestError("truncated PPM payload in " + path);
  }
  return img;
}

void write_ppm(const std::string& path, const RawImage& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("cannot write PPM file: " + path);
  std::fprintf(f.get(), "%s\n%d %d\n255\n", img.c == 3 ? "P6" : "P5", img.w, img.h);
  if (std::fwrite(img.pixels.data(), 1, img.pixels.size(), f.get()) != img.pixels.size()) {
    throw Error("short write to " + path);
  }
}

RawImage read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IngestError("cannot open PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng init failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError("corrupt PNG file: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.w = static_cast<int>(png_get_image_width(png, info));
  img.h = static_cast<int>(png_get_image_height(png, info));
  img.c = static_cast<int>(png_get_channels(png, info));
  if (img.c != 1 && img.c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestError("PNG must be gray or RGB: " + path);
  }
  img.pixels.resize(static_cast<std::size_t>(img.h) * img.w * img.c);
  rows.resize(img.h);
  for (int y = 0; y < img.h; ++y) {
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * img.w * img.c;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const RawImage& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("cannot write PNG file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng init failed");
  }
  std::vector<png_bytep> rows(img.h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.w, img.h, 8,
               img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.h; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.w * img.c);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image to_float(const RawImage& raw) {
  Image img(raw.h, raw.w, raw.c);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
  }
  return img;
}

RawImage to_u8(const Image& img) {
  RawImage raw;
  raw.h = img.h;
  raw.w = img.w;
  raw.c = img.c;
  raw.pixels.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    raw.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return raw;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  Image dst(out_h, out_w, src.c);
  const float sy = static_cast<float>(src.h) / out_h;
  const float sx = static_cast<float>(src.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
    const int y0 = std::min(static_cast<int>(fy), src.h - 1);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const float wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
      const int x0 = std::min(static_cast<int>(fx), src.w - 1);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const float wx = fx - x0;
      for (int ch = 0; ch < src.c; ++ch) {
        const float top = src.at(y0, x0, ch) * (1.0f - wx) + src.at(y0, x1, ch) * wx;
        const float bot = src.at(y1, x0, ch) * (1.0f - wx) + src.at(y1, x1, ch) * wx;
        dst.at(y, x, ch) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return dst;
}

RawImage crop(const RawImage& src, int x0, int y0, int x1, int y1) {
  x0 = std::clamp(x0, 0, src.w - 1);
  y0 = std::clamp(y0, 0, src.h - 1);
  x1 = std::clamp(x1, x0, src.w - 1);
  y1 = std::clamp(y1, y0, src.h - 1);
  RawImage dst;
  dst.h = y1 - y0 + 1;
  dst.w = x1 - x0 + 1;
  dst.c = src.c;
  dst.pixels.resize(static_cast<std::size_t>(dst.h) * dst.w * dst.c);
  for (int y = 0; y < dst.h; ++y) {
    const std::uint8_t* in =
        src.pixels.data() + (static_cast<std::size_t>(y0 + y) * src.w + x0) * src.c;
    std::copy(in, in + static_cast<std::size_t>(dst.w) * dst.c,
              dst.pixels.data() + static_cast<std::size_t>(y) * dst.w * dst.c);
  }
  return dst;
}

}  // namespace killchain
