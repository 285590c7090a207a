#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "killchain/types.hpp"

namespace killchain {

// 8-bit interleaved pixel buffer as stored on disk.
struct RawImage {
  int h = 0;
  int w = 0;
  int c = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;
};

RawImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RawImage& img);

RawImage read_png(const std::string& path);
void write_png(const std::string& path, const RawImage& img);

// [0,255] -> [0,1] and back (round-to-nearest). Quantization is exact for
// values that came from 8-bit sources, so save/load round-trips bitwise.
Image to_float(const RawImage& raw);
RawImage to_u8(const Image& img);

// Bilinear resize on the float representation.
Image resize_bilinear(const Image& src, int out_h, int out_w);

// Crop [x0..x1] x [y0..y1] inclusive, clamped to the image bounds.
RawImage crop(const RawImage& src, int x0, int y0, int x1, int y1);

}  // namespace killchain
