#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medvsr/tensor.hpp"

namespace medvsr {

// 8-bit interleaved RGB, row-major.
struct ImageU8 {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> rgb;  // h * w * 3
};

// Decodes any PNG color type to 8-bit RGB (alpha dropped against black,
// 16-bit narrowed, palette/gray expanded).
ImageU8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

// [3,H,W] float in [0,1] <-> interleaved bytes. Writing clamps, then rounds.
template <class T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  require(img.h > 0 && img.w > 0 &&
              img.rgb.size() == size_t(img.h * img.w * 3),
          "image_to_tensor: malformed image");
  Tensor<T> t({3, img.h, img.w});
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t[(c * img.h + y) * img.w + x] =
            T(img.rgb[size_t((y * img.w + x) * 3 + c)]) / T(255);
  return t;
}

template <class T>
ImageU8 tensor_to_image(const Tensor<T>& t) {
  require(t.rank() == 3 && t.dim(0) == 3, "tensor_to_image: want [3,H,W]");
  ImageU8 img;
  img.h = t.dim(1);
  img.w = t.dim(2);
  img.rgb.resize(size_t(img.h * img.w * 3));
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        double v = double(t[(c * img.h + y) * img.w + x]);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        img.rgb[size_t((y * img.w + x) * 3 + c)] =
            uint8_t(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace medvsr
