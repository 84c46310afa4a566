#ifndef CISOD_IMAGE_HPP_
#define CISOD_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cisod/tensor.hpp"

namespace cisod {

// Interleaved 8-bit image, row-major, c in {1, 3}.
struct ImageU8 {
  int w = 0;
  int h = 0;
  int c = 0;
  std::vector<std::uint8_t> pix;

  static ImageU8 make(int w, int h, int c, std::uint8_t fill = 0) {
    ImageU8 im;
    im.w = w;
    im.h = h;
    im.c = c;
    im.pix.assign(static_cast<std::size_t>(w) * h * c, fill);
    return im;
  }
  std::uint8_t& at(int y, int x, int ch) {
    return pix[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::uint8_t at(int y, int x, int ch) const {
    return pix[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  bool same_dims(const ImageU8& o) const { return w == o.w && h == o.h && c == o.c; }
};

// PNG, 8-bit grayscale / RGB / RGBA, non-interlaced. The writer emits stored
// deflate blocks so files are byte-stable across platforms.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);
// parses only the header; cheap existence/dimension probe
bool png_dims(const std::string& path, int& w, int& h);

// CHW double tensor with values in [0, 255]
Tensor chw_from_u8(const ImageU8& img);
ImageU8 u8_from_chw(const Tensor& chw);  // clamps and rounds

// single-channel [0,1] mask
Tensor mask_from_u8(const ImageU8& img);     // 1xHxW
ImageU8 u8_from_mask(const Tensor& mask01);  // grayscale

// resampling on CHW double tensors
Tensor resize_chw_bilinear(const Tensor& chw, std::int64_t out_h, std::int64_t out_w);
Tensor resize_chw_area(const Tensor& chw, std::int64_t out_h, std::int64_t out_w);

}  // namespace cisod

#endif  // CISOD_IMAGE_HPP_
