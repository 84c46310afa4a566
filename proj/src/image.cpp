#include "cisod/image.hpp"

#include <algorithm>
#include <cmath>

namespace cisod {

Tensor chw_from_u8(const ImageU8& img) {
  Tensor t(Shape{img.c, img.h, img.w});
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t[(static_cast<std::int64_t>(ch) * img.h + y) * img.w + x] =
            static_cast<double>(img.at(y, x, ch));
  return t;
}

ImageU8 u8_from_chw(const Tensor& chw) {
  check(chw.rank() == 3, "u8_from_chw: CHW expected");
  const int c = static_cast<int>(chw.dim(0));
  const int h = static_cast<int>(chw.dim(1));
  const int w = static_cast<int>(chw.dim(2));
  ImageU8 img = ImageU8::make(w, h, c);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = chw[(static_cast<std::int64_t>(ch) * h + y) * w + x];
        v = std::clamp(v, 0.0, 255.0);
        img.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(v));
      }
  return img;
}

Tensor mask_from_u8(const ImageU8& img) {
  Tensor t(Shape{1, img.h, img.w});
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      // average channels if a color mask sneaks in
      double s = 0.0;
      for (int ch = 0; ch < img.c; ++ch) s += img.at(y, x, ch);
      t[static_cast<std::int64_t>(y) * img.w + x] = s / (255.0 * img.c);
    }
  return t;
}

ImageU8 u8_from_mask(const Tensor& mask01) {
  check(mask01.rank() == 3 && mask01.dim(0) == 1, "u8_from_mask: 1xHxW expected");
  const int h = static_cast<int>(mask01.dim(1));
  const int w = static_cast<int>(mask01.dim(2));
  ImageU8 img = ImageU8::make(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = std::clamp(mask01[static_cast<std::int64_t>(y) * w + x], 0.0, 1.0);
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

namespace {

struct LinW {
  std::int64_t i0, i1;
  double w0, w1;
};

LinW lin_w(std::int64_t oi, std::int64_t in_n, std::int64_t out_n) {
  const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
  double src = (static_cast<double>(oi) + 0.5) * scale - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
  LinW s;
  s.i0 = static_cast<std::int64_t>(src);
  s.i1 = std::min(s.i0 + 1, in_n - 1);
  s.w1 = src - static_cast<double>(s.i0);
  s.w0 = 1.0 - s.w1;
  return s;
}

}  // namespace

Tensor resize_chw_bilinear(const Tensor& chw, std::int64_t out_h, std::int64_t out_w) {
  check(chw.rank() == 3, "resize: CHW expected");
  const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  if (out_h == H && out_w == W) return chw;
  Tensor out(Shape{C, out_h, out_w});
  std::vector<LinW> hs(static_cast<std::size_t>(out_h)), ws(static_cast<std::size_t>(out_w));
  for (std::int64_t i = 0; i < out_h; ++i) hs[static_cast<std::size_t>(i)] = lin_w(i, H, out_h);
  for (std::int64_t j = 0; j < out_w; ++j) ws[static_cast<std::size_t>(j)] = lin_w(j, W, out_w);
  for (std::int64_t c = 0; c < C; ++c) {
    const double* p = chw.data() + c * H * W;
    double* o = out.data() + c * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const LinW& a = hs[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < out_w; ++j) {
        const LinW& b = ws[static_cast<std::size_t>(j)];
        o[i * out_w + j] =
            a.w0 * (b.w0 * p[a.i0 * W + b.i0] + b.w1 * p[a.i0 * W + b.i1]) +
            a.w1 * (b.w0 * p[a.i1 * W + b.i0] + b.w1 * p[a.i1 * W + b.i1]);
      }
    }
  }
  return out;
}

// Box integration over the exact source footprint of each output pixel.
Tensor resize_chw_area(const Tensor& chw, std::int64_t out_h, std::int64_t out_w) {
  check(chw.rank() == 3, "resize: CHW expected");
  const std::int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  if (out_h == H && out_w == W) return chw;
  Tensor out(Shape{C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::int64_t c = 0; c < C; ++c) {
    const double* p = chw.data() + c * H * W;
    double* o = out.data() + c * out_h * out_w;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const double y0 = i * sy, y1 = (i + 1) * sy;
      const std::int64_t iy0 = static_cast<std::int64_t>(std::floor(y0));
      const std::int64_t iy1 = std::min(static_cast<std::int64_t>(std::ceil(y1)), H);
      for (std::int64_t j = 0; j < out_w; ++j) {
        const double x0 = j * sx, x1 = (j + 1) * sx;
        const std::int64_t ix0 = static_cast<std::int64_t>(std::floor(x0));
        const std::int64_t ix1 = std::min(static_cast<std::int64_t>(std::ceil(x1)), W);
        double acc = 0.0, area = 0.0;
        for (std::int64_t y = iy0; y < iy1; ++y) {
          const double wy = std::min(y1, static_cast<double>(y + 1)) -
                            std::max(y0, static_cast<double>(y));
          if (wy <= 0.0) continue;
          for (std::int64_t x = ix0; x < ix1; ++x) {
            const double wx = std::min(x1, static_cast<double>(x + 1)) -
                              std::max(x0, static_cast<double>(x));
            if (wx <= 0.0) continue;
            acc += wy * wx * p[y * W + x];
            area += wy * wx;
          }
        }
        o[i * out_w + j] = acc / area;
      }
    }
  }
  return out;
}

}  // namespace cisod
