#include "cisod/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <vector>

namespace cisod::codec {

void CodecConfig::validate() const {
  if (block_size < 4) throw ConfigError("codec: block_size must be >= 4");
  if (level_set.empty()) throw ConfigError("codec: level_set is empty");
  for (std::size_t i = 1; i < level_set.size(); ++i)
    if (!(level_set[i - 1] < level_set[i]))
      throw ConfigError("codec: level_set must be strictly increasing");
  if (backend == Backend::kExternal && external_cmd.empty())
    throw BackendMissingError("codec: external backend selected but no command configured");
}

bool CodecConfig::supports(QPLevel qp) const {
  return std::find(level_set.begin(), level_set.end(), qp) != level_set.end();
}

double quant_step(QPLevel qp) { return std::exp2((qp.value - 4.0) / 6.0); }

namespace {

// orthonormal DCT-II basis, D[k][n]
std::vector<double> dct_basis(int n) {
  std::vector<double> d(static_cast<std::size_t>(n) * n);
  const double norm0 = std::sqrt(1.0 / n);
  const double norm = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      d[static_cast<std::size_t>(k) * n + i] =
          (k == 0 ? norm0 : norm) * std::cos((2 * i + 1) * k * M_PI / (2.0 * n));
  return d;
}

// B = D * A * D^T for bs x bs blocks
void transform(const std::vector<double>& d, const double* a, double* b, int bs, bool inverse) {
  std::vector<double> tmp(static_cast<std::size_t>(bs) * bs, 0.0);
  // tmp = D * A (or D^T * A)
  for (int i = 0; i < bs; ++i)
    for (int k = 0; k < bs; ++k) {
      const double v = inverse ? d[static_cast<std::size_t>(k) * bs + i]
                               : d[static_cast<std::size_t>(i) * bs + k];
      if (v == 0.0) continue;
      for (int j = 0; j < bs; ++j)
        tmp[static_cast<std::size_t>(i) * bs + j] += v * a[static_cast<std::size_t>(k) * bs + j];
    }
  // b = tmp * D^T (or tmp * D)
  for (int i = 0; i < bs; ++i)
    for (int j = 0; j < bs; ++j) {
      double s = 0.0;
      for (int k = 0; k < bs; ++k) {
        const double v = inverse ? d[static_cast<std::size_t>(k) * bs + j]
                                 : d[static_cast<std::size_t>(j) * bs + k];
        s += tmp[static_cast<std::size_t>(i) * bs + k] * v;
      }
      b[static_cast<std::size_t>(i) * bs + j] = s;
    }
}

}  // namespace

ImageU8 compress(const ImageU8& image, QPLevel qp, const CodecConfig& cfg) {
  cfg.validate();
  if (!cfg.supports(qp))
    throw ConfigError("codec: qp " + std::to_string(qp.value) + " not in configured level set");
  check(image.w >= cfg.block_size && image.h >= cfg.block_size,
        "codec: image smaller than block size");

  const double step = quant_step(qp);
  if (step <= 1.0) return image;  // lossless

  const int bs = cfg.block_size;
  const int ph = (image.h + bs - 1) / bs * bs;
  const int pw = (image.w + bs - 1) / bs * bs;
  const std::vector<double> basis = dct_basis(bs);

  ImageU8 out = ImageU8::make(image.w, image.h, image.c);
  std::vector<double> block(static_cast<std::size_t>(bs) * bs);
  std::vector<double> coef(static_cast<std::size_t>(bs) * bs);

  for (int ch = 0; ch < image.c; ++ch) {
    for (int by = 0; by < ph; by += bs) {
      for (int bx = 0; bx < pw; bx += bs) {
        // gather with replicate padding
        for (int y = 0; y < bs; ++y) {
          const int sy = std::min(by + y, image.h - 1);
          for (int x = 0; x < bs; ++x) {
            const int sx = std::min(bx + x, image.w - 1);
            block[static_cast<std::size_t>(y) * bs + x] = image.at(sy, sx, ch);
          }
        }
        transform(basis, block.data(), coef.data(), bs, false);
        // uniform quantization of AC coefficients; DC stays exact
        for (int i = 0; i < bs * bs; ++i) {
          if (i == 0) continue;
          coef[static_cast<std::size_t>(i)] =
              std::round(coef[static_cast<std::size_t>(i)] / step) * step;
        }
        transform(basis, coef.data(), block.data(), bs, true);
        for (int y = 0; y < bs && by + y < image.h; ++y)
          for (int x = 0; x < bs && bx + x < image.w; ++x) {
            const double v = std::clamp(block[static_cast<std::size_t>(y) * bs + x], 0.0, 255.0);
            out.at(by + y, bx + x, ch) = static_cast<std::uint8_t>(std::lround(v));
          }
      }
    }
  }
  return out;
}

void compress_file(const std::string& in_path, const std::string& out_path, QPLevel qp,
                   const CodecConfig& cfg) {
  cfg.validate();
  if (cfg.backend == Backend::kInternal) {
    ImageU8 img = read_png(in_path);
    write_png(out_path, compress(img, qp, cfg));
    return;
  }
  // external adapter: substitute, run, verify
  std::string cmd = cfg.external_cmd;
  auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
    std::size_t p = 0;
    while ((p = s.find(from, p)) != std::string::npos) {
      s.replace(p, from.size(), to);
      p += to.size();
    }
  };
  replace_all(cmd, "{input}", in_path);
  replace_all(cmd, "{output}", out_path);
  replace_all(cmd, "{qp}", std::to_string(qp.value));
  const int rc = std::system(cmd.c_str());
  if (rc != 0)
    throw BackendMissingError("codec: external command failed (rc=" + std::to_string(rc) +
                              "): " + cmd);
  int ow = 0, oh = 0;
  if (!std::filesystem::exists(out_path) || !png_dims(out_path, ow, oh))
    throw BackendMissingError("codec: external command produced no readable output: " + out_path);
  int iw = 0, ih = 0;
  png_dims(in_path, iw, ih);
  if (ow != iw || oh != ih)
    throw BackendMissingError("codec: external output dimensions " + std::to_string(ow) + "x" +
                              std::to_string(oh) + " do not match input");
}

double psnr(const ImageU8& a, const ImageU8& b) {
  check(a.same_dims(b), "psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) {
    const double d = static_cast<double>(a.pix[i]) - static_cast<double>(b.pix[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.pix.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace cisod::codec
