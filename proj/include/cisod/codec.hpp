#ifndef CISOD_CODEC_HPP_
#define CISOD_CODEC_HPP_

#include <stdexcept>
#include <string>
#include <vector>

#include "cisod/image.hpp"

namespace cisod::codec {

// Integer quantization parameter; higher value means a coarser quantization
// step and stronger degradation.
struct QPLevel {
  int value = 0;
  bool operator==(const QPLevel&) const = default;
  auto operator<=>(const QPLevel&) const = default;
};

inline const std::vector<QPLevel> kDefaultLevels = {{22}, {27}, {32}, {37}, {42}};

enum class Backend { kInternal, kExternal };

struct CodecConfig {
  Backend backend = Backend::kInternal;
  int block_size = 8;
  std::vector<QPLevel> level_set = kDefaultLevels;
  std::uint64_t rng_seed = 0;
  // command template for the external backend; placeholders {input} {output} {qp}
  std::string external_cmd;

  void validate() const;
  bool supports(QPLevel qp) const;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BackendMissingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// step = 2^((qp - 4) / 6); a step <= 1 disables quantization entirely
double quant_step(QPLevel qp);

// Block-DCT emulation of codec degradation: replicate-pad to a block
// multiple, per-block orthonormal 2-D DCT per channel, uniform quantization
// of the AC coefficients (DC is kept exact so flat regions survive any qp),
// inverse transform, crop, clamp. Deterministic.
ImageU8 compress(const ImageU8& image, QPLevel qp, const CodecConfig& cfg);

// File-level entry used by the CLI and dataset builders; dispatches to the
// internal codec or the configured external command.
void compress_file(const std::string& in_path, const std::string& out_path, QPLevel qp,
                   const CodecConfig& cfg);

// Peak signal-to-noise ratio in dB against a 255 peak; +infinity when the
// images are identical. Symmetric; throws on shape mismatch.
double psnr(const ImageU8& a, const ImageU8& b);

}  // namespace cisod::codec

#endif  // CISOD_CODEC_HPP_
