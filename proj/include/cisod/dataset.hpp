#ifndef CISOD_DATASET_HPP_
#define CISOD_DATASET_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cisod/codec.hpp"
#include "cisod/image.hpp"
#include "cisod/tensor.hpp"

namespace cisod::dataset {

// Paired clean/compressed image with its ground-truth mask. Images are CHW
// doubles in [0, 255]; the mask is 1xHxW in [0, 1] (soft values allowed).
struct CompressedSample {
  std::string id;
  codec::QPLevel qp;
  Tensor clean;
  Tensor compressed;
  Tensor gt;
};

struct ManifestEntry {
  std::string id;
  std::string clean_path;
  std::string compressed_path;
  std::string gt_path;
  codec::QPLevel qp;
  bool operator==(const ManifestEntry&) const = default;
};

struct BenchmarkManifest {
  std::string name;
  std::string split;  // "train" or "test"
  std::vector<ManifestEntry> entries;
  codec::CodecConfig codec_record;
  std::uint64_t seed = 0;

  bool operator==(const BenchmarkManifest& o) const;
  // split-specific structural invariants; throws with a list of offenders
  void validate() const;
};

void write_manifest(const std::string& path, const BenchmarkManifest& m);
BenchmarkManifest read_manifest(const std::string& path);

// Every clean image compressed at every configured level:
// |clean| * |level_set| entries, written to <out_root>/<name>/<qp>/<id>.png.
BenchmarkManifest build_test_benchmark(const std::string& clean_dir, const std::string& gt_dir,
                                       const std::string& out_root, const std::string& name,
                                       const codec::CodecConfig& cfg);

// One entry per clean image with a uniformly drawn level (seeded).
BenchmarkManifest build_train_benchmark(const std::string& clean_dir, const std::string& gt_dir,
                                        const std::string& out_root, const std::string& name,
                                        const codec::CodecConfig& cfg, std::uint64_t seed);

// the seeded per-image level draw used by build_train_benchmark
std::vector<codec::QPLevel> assign_levels(std::size_t count, const codec::CodecConfig& cfg,
                                          std::uint64_t seed);

struct SynthDirs {
  std::string clean_dir;
  std::string gt_dir;
};

// Deterministic desk-scale corpus: textured backgrounds with 1-3
// high-contrast shapes; the mask is the union of the shapes.
SynthDirs make_synthetic_corpus(const std::string& out_dir, int n, int size, std::uint64_t seed);

// rasterizers shared by the corpus generator (pixel-center coverage)
void rasterize_disk(Tensor& mask01, double cx, double cy, double r);
void rasterize_rect(Tensor& mask01, double x0, double y0, double x1, double y1);
void rasterize_triangle(Tensor& mask01, const std::array<double, 6>& xy);

struct NormalizeConfig {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

// (v/255 - mean) / std per channel
Tensor normalize_chw(const Tensor& chw255, const NormalizeConfig& n);
// stack CHW tensors into NCHW
Tensor stack_batch(const std::vector<Tensor>& chw);

CompressedSample load_entry(const ManifestEntry& e, std::int64_t target_size);
// ids must resolve uniquely (train manifests); throws listing unknown ids
std::vector<CompressedSample> load_batch(const BenchmarkManifest& m,
                                         const std::vector<std::string>& ids,
                                         std::int64_t target_size = 256);

std::vector<std::string> list_png_stems(const std::string& dir);

}  // namespace cisod::dataset

#endif  // CISOD_DATASET_HPP_
