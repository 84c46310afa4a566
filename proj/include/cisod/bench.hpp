#ifndef CISOD_BENCH_HPP_
#define CISOD_BENCH_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "cisod/dataset.hpp"
#include "cisod/metrics.hpp"
#include "cisod/net.hpp"

namespace cisod::bench {

inline constexpr int kReportVersion = 1;

// Reference results of the full-scale pipeline (ImageNet-pretrained 50-layer
// backbone, full training corpora), kept for context in reports. They are
// documentation constants, not desk-scale test targets; see README.
struct ReferenceRow {
  double s_m, f_beta, mae;
};
inline constexpr ReferenceRow kFullScaleSetting2CompressedDutsTe{0.861, 0.841, 0.044};

struct BenchmarkReport {
  int version = kReportVersion;
  std::vector<metrics::EvalRecord> records;
  std::vector<metrics::ThresholdSweep> sweeps;
  std::vector<metrics::AggregateRow> rows;
  nlohmann::json metadata;
  bool incomplete = false;
};

struct EvalOptions {
  int image_size = 256;
  dataset::NormalizeConfig normalize;
  bool dataset_level_f = false;  // alternative F aggregation
};

// Deterministic eval-mode inference over every manifest entry; failures are
// enumerated in the metadata and mark the report incomplete.
BenchmarkReport evaluate(const net::SaliencyNet& model,
                         const std::vector<dataset::BenchmarkManifest>& manifests,
                         const EvalOptions& opts);

// records.csv + aggregate.csv + aggregate.txt + report.json under out_dir
void write_report(const std::string& out_dir, const BenchmarkReport& report);
BenchmarkReport read_report(const std::string& out_dir);

// per-dataset line plots of each metric against the ascending level set
void emit_robustness_plot(const BenchmarkReport& report, const std::string& png_path);

struct CompareCell {
  std::string dataset;
  int qp = 0;
  std::string metric;
  double a = 0.0, b = 0.0, delta = 0.0;
  bool flagged = false;
};

struct CompareResult {
  std::vector<CompareCell> cells;
  int flagged_count = 0;
  std::string text;
};

// refuses mismatched report versions; flags |delta| > tolerance
CompareResult compare(const BenchmarkReport& a, const BenchmarkReport& b, double tolerance);

std::uint64_t file_hash(const std::string& path);

// writes each graph node's assignment map as a grayscale PNG
void dump_graph_assignments(const net::SaliencyNet& model, const std::string& image_path,
                            const EvalOptions& opts, const std::string& out_dir);

}  // namespace cisod::bench

#endif  // CISOD_BENCH_HPP_
