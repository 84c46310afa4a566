#ifndef CISOD_METRICS_HPP_
#define CISOD_METRICS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "cisod/tensor.hpp"

namespace cisod::metrics {

// Saliency evaluation on 1xHxW (or HxW-shaped) maps. pred in [0,1];
// gt in [0,1] and is binarized at 0.5 where a metric requires it.

double mae(const Tensor& pred, const Tensor& gt);

inline constexpr double kFBetaSquared = 0.3;
inline constexpr int kThresholdCount = 255;  // uniform over [0,1)

// per-threshold F-beta values; undefined when gt has no foreground
struct ThresholdSweep {
  bool defined = false;
  std::vector<double> fbeta;  // size kThresholdCount
};
ThresholdSweep f_measure_sweep(const Tensor& pred, const Tensor& gt);

// max over thresholds; nullopt when gt is empty (excluded from averages)
std::optional<double> f_measure_max(const Tensor& pred, const Tensor& gt);

// structure measure: 0.5 * object term + 0.5 * region term, with the usual
// all-background / all-foreground special cases
double s_measure(const Tensor& pred, const Tensor& gt);

struct EvalRecord {
  std::string dataset;
  std::string id;
  int qp = 0;
  double s_m = 0.0;
  double f_beta_max = 0.0;  // valid only when f_defined
  bool f_defined = true;
  double mae = 0.0;
};

struct AggregateRow {
  std::string dataset;
  int qp = -1;  // -1 means mean across levels
  double s_m = 0.0;
  double f_beta = 0.0;
  double mae = 0.0;
  int count = 0;
  int f_excluded = 0;
};

// per-(dataset, qp) means plus an across-level mean per dataset; rows are
// ordered by dataset then qp with the across-level row last.
// dataset_level_f switches the F aggregation to max-over-thresholds of the
// per-threshold dataset mean instead of the mean of per-image maxima.
std::vector<AggregateRow> aggregate(const std::vector<EvalRecord>& records,
                                    const std::vector<ThresholdSweep>* sweeps = nullptr,
                                    bool dataset_level_f = false);

void write_records_csv(const std::string& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records_csv(const std::string& path);
void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows);
std::string aggregate_text(const std::vector<AggregateRow>& rows);

}  // namespace cisod::metrics

#endif  // CISOD_METRICS_HPP_
