#include "cisod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace cisod::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_pair(const Tensor& pred, const Tensor& gt) {
  check(pred.same_shape(gt), "metrics: pred/gt shape mismatch " + shape_str(pred.shape()) +
                                 " vs " + shape_str(gt.shape()));
  check(pred.numel() > 0, "metrics: empty input");
}

}  // namespace

double mae(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.numel());
}

ThresholdSweep f_measure_sweep(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  const std::int64_t n = pred.numel();
  std::int64_t fg = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (gt[i] > 0.5) ++fg;
  ThresholdSweep sweep;
  if (fg == 0) return sweep;  // undefined; caller excludes and logs
  sweep.defined = true;
  sweep.fbeta.assign(kThresholdCount, 0.0);
  for (int k = 0; k < kThresholdCount; ++k) {
    const double t = static_cast<double>(k) / kThresholdCount;
    std::int64_t tp = 0, pp = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (pred[i] > t) {
        ++pp;
        if (gt[i] > 0.5) ++tp;
      }
    }
    if (pp == 0) continue;  // empty prediction contributes F = 0
    const double precision = static_cast<double>(tp) / static_cast<double>(pp);
    const double recall = static_cast<double>(tp) / static_cast<double>(fg);
    const double denom = kFBetaSquared * precision + recall;
    sweep.fbeta[static_cast<std::size_t>(k)] =
        denom > 0.0 ? (1.0 + kFBetaSquared) * precision * recall / denom : 0.0;
  }
  return sweep;
}

std::optional<double> f_measure_max(const Tensor& pred, const Tensor& gt) {
  const ThresholdSweep sweep = f_measure_sweep(pred, gt);
  if (!sweep.defined) return std::nullopt;
  return *std::max_element(sweep.fbeta.begin(), sweep.fbeta.end());
}

// ------------------------------------------------------------------
// structure measure

namespace {

double object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  double x = 0.0;
  for (double v : vals) x += v;
  x /= static_cast<double>(vals.size());
  double sigma = 0.0;
  if (vals.size() > 1) {
    double ss = 0.0;
    for (double v : vals) ss += (v - x) * (v - x);
    sigma = std::sqrt(ss / static_cast<double>(vals.size() - 1));
  }
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const Tensor& pred, const std::vector<bool>& gt_bin, double u) {
  std::vector<double> fg_vals, bg_vals;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    if (gt_bin[static_cast<std::size_t>(i)])
      fg_vals.push_back(pred[i]);
    else
      bg_vals.push_back(1.0 - pred[i]);
  }
  return u * object_score(fg_vals) + (1.0 - u) * object_score(bg_vals);
}

// region similarity on one block, sample statistics with N-1 normalization
double region_ssim(const std::vector<double>& p, const std::vector<double>& g) {
  const std::size_t n = p.size();
  if (n == 0) return 0.0;  // empty block has zero weight anyway
  double x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x += p[i];
    y += g[i];
  }
  x /= static_cast<double>(n);
  y /= static_cast<double>(n);
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += (p[i] - x) * (p[i] - x);
    sy += (g[i] - y) * (g[i] - y);
    sxy += (p[i] - x) * (g[i] - y);
  }
  const double norm = static_cast<double>(n) - 1.0 + kEps;
  sx /= norm;
  sy /= norm;
  sxy /= norm;
  const double alpha = 4.0 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx + sy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  if (beta == 0.0) return 1.0;
  return 0.0;
}

double s_region(const Tensor& pred, const std::vector<bool>& gt_bin, std::int64_t rows,
                std::int64_t cols) {
  // 1-based centroid with round-half-away, matching the published pseudocode
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      if (gt_bin[static_cast<std::size_t>(r * cols + c)]) {
        total += 1.0;
        sx += static_cast<double>(c + 1);
        sy += static_cast<double>(r + 1);
      }
  std::int64_t X, Y;
  if (total == 0.0) {
    X = std::llround(static_cast<double>(cols) / 2.0);
    Y = std::llround(static_cast<double>(rows) / 2.0);
  } else {
    X = std::llround(sx / total);
    Y = std::llround(sy / total);
  }
  const double area = static_cast<double>(rows * cols);
  const double w1 = static_cast<double>(X * Y) / area;
  const double w2 = static_cast<double>((cols - X) * Y) / area;
  const double w3 = static_cast<double>(X * (rows - Y)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;

  std::vector<double> p[4], g[4];
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) {
      const int block = (r < Y ? 0 : 2) + (c < X ? 0 : 1);
      p[block].push_back(pred[r * cols + c]);
      g[block].push_back(gt_bin[static_cast<std::size_t>(r * cols + c)] ? 1.0 : 0.0);
    }
  return w1 * region_ssim(p[0], g[0]) + w2 * region_ssim(p[1], g[1]) +
         w3 * region_ssim(p[2], g[2]) + w4 * region_ssim(p[3], g[3]);
}

}  // namespace

double s_measure(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt);
  const int r = pred.rank();
  const std::int64_t rows = pred.dim(r - 2), cols = pred.dim(r - 1);
  check(rows * cols == pred.numel(), "s_measure: expected a single-channel map");
  std::vector<bool> gt_bin(static_cast<std::size_t>(gt.numel()));
  std::int64_t fg = 0;
  for (std::int64_t i = 0; i < gt.numel(); ++i) {
    gt_bin[static_cast<std::size_t>(i)] = gt[i] > 0.5;
    if (gt_bin[static_cast<std::size_t>(i)]) ++fg;
  }
  const double y = static_cast<double>(fg) / static_cast<double>(gt.numel());
  if (fg == 0) return 1.0 - pred.mean();
  if (fg == gt.numel()) return pred.mean();
  const double q = 0.5 * s_object(pred, gt_bin, y) + 0.5 * s_region(pred, gt_bin, rows, cols);
  return std::max(q, 0.0);
}

// ------------------------------------------------------------------
// aggregation and persistence

std::vector<AggregateRow> aggregate(const std::vector<EvalRecord>& records,
                                    const std::vector<ThresholdSweep>* sweeps,
                                    bool dataset_level_f) {
  if (dataset_level_f)
    check(sweeps != nullptr && sweeps->size() == records.size(),
          "aggregate: dataset-level F needs one threshold sweep per record");

  std::set<std::string> datasets;
  std::set<int> qps;
  for (const auto& r : records) {
    datasets.insert(r.dataset);
    qps.insert(r.qp);
  }
  std::vector<AggregateRow> rows;
  for (const auto& ds : datasets) {
    std::vector<AggregateRow> level_rows;
    for (int qp : qps) {
      AggregateRow row;
      row.dataset = ds;
      row.qp = qp;
      std::vector<double> fsum(kThresholdCount, 0.0);
      int fcount = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.dataset != ds || r.qp != qp) continue;
        row.count++;
        row.s_m += r.s_m;
        row.mae += r.mae;
        if (r.f_defined) {
          ++fcount;
          if (dataset_level_f) {
            const auto& fb = (*sweeps)[i].fbeta;
            for (int k = 0; k < kThresholdCount; ++k)
              fsum[static_cast<std::size_t>(k)] += fb[static_cast<std::size_t>(k)];
          } else {
            row.f_beta += r.f_beta_max;
          }
        } else {
          row.f_excluded++;
        }
      }
      if (row.count == 0) continue;
      row.s_m /= row.count;
      row.mae /= row.count;
      if (fcount > 0) {
        if (dataset_level_f) {
          double best = 0.0;
          for (double s : fsum) best = std::max(best, s / fcount);
          row.f_beta = best;
        } else {
          row.f_beta /= fcount;
        }
      }
      level_rows.push_back(row);
    }
    if (level_rows.empty()) continue;
    AggregateRow mean_row;
    mean_row.dataset = ds;
    mean_row.qp = -1;
    for (const auto& r : level_rows) {
      mean_row.s_m += r.s_m;
      mean_row.f_beta += r.f_beta;
      mean_row.mae += r.mae;
      mean_row.count += r.count;
      mean_row.f_excluded += r.f_excluded;
    }
    const double k = static_cast<double>(level_rows.size());
    mean_row.s_m /= k;
    mean_row.f_beta /= k;
    mean_row.mae /= k;
    rows.insert(rows.end(), level_rows.begin(), level_rows.end());
    rows.push_back(mean_row);
  }
  return rows;
}

void write_records_csv(const std::string& path, const std::vector<EvalRecord>& records) {
  std::ofstream f(path);
  check(static_cast<bool>(f), "metrics: cannot open " + path);
  f << "dataset,id,qp,S_m,F_max,MAE\n";
  f << std::setprecision(17);
  for (const auto& r : records) {
    f << r.dataset << "," << r.id << "," << r.qp << "," << r.s_m << ",";
    if (r.f_defined)
      f << r.f_beta_max;
    else
      f << "excluded";
    f << "," << r.mae << "\n";
  }
  check(static_cast<bool>(f), "metrics: write failed " + path);
}

std::vector<EvalRecord> read_records_csv(const std::string& path) {
  std::ifstream f(path);
  check(static_cast<bool>(f), "metrics: cannot open " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<EvalRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    EvalRecord r;
    std::getline(ss, r.dataset, ',');
    std::getline(ss, r.id, ',');
    std::getline(ss, field, ',');
    r.qp = std::stoi(field);
    std::getline(ss, field, ',');
    r.s_m = std::stod(field);
    std::getline(ss, field, ',');
    if (field == "excluded") {
      r.f_defined = false;
    } else {
      r.f_beta_max = std::stod(field);
    }
    std::getline(ss, field, ',');
    r.mae = std::stod(field);
    out.push_back(std::move(r));
  }
  return out;
}

void write_aggregate_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ofstream f(path);
  check(static_cast<bool>(f), "metrics: cannot open " + path);
  f << "dataset,qp,S_m,F_beta,MAE,count,F_excluded\n";
  f << std::setprecision(17);
  for (const auto& r : rows) {
    f << r.dataset << ",";
    if (r.qp < 0)
      f << "mean";
    else
      f << r.qp;
    f << "," << r.s_m << "," << r.f_beta << "," << r.mae << "," << r.count << ","
      << r.f_excluded << "\n";
  }
}

std::string aggregate_text(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "dataset" << std::setw(8) << "qp" << std::right
     << std::setw(9) << "S_m" << std::setw(9) << "F_beta" << std::setw(9) << "MAE"
     << std::setw(8) << "n" << std::setw(6) << "excl" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(20) << r.dataset << std::setw(8)
       << (r.qp < 0 ? std::string("mean") : std::to_string(r.qp)) << std::right << std::fixed
       << std::setprecision(4) << std::setw(9) << r.s_m << std::setw(9) << r.f_beta
       << std::setw(9) << r.mae << std::setw(8) << r.count << std::setw(6) << r.f_excluded
       << "\n";
  }
  return os.str();
}

}  // namespace cisod::metrics
