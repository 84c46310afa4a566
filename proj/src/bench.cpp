#include "cisod/bench.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace cisod::bench {

namespace ad = cisod::ad;
using ad::Var;

std::uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(static_cast<bool>(f), "file_hash: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!f) break;
  }
  return h;
}

BenchmarkReport evaluate(const net::SaliencyNet& model,
                         const std::vector<dataset::BenchmarkManifest>& manifests,
                         const EvalOptions& opts) {
  BenchmarkReport report;
  nlohmann::json missing = nlohmann::json::array();
  const auto t0 = std::chrono::steady_clock::now();

  for (const auto& m : manifests) {
    for (const auto& e : m.entries) {
      dataset::CompressedSample s;
      try {
        s = dataset::load_entry(e, opts.image_size);
      } catch (const std::exception& ex) {
        missing.push_back(std::string(ex.what()));
        report.incomplete = true;
        continue;
      }
      Var input = ad::constant(dataset::normalize_chw(s.compressed, opts.normalize)
                                   .reshaped(Shape{1, 3, opts.image_size, opts.image_size}));
      net::ForwardOut out = model.forward(input, /*with_priors=*/false);
      const Tensor pred = out.s_w->val.reshaped(s.gt.shape());

      metrics::EvalRecord r;
      r.dataset = m.name;
      r.id = e.id;
      r.qp = e.qp.value;
      r.s_m = metrics::s_measure(pred, s.gt);
      r.mae = metrics::mae(pred, s.gt);
      metrics::ThresholdSweep sweep = metrics::f_measure_sweep(pred, s.gt);
      if (sweep.defined) {
        r.f_beta_max = *std::max_element(sweep.fbeta.begin(), sweep.fbeta.end());
      } else {
        r.f_defined = false;
      }
      report.records.push_back(std::move(r));
      report.sweeps.push_back(std::move(sweep));
    }
  }
  report.rows = metrics::aggregate(report.records, &report.sweeps, opts.dataset_level_f);

  const auto t1 = std::chrono::steady_clock::now();
  report.metadata["wall_time_sec"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count() / 1000.0;
  report.metadata["image_size"] = opts.image_size;
  report.metadata["dataset_level_f"] = opts.dataset_level_f;
  report.metadata["network"] = model.config();
  if (!missing.empty()) report.metadata["missing"] = missing;
  return report;
}

void write_report(const std::string& out_dir, const BenchmarkReport& report) {
  fs::create_directories(out_dir);
  metrics::write_records_csv((fs::path(out_dir) / "records.csv").string(), report.records);
  metrics::write_aggregate_csv((fs::path(out_dir) / "aggregate.csv").string(), report.rows);
  {
    std::ofstream t((fs::path(out_dir) / "aggregate.txt").string());
    t << metrics::aggregate_text(report.rows);
  }
  nlohmann::json j;
  j["version"] = report.version;
  j["incomplete"] = report.incomplete;
  j["metadata"] = report.metadata;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"dataset", r.dataset},
                    {"qp", r.qp},
                    {"s_m", r.s_m},
                    {"f_beta", r.f_beta},
                    {"mae", r.mae},
                    {"count", r.count},
                    {"f_excluded", r.f_excluded}});
  }
  j["rows"] = rows;
  j["records_csv"] = "records.csv";
  std::ofstream f((fs::path(out_dir) / "report.json").string());
  check(static_cast<bool>(f), "bench: cannot write report in " + out_dir);
  f << j.dump(2) << "\n";
}

BenchmarkReport read_report(const std::string& out_dir) {
  std::ifstream f((fs::path(out_dir) / "report.json").string());
  check(static_cast<bool>(f), "bench: cannot open report in " + out_dir);
  nlohmann::json j = nlohmann::json::parse(f);
  BenchmarkReport report;
  report.version = j.value("version", 0);
  report.incomplete = j.value("incomplete", false);
  report.metadata = j.value("metadata", nlohmann::json::object());
  for (const auto& r : j.at("rows")) {
    metrics::AggregateRow row;
    row.dataset = r.at("dataset").get<std::string>();
    row.qp = r.at("qp").get<int>();
    row.s_m = r.at("s_m").get<double>();
    row.f_beta = r.at("f_beta").get<double>();
    row.mae = r.at("mae").get<double>();
    row.count = r.at("count").get<int>();
    row.f_excluded = r.at("f_excluded").get<int>();
    report.rows.push_back(std::move(row));
  }
  const fs::path rec = fs::path(out_dir) / j.value("records_csv", std::string("records.csv"));
  if (fs::exists(rec)) report.records = metrics::read_records_csv(rec.string());
  return report;
}

CompareResult compare(const BenchmarkReport& a, const BenchmarkReport& b, double tolerance) {
  check(a.version == b.version,
        "compare: report schema version mismatch " + std::to_string(a.version) + " vs " +
            std::to_string(b.version));
  CompareResult out;
  std::ostringstream text;
  text << std::left << std::setw(20) << "dataset" << std::setw(8) << "qp" << std::setw(8)
       << "metric" << std::right << std::setw(10) << "a" << std::setw(10) << "b" << std::setw(11)
       << "delta" << "\n";
  for (const auto& ra : a.rows) {
    const metrics::AggregateRow* rb = nullptr;
    for (const auto& r : b.rows)
      if (r.dataset == ra.dataset && r.qp == ra.qp) {
        rb = &r;
        break;
      }
    if (!rb) continue;
    const std::array<std::pair<std::string, std::pair<double, double>>, 3> triples = {
        {{"S_m", {ra.s_m, rb->s_m}},
         {"F", {ra.f_beta, rb->f_beta}},
         {"MAE", {ra.mae, rb->mae}}}};
    for (const auto& [metric, vals] : triples) {
      CompareCell c;
      c.dataset = ra.dataset;
      c.qp = ra.qp;
      c.metric = metric;
      c.a = vals.first;
      c.b = vals.second;
      c.delta = vals.second - vals.first;
      c.flagged = std::abs(c.delta) > tolerance;
      if (c.flagged) ++out.flagged_count;
      text << std::left << std::setw(20) << c.dataset << std::setw(8)
           << (c.qp < 0 ? std::string("mean") : std::to_string(c.qp)) << std::setw(8) << metric
           << std::right << std::fixed << std::setprecision(4) << std::setw(10) << c.a
           << std::setw(10) << c.b << std::setw(10) << c.delta << (c.flagged ? " *" : "") << "\n";
      out.cells.push_back(std::move(c));
    }
  }
  out.text = text.str();
  return out;
}

void dump_graph_assignments(const net::SaliencyNet& model, const std::string& image_path,
                            const EvalOptions& opts, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Tensor img = resize_chw_bilinear(chw_from_u8(read_png(image_path)), opts.image_size,
                                   opts.image_size);
  Var input = ad::constant(dataset::normalize_chw(img, opts.normalize)
                               .reshaped(Shape{1, 3, opts.image_size, opts.image_size}));
  net::ForwardOut out = model.forward(input, /*with_priors=*/false);

  auto dump = [&](const Var& mt, std::int64_t hw_side, const std::string& prefix) {
    const std::int64_t nodes = mt->val.dim(1);
    for (std::int64_t n = 0; n < nodes; ++n) {
      Tensor map(Shape{1, hw_side, hw_side});
      double peak = 0.0;
      for (std::int64_t i = 0; i < hw_side * hw_side; ++i) {
        map[i] = mt->val[n * hw_side * hw_side + i];
        peak = std::max(peak, map[i]);
      }
      if (peak > 0.0) map.scale_(1.0 / peak);
      std::ostringstream name;
      name << prefix << "_node" << std::setw(2) << std::setfill('0') << n << ".png";
      write_png((fs::path(out_dir) / name.str()).string(), u8_from_mask(map));
    }
  };
  dump(out.mt_l, out.s_l->val.dim(2), "location");
  dump(out.mt_p, out.s_p->val.dim(2), "parts");
}

}  // namespace cisod::bench
