#include "cisod/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cisod/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cisod::dataset {

bool BenchmarkManifest::operator==(const BenchmarkManifest& o) const {
  return name == o.name && split == o.split && entries == o.entries && seed == o.seed &&
         codec_record.block_size == o.codec_record.block_size &&
         codec_record.level_set == o.codec_record.level_set &&
         codec_record.backend == o.codec_record.backend;
}

void BenchmarkManifest::validate() const {
  std::set<std::pair<std::string, int>> keys;
  for (const auto& e : entries) {
    check(codec_record.supports(e.qp),
          "manifest " + name + ": entry " + e.id + " has qp outside the level set");
    auto [it, inserted] = keys.insert({e.id, e.qp.value});
    check(inserted, "manifest " + name + ": duplicate (id,qp) " + e.id);
  }
  std::map<std::string, int> per_id;
  for (const auto& e : entries) per_id[e.id]++;
  if (split == "train") {
    for (const auto& [id, cnt] : per_id)
      check(cnt == 1, "train manifest " + name + ": id " + id + " appears " +
                          std::to_string(cnt) + " times");
  } else if (split == "test") {
    const int want = static_cast<int>(codec_record.level_set.size());
    for (const auto& [id, cnt] : per_id)
      check(cnt == want, "test manifest " + name + ": id " + id + " appears " +
                             std::to_string(cnt) + " times, expected " + std::to_string(want));
  } else {
    check(false, "manifest " + name + ": unknown split '" + split + "'");
  }
}

namespace {

json codec_to_json(const codec::CodecConfig& c) {
  json j;
  j["backend"] = (c.backend == codec::Backend::kInternal) ? "internal" : "external";
  j["block_size"] = c.block_size;
  std::vector<int> levels;
  for (auto l : c.level_set) levels.push_back(l.value);
  j["levels"] = levels;
  j["rng_seed"] = c.rng_seed;
  if (!c.external_cmd.empty()) j["external_cmd"] = c.external_cmd;
  return j;
}

codec::CodecConfig codec_from_json(const json& j) {
  codec::CodecConfig c;
  c.backend = (j.at("backend").get<std::string>() == "external") ? codec::Backend::kExternal
                                                                 : codec::Backend::kInternal;
  c.block_size = j.at("block_size").get<int>();
  c.level_set.clear();
  for (int v : j.at("levels").get<std::vector<int>>()) c.level_set.push_back({v});
  c.rng_seed = j.value("rng_seed", std::uint64_t{0});
  c.external_cmd = j.value("external_cmd", std::string{});
  return c;
}

}  // namespace

void write_manifest(const std::string& path, const BenchmarkManifest& m) {
  std::ofstream f(path);
  check(static_cast<bool>(f), "manifest: cannot open for writing " + path);
  json header;
  header["type"] = "cisod-manifest";
  header["version"] = 1;
  header["name"] = m.name;
  header["split"] = m.split;
  header["seed"] = m.seed;
  header["codec"] = codec_to_json(m.codec_record);
  f << header.dump() << "\n";
  for (const auto& e : m.entries) {
    json r;
    r["id"] = e.id;
    r["qp"] = e.qp.value;
    r["clean"] = e.clean_path;
    r["compressed"] = e.compressed_path;
    r["gt"] = e.gt_path;
    f << r.dump() << "\n";
  }
  check(static_cast<bool>(f), "manifest: write failed " + path);
}

BenchmarkManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  check(static_cast<bool>(f), "manifest: cannot open " + path);
  std::string line;
  check(static_cast<bool>(std::getline(f, line)), "manifest: empty file " + path);
  json header = json::parse(line);
  check(header.value("type", "") == "cisod-manifest", "manifest: bad header in " + path);
  check(header.value("version", 0) == 1, "manifest: unsupported version in " + path);
  BenchmarkManifest m;
  m.name = header.at("name").get<std::string>();
  m.split = header.at("split").get<std::string>();
  m.seed = header.at("seed").get<std::uint64_t>();
  m.codec_record = codec_from_json(header.at("codec"));
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json r = json::parse(line);
    ManifestEntry e;
    e.id = r.at("id").get<std::string>();
    e.qp = {r.at("qp").get<int>()};
    e.clean_path = r.at("clean").get<std::string>();
    e.compressed_path = r.at("compressed").get<std::string>();
    e.gt_path = r.at("gt").get<std::string>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::vector<std::string> list_png_stems(const std::string& dir) {
  std::vector<std::string> stems;
  check(fs::is_directory(dir), "dataset: not a directory: " + dir);
  for (const auto& de : fs::directory_iterator(dir))
    if (de.is_regular_file() && de.path().extension() == ".png")
      stems.push_back(de.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

namespace {

// pairs clean ids with gt files; throws listing every missing gt
std::vector<std::string> paired_ids(const std::string& clean_dir, const std::string& gt_dir) {
  std::vector<std::string> ids = list_png_stems(clean_dir);
  std::vector<std::string> missing;
  for (const auto& id : ids)
    if (!fs::exists(fs::path(gt_dir) / (id + ".png"))) missing.push_back(id);
  if (!missing.empty()) {
    std::string msg = "dataset: missing ground truth for ids:";
    for (const auto& id : missing) msg += " " + id;
    throw std::runtime_error(msg);
  }
  return ids;
}

std::string compress_into(const std::string& clean_path, const std::string& out_root,
                          const std::string& name, codec::QPLevel qp, const std::string& id,
                          const codec::CodecConfig& cfg) {
  const fs::path dir = fs::path(out_root) / name / std::to_string(qp.value);
  fs::create_directories(dir);
  const std::string out_path = (dir / (id + ".png")).string();
  codec::compress_file(clean_path, out_path, qp, cfg);
  return out_path;
}

}  // namespace

BenchmarkManifest build_test_benchmark(const std::string& clean_dir, const std::string& gt_dir,
                                       const std::string& out_root, const std::string& name,
                                       const codec::CodecConfig& cfg) {
  cfg.validate();
  const auto ids = paired_ids(clean_dir, gt_dir);
  if (ids.empty())
    std::cerr << "warning: test benchmark '" << name << "' built from zero clean images\n";
  BenchmarkManifest m;
  m.name = name;
  m.split = "test";
  m.codec_record = cfg;
  for (const auto& id : ids) {
    const std::string clean_path = (fs::path(clean_dir) / (id + ".png")).string();
    const std::string gt_path = (fs::path(gt_dir) / (id + ".png")).string();
    for (const auto& qp : cfg.level_set) {
      ManifestEntry e;
      e.id = id;
      e.qp = qp;
      e.clean_path = clean_path;
      e.gt_path = gt_path;
      e.compressed_path = compress_into(clean_path, out_root, name, qp, id, cfg);
      m.entries.push_back(std::move(e));
    }
  }
  m.validate();
  fs::create_directories(fs::path(out_root) / name);
  write_manifest((fs::path(out_root) / name / "manifest.txt").string(), m);
  return m;
}

std::vector<codec::QPLevel> assign_levels(std::size_t count, const codec::CodecConfig& cfg,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<codec::QPLevel> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(cfg.level_set[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(cfg.level_set.size()) - 1))]);
  return out;
}

BenchmarkManifest build_train_benchmark(const std::string& clean_dir, const std::string& gt_dir,
                                        const std::string& out_root, const std::string& name,
                                        const codec::CodecConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto ids = paired_ids(clean_dir, gt_dir);
  if (ids.empty())
    std::cerr << "warning: train benchmark '" << name << "' built from zero clean images\n";
  BenchmarkManifest m;
  m.name = name;
  m.split = "train";
  m.seed = seed;
  m.codec_record = cfg;
  const std::vector<codec::QPLevel> levels = assign_levels(ids.size(), cfg, seed);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& id = ids[k];
    const codec::QPLevel qp = levels[k];
    ManifestEntry e;
    e.id = id;
    e.qp = qp;
    e.clean_path = (fs::path(clean_dir) / (id + ".png")).string();
    e.gt_path = (fs::path(gt_dir) / (id + ".png")).string();
    e.compressed_path = compress_into(e.clean_path, out_root, name, qp, id, cfg);
    m.entries.push_back(std::move(e));
  }
  m.validate();
  fs::create_directories(fs::path(out_root) / name);
  write_manifest((fs::path(out_root) / name / "manifest.txt").string(), m);
  return m;
}

// ------------------------------------------------------------------
// synthetic corpus

void rasterize_disk(Tensor& mask01, double cx, double cy, double r) {
  const std::int64_t H = mask01.dim(1), W = mask01.dim(2);
  const double r2 = r * r;
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const double dx = static_cast<double>(x) + 0.5 - cx;
      const double dy = static_cast<double>(y) + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) mask01[y * W + x] = 1.0;
    }
}

void rasterize_rect(Tensor& mask01, double x0, double y0, double x1, double y1) {
  const std::int64_t H = mask01.dim(1), W = mask01.dim(2);
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      if (px >= x0 && px <= x1 && py >= y0 && py <= y1) mask01[y * W + x] = 1.0;
    }
}

void rasterize_triangle(Tensor& mask01, const std::array<double, 6>& xy) {
  const std::int64_t H = mask01.dim(1), W = mask01.dim(2);
  const double ax = xy[0], ay = xy[1], bx = xy[2], by = xy[3], cx = xy[4], cy = xy[5];
  auto edge = [](double x0, double y0, double x1, double y1, double px, double py) {
    return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
  };
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const double e0 = edge(ax, ay, bx, by, px, py);
      const double e1 = edge(bx, by, cx, cy, px, py);
      const double e2 = edge(cx, cy, ax, ay, px, py);
      if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0))
        mask01[y * W + x] = 1.0;
    }
}

SynthDirs make_synthetic_corpus(const std::string& out_dir, int n, int size, std::uint64_t seed) {
  check(n >= 1, "synth: n must be >= 1");
  check(size >= 32, "synth: size must be >= 32");
  SynthDirs dirs;
  dirs.clean_dir = (fs::path(out_dir) / "clean").string();
  dirs.gt_dir = (fs::path(out_dir) / "gt").string();
  fs::create_directories(dirs.clean_dir);
  fs::create_directories(dirs.gt_dir);

  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Tensor img(Shape{3, size, size});
    // textured background: low-frequency sinusoids plus grain, muted contrast
    const double base[3] = {80 + rng.uniform() * 60, 80 + rng.uniform() * 60,
                            80 + rng.uniform() * 60};
    const double fx = 2.0 * M_PI * (1.0 + rng.uniform() * 3.0) / size;
    const double fy = 2.0 * M_PI * (1.0 + rng.uniform() * 3.0) / size;
    const double ph1 = rng.uniform() * 2.0 * M_PI;
    const double ph2 = rng.uniform() * 2.0 * M_PI;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          double v = base[c] + 18.0 * std::sin(fx * x + ph1 + c) +
                     18.0 * std::cos(fy * y + ph2 - c) + rng.normal(0.0, 6.0);
          img[(static_cast<std::int64_t>(c) * size + y) * size + x] = std::clamp(v, 0.0, 255.0);
        }

    Tensor gt(Shape{1, size, size});
    const int num_shapes = static_cast<int>(rng.uniform_int(1, 3));
    for (int s = 0; s < num_shapes; ++s) {
      Tensor shape_mask(Shape{1, size, size});
      const int kind = static_cast<int>(rng.uniform_int(0, 2));
      const double cx = size * (0.25 + 0.5 * rng.uniform());
      const double cy = size * (0.25 + 0.5 * rng.uniform());
      const double r = size * (0.10 + 0.15 * rng.uniform());
      if (kind == 0) {
        rasterize_disk(shape_mask, cx, cy, r);
      } else if (kind == 1) {
        rasterize_rect(shape_mask, cx - r, cy - r * (0.6 + 0.8 * rng.uniform()), cx + r,
                       cy + r * (0.6 + 0.8 * rng.uniform()));
      } else {
        const double a = rng.uniform() * 2.0 * M_PI;
        rasterize_triangle(shape_mask,
                           {cx + r * std::cos(a), cy + r * std::sin(a),
                            cx + r * std::cos(a + 2.2), cy + r * std::sin(a + 2.2),
                            cx + r * std::cos(a + 4.2), cy + r * std::sin(a + 4.2)});
      }
      // high-contrast fill: either near-black or saturated bright
      double color[3];
      if (rng.uniform() < 0.5) {
        for (double& cc : color) cc = rng.uniform() * 40.0;
      } else {
        for (double& cc : color) cc = 180.0 + rng.uniform() * 75.0;
      }
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          if (shape_mask[static_cast<std::int64_t>(y) * size + x] > 0.5) {
            gt[static_cast<std::int64_t>(y) * size + x] = 1.0;
            for (int c = 0; c < 3; ++c)
              img[(static_cast<std::int64_t>(c) * size + y) * size + x] = color[c];
          }
    }

    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04d", i);
    write_png((fs::path(dirs.clean_dir) / (std::string(id) + ".png")).string(),
              u8_from_chw(img));
    write_png((fs::path(dirs.gt_dir) / (std::string(id) + ".png")).string(), u8_from_mask(gt));
  }
  return dirs;
}

// ------------------------------------------------------------------
// loading

Tensor normalize_chw(const Tensor& chw255, const NormalizeConfig& n) {
  check(chw255.rank() == 3 && chw255.dim(0) == 3, "normalize: 3xHxW expected");
  Tensor out(chw255.shape());
  const std::int64_t plane = chw255.dim(1) * chw255.dim(2);
  for (int c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < plane; ++i)
      out[c * plane + i] =
          (chw255[c * plane + i] / 255.0 - n.mean[static_cast<std::size_t>(c)]) /
          n.stddev[static_cast<std::size_t>(c)];
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& chw) {
  check(!chw.empty(), "stack_batch: empty");
  Shape s = chw[0].shape();
  Tensor out(Shape{static_cast<std::int64_t>(chw.size()), s[0], s[1], s[2]});
  const std::int64_t stride = s[0] * s[1] * s[2];
  for (std::size_t i = 0; i < chw.size(); ++i) {
    check(chw[i].shape() == s, "stack_batch: ragged shapes");
    std::copy(chw[i].data(), chw[i].data() + stride,
              out.data() + static_cast<std::int64_t>(i) * stride);
  }
  return out;
}

CompressedSample load_entry(const ManifestEntry& e, std::int64_t target_size) {
  CompressedSample s;
  s.id = e.id;
  s.qp = e.qp;
  try {
    s.clean = resize_chw_bilinear(chw_from_u8(read_png(e.clean_path)), target_size, target_size);
    s.compressed =
        resize_chw_bilinear(chw_from_u8(read_png(e.compressed_path)), target_size, target_size);
    // area interpolation, kept soft; metrics binarize when they need to
    s.gt = resize_chw_area(mask_from_u8(read_png(e.gt_path)), target_size, target_size);
  } catch (const std::exception& ex) {
    throw std::runtime_error("load_entry: id '" + e.id + "': " + ex.what());
  }
  return s;
}

std::vector<CompressedSample> load_batch(const BenchmarkManifest& m,
                                         const std::vector<std::string>& ids,
                                         std::int64_t target_size) {
  std::map<std::string, const ManifestEntry*> by_id;
  std::set<std::string> dup;
  for (const auto& e : m.entries) {
    if (by_id.count(e.id)) dup.insert(e.id);
    by_id[e.id] = &e;
  }
  std::vector<CompressedSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    check(it != by_id.end(), "load_batch: unknown id '" + id + "'");
    check(!dup.count(id), "load_batch: id '" + id + "' is ambiguous in a test manifest");
    out.push_back(load_entry(*it->second, target_size));
  }
  return out;
}

}  // namespace cisod::dataset
