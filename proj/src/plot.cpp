#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cisod/bench.hpp"
#include "cisod/image.hpp"

// Static robustness plots: one panel per metric, one polyline per dataset,
// quantization levels ascending on the x axis. Rendered directly into an RGB
// buffer with a 5x7 bitmap font; no plotting dependency.

namespace cisod::bench {

namespace {

const std::uint8_t* glyph5x7(char ch) {
  static const std::map<char, std::array<std::uint8_t, 7>> table = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
      {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
  };
  char up = ch;
  if (up >= 'a' && up <= 'z') up = static_cast<char>(up - 'a' + 'A');
  auto it = table.find(up);
  if (it == table.end()) it = table.find('.');
  return it->second.data();
}

struct Canvas {
  ImageU8 img;
  Canvas(int w, int h) : img(ImageU8::make(w, h, 3, 255)) {}

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
  }

  void line(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void text(int x, int y, const std::string& s, std::uint8_t r = 30, std::uint8_t g = 30,
            std::uint8_t b = 30) {
    for (char ch : s) {
      const std::uint8_t* rows = glyph5x7(ch);
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 5; ++j)
          if (rows[i] & (0x10 >> j)) set(x + j, y + i, r, g, b);
      x += 6;
    }
  }

  void dot(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) set(x + dx, y + dy, r, g, b);
  }
};

struct Rgb {
  std::uint8_t r, g, b;
};

const Rgb kPalette[] = {{196, 64, 64}, {64, 112, 196}, {52, 148, 84},
                        {176, 120, 36}, {128, 72, 168}, {40, 144, 160}};

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

void emit_robustness_plot(const BenchmarkReport& report, const std::string& png_path) {
  std::set<std::string> dataset_set;
  std::set<int> qp_set;
  for (const auto& r : report.rows) {
    if (r.qp < 0) continue;
    dataset_set.insert(r.dataset);
    qp_set.insert(r.qp);
  }
  check(!dataset_set.empty() && !qp_set.empty(), "plot: report has no per-level rows");
  const std::vector<std::string> datasets(dataset_set.begin(), dataset_set.end());
  const std::vector<int> qps(qp_set.begin(), qp_set.end());  // ascending

  const char* metric_names[3] = {"S_M", "F_BETA", "MAE"};
  auto metric_value = [](const metrics::AggregateRow& r, int m) {
    return m == 0 ? r.s_m : (m == 1 ? r.f_beta : r.mae);
  };

  const int panel_w = 270, panel_h = 200, margin_l = 46, margin_b = 34, margin_t = 18;
  const int legend_h = 14 + 12 * static_cast<int>(datasets.size());
  Canvas cv(panel_w * 3 + 20, panel_h + legend_h + 10);

  for (int m = 0; m < 3; ++m) {
    const int ox = 10 + m * panel_w + margin_l;
    const int oy = margin_t;
    const int pw = panel_w - margin_l - 16;
    const int ph = panel_h - margin_t - margin_b;

    double lo = 1e300, hi = -1e300;
    for (const auto& r : report.rows) {
      if (r.qp < 0) continue;
      lo = std::min(lo, metric_value(r, m));
      hi = std::max(hi, metric_value(r, m));
    }
    if (!(hi > lo)) {
      hi = lo + 1e-6;
    }
    const double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;

    // axes
    cv.line(ox, oy, ox, oy + ph, 60, 60, 60);
    cv.line(ox, oy + ph, ox + pw, oy + ph, 60, 60, 60);
    cv.text(ox + pw / 2 - 18, 2, metric_names[m]);
    cv.text(ox - 44, oy - 3, fmt3(hi));
    cv.text(ox - 44, oy + ph - 3, fmt3(lo));

    auto xpos = [&](std::size_t qi) {
      return ox + static_cast<int>(std::lround(
                      (static_cast<double>(qi) + 0.5) / static_cast<double>(qps.size()) * pw));
    };
    auto ypos = [&](double v) {
      return oy + static_cast<int>(std::lround((hi - v) / (hi - lo) * ph));
    };

    for (std::size_t qi = 0; qi < qps.size(); ++qi)
      cv.text(xpos(qi) - 11, oy + ph + 6, "QP" + std::to_string(qps[qi]));

    for (std::size_t di = 0; di < datasets.size(); ++di) {
      const Rgb c = kPalette[di % std::size(kPalette)];
      int px = -1, py = -1;
      for (std::size_t qi = 0; qi < qps.size(); ++qi) {
        const metrics::AggregateRow* row = nullptr;
        for (const auto& r : report.rows)
          if (r.dataset == datasets[di] && r.qp == qps[qi]) row = &r;
        if (!row) continue;
        const int x = xpos(qi), y = ypos(metric_value(*row, m));
        if (px >= 0) cv.line(px, py, x, y, c.r, c.g, c.b);
        cv.dot(x, y, c.r, c.g, c.b);
        px = x;
        py = y;
      }
    }
  }

  // legend
  for (std::size_t di = 0; di < datasets.size(); ++di) {
    const Rgb c = kPalette[di % std::size(kPalette)];
    const int y = panel_h + 8 + 12 * static_cast<int>(di);
    for (int dy = 0; dy < 7; ++dy)
      for (int dx = 0; dx < 7; ++dx) cv.set(16 + dx, y + dy, c.r, c.g, c.b);
    cv.text(28, y, datasets[di]);
  }

  write_png(png_path, cv.img);
}

}  // namespace cisod::bench
