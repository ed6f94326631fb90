#include "plfm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "plfm/errors.hpp"
#include "plfm/png.hpp"

namespace plfm::report {

namespace fs = std::filesystem;

std::string bucket_label(int i) {
  switch (i) {
    case 0: return "<=20%";
    case 1: return "20-50%";
    case 2: return "50-80%";
    case 3: return "80-100%";
  }
  return "?";
}

int bucket_of(double coverage) {
  if (coverage <= 0.20) return 0;
  if (coverage <= 0.50) return 1;
  if (coverage <= 0.80) return 2;
  return 3;
}

std::vector<BucketRow> bucket_means(
    const std::vector<std::pair<double, metrics::MetricsReport>>& rows) {
  std::vector<BucketRow> out;
  for (int b = 0; b < 4; ++b) {
    BucketRow row;
    row.bucket = b;
    for (const auto& [cov, rep] : rows) {
      if (bucket_of(cov) != b) continue;
      ++row.count;
      row.mean.psnr += rep.psnr;
      row.mean.ssim += rep.ssim;
      row.mean.sam += rep.sam;
      row.mean.mse += rep.mse;
      row.mean.rmse += rep.rmse;
      row.mean.cc += rep.cc;
      row.mean.dd += rep.dd;
      row.mean.uqi += rep.uqi;
    }
    if (row.count == 0) continue;
    const double n = row.count;
    row.mean.psnr /= n;
    row.mean.ssim /= n;
    row.mean.sam /= n;
    row.mean.mse /= n;
    row.mean.rmse /= n;
    row.mean.cc /= n;
    row.mean.dd /= n;
    row.mean.uqi /= n;
    out.push_back(row);
  }
  return out;
}

std::string bucket_table_tsv(const std::vector<BucketRow>& rows) {
  std::ostringstream os;
  os << "bucket\tcount\tpsnr\tssim\tsam\tmse\trmse\tcc\tdd\tuqi\n";
  char buf[256];
  for (const BucketRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%d\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\t%.6g\n",
                  bucket_label(r.bucket).c_str(), r.count, r.mean.psnr, r.mean.ssim, r.mean.sam,
                  r.mean.mse, r.mean.rmse, r.mean.cc, r.mean.dd, r.mean.uqi);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Plot rendering

namespace {

// 3x5 glyphs for 0-9 . - e +
const uint16_t kGlyphs[14] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
    0b000000000000010,  // .
    0b000000111000000,  // -
    0b000111111100111,  // e
    0b000010111010000,  // +
};

int glyph_index(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  switch (c) {
    case '.': return 10;
    case '-': return 11;
    case 'e': return 12;
    case '+': return 13;
  }
  return -1;
}

struct Canvas {
  int w, h;
  std::vector<uint8_t> rgb;
  Canvas(int width, int height) : w(width), h(height), rgb(static_cast<size_t>(width) * height * 3, 255) {}

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    const size_t i = (static_cast<size_t>(y) * w + x) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }

  void line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy, x = x0, y = y0;
    while (true) {
      set(x, y, r, g, b);
      if (x == x1 && y == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  }

  void text(int x, int y, const std::string& s) {
    for (char c : s) {
      const int gi = glyph_index(c);
      if (gi >= 0) {
        const uint16_t bits = kGlyphs[gi];
        for (int row = 0; row < 5; ++row)
          for (int col = 0; col < 3; ++col)
            if (bits & (1 << (14 - (row * 3 + col)))) set(x + col, y + row, 40, 40, 40);
      }
      x += 4;
    }
  }
};

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return std::string(buf);
}

constexpr int kMargin = 24;

struct Axes {
  double lo, hi;
};

Axes fit_axis(double lo, double hi) {
  if (!(hi > lo)) {
    hi = lo + 1.0;
    lo -= 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void draw_frame(Canvas& cv, const Axes& ya) {
  cv.line(kMargin, kMargin, kMargin, cv.h - kMargin, 0, 0, 0);
  cv.line(kMargin, cv.h - kMargin, cv.w - kMargin, cv.h - kMargin, 0, 0, 0);
  cv.text(2, kMargin - 2, fmt_tick(ya.hi));
  cv.text(2, cv.h - kMargin - 5, fmt_tick(ya.lo));
}

const uint8_t kPalette[][3] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}};

}  // namespace

void plot_series(const fs::path& path, const std::vector<std::vector<double>>& series, int width,
                 int height) {
  Canvas cv(width, height);
  double lo = 1e300, hi = -1e300;
  size_t longest = 1;
  for (const auto& s : series)
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const auto& s : series) longest = std::max(longest, s.size());
  if (lo > hi) {
    lo = 0;
    hi = 1;
  }
  const Axes ya = fit_axis(lo, hi);
  draw_frame(cv, ya);

  const double xscale = (width - 2.0 * kMargin) / std::max<size_t>(1, longest - 1);
  const double yscale = (height - 2.0 * kMargin) / (ya.hi - ya.lo);
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const auto* color = kPalette[si % 4];
    for (size_t i = 1; i < s.size(); ++i) {
      const int x0 = kMargin + static_cast<int>((i - 1) * xscale);
      const int x1 = kMargin + static_cast<int>(i * xscale);
      const int y0 = height - kMargin - static_cast<int>((s[i - 1] - ya.lo) * yscale);
      const int y1 = height - kMargin - static_cast<int>((s[i] - ya.lo) * yscale);
      cv.line(x0, y0, x1, y1, color[0], color[1], color[2]);
    }
  }
  io::write_png_rgb8(path, cv.rgb, width, height);
}

void plot_histogram(const fs::path& path, const std::vector<double>& values, int bins, int width,
                    int height) {
  Canvas cv(width, height);
  double lo = 1e300, hi = -1e300;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (values.empty() || lo > hi) {
    lo = 0;
    hi = 1;
  }
  if (hi == lo) hi = lo + 1;
  std::vector<int> counts(static_cast<size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    counts[static_cast<size_t>(std::clamp(b, 0, bins - 1))]++;
  }
  const int peak = *std::max_element(counts.begin(), counts.end());
  const Axes ya{0.0, static_cast<double>(std::max(1, peak))};
  draw_frame(cv, ya);
  cv.text(kMargin, cv.h - kMargin + 4, fmt_tick(lo));
  cv.text(cv.w - kMargin - 30, cv.h - kMargin + 4, fmt_tick(hi));

  const double bw = (width - 2.0 * kMargin) / bins;
  const double yscale = (height - 2.0 * kMargin) / ya.hi;
  for (int b = 0; b < bins; ++b) {
    const int x0 = kMargin + static_cast<int>(b * bw) + 1;
    const int x1 = kMargin + static_cast<int>((b + 1) * bw) - 1;
    const int top = height - kMargin - static_cast<int>(counts[static_cast<size_t>(b)] * yscale);
    for (int x = x0; x <= x1; ++x)
      for (int y = top; y < height - kMargin; ++y) cv.set(x, y, 31, 119, 180);
  }
  io::write_png_rgb8(path, cv.rgb, width, height);
}

// ---------------------------------------------------------------------------
// Aggregate report

namespace {

struct MetricsRow {
  std::string image_id;
  metrics::MetricsReport rep;
};

std::vector<MetricsRow> read_metrics_tsv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("report: cannot open " + path.string());
  std::vector<MetricsRow> rows;
  std::string line;
  if (!std::getline(f, line)) return rows;  // empty file: empty report
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    MetricsRow r;
    std::string tok;
    const auto next = [&]() {
      if (!std::getline(is, tok, '\t')) throw DataError("report: malformed row in " + path.string());
      return tok;
    };
    r.image_id = next();
    try {
      r.rep.psnr = std::stod(next());
      r.rep.ssim = std::stod(next());
      r.rep.sam = std::stod(next());
      r.rep.mse = std::stod(next());
      r.rep.rmse = std::stod(next());
      r.rep.cc = std::stod(next());
      r.rep.dd = std::stod(next());
      r.rep.uqi = std::stod(next());
      r.rep.csc_applied = std::stoi(next()) != 0;
      r.rep.e1 = std::stoi(next());
      r.rep.e2 = std::stoi(next());
    } catch (const std::invalid_argument&) {
      throw DataError("report: malformed numeric field in " + path.string());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

int write_report(const ReportInputs& inputs, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<MetricsRow> rows = read_metrics_tsv(inputs.metrics_tsv);

  int plots = 0;
  // bucket table needs per-image coverage, written by the evaluator next to
  // the metrics table
  fs::path coverage_path = inputs.metrics_tsv;
  coverage_path.replace_filename("coverage.tsv");
  std::vector<std::pair<double, metrics::MetricsReport>> with_cov;
  if (fs::exists(coverage_path)) {
    std::ifstream cf(coverage_path);
    std::map<std::string, double> cov;
    std::string line;
    std::getline(cf, line);
    while (std::getline(cf, line)) {
      const auto tab = line.find('\t');
      if (tab != std::string::npos)
        cov[line.substr(0, tab)] = std::stod(line.substr(tab + 1));
    }
    for (const auto& r : rows)
      if (auto it = cov.find(r.image_id); it != cov.end())
        with_cov.emplace_back(it->second, r.rep);
  }
  {
    std::ofstream bt(out_dir / "buckets.tsv");
    bt << bucket_table_tsv(bucket_means(with_cov));
  }

  if (!rows.empty()) {
    const auto collect = [&rows](auto getter) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (const auto& r : rows) v.push_back(getter(r.rep));
      return v;
    };
    const std::vector<std::pair<std::string, std::vector<double>>> dists = {
        {"psnr", collect([](const metrics::MetricsReport& r) { return r.psnr; })},
        {"ssim", collect([](const metrics::MetricsReport& r) { return r.ssim; })},
        {"sam", collect([](const metrics::MetricsReport& r) { return r.sam; })},
        {"mse", collect([](const metrics::MetricsReport& r) { return r.mse; })},
        {"rmse", collect([](const metrics::MetricsReport& r) { return r.rmse; })},
        {"cc", collect([](const metrics::MetricsReport& r) { return r.cc; })},
        {"dd", collect([](const metrics::MetricsReport& r) { return r.dd; })},
        {"uqi", collect([](const metrics::MetricsReport& r) { return r.uqi; })},
    };
    for (const auto& [name, values] : dists) {
      plot_histogram(out_dir / ("dist_" + name + ".png"), values);
      ++plots;
    }
  }

  for (const fs::path& log : inputs.train_logs) {
    std::ifstream lf(log);
    if (!lf) throw DataError("report: cannot open training log " + log.string());
    std::string header;
    std::getline(lf, header);
    std::vector<std::string> cols;
    {
      std::istringstream hs(header);
      std::string c;
      while (std::getline(hs, c, '\t')) cols.push_back(c);
    }
    std::vector<std::vector<double>> series(cols.size() > 1 ? cols.size() - 1 : 0);
    std::string line;
    while (std::getline(lf, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      std::string tok;
      std::getline(is, tok, '\t');  // step/epoch index
      for (size_t i = 0; i < series.size() && std::getline(is, tok, '\t'); ++i)
        series[i].push_back(std::stod(tok));
    }
    if (!series.empty() && !series[0].empty()) {
      plot_series(out_dir / (log.stem().string() + "_curve.png"), series);
      ++plots;
    }
  }
  return plots;
}

}  // namespace plfm::report
