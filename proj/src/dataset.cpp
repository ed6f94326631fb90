#include "plfm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "plfm/errors.hpp"
#include "plfm/rng.hpp"
#include "plfm/tensor_io.hpp"

namespace plfm::dataset {

namespace fs = std::filesystem;

namespace {

/// Band-limited random field in [0,1]: bilinear-upsampled white noise at a
/// few octaves, min-max normalized.
Tensor smooth_field(int h, int w, std::mt19937_64& rng, int base_cells = 4, int octaves = 3) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Tensor field({h, w});
  double weight = 1.0;
  for (int oct = 0; oct < octaves; ++oct) {
    const int cells = base_cells << oct;
    const int gh = std::min(h, cells) + 1, gw = std::min(w, cells) + 1;
    Tensor grid({gh, gw});
    for (int64_t i = 0; i < grid.numel(); ++i) grid[i] = uni(rng);
    for (int y = 0; y < h; ++y) {
      const double fy = (gh - 1) * static_cast<double>(y) / std::max(1, h - 1);
      const int y0 = std::min(static_cast<int>(fy), gh - 2);
      const double ty = fy - y0;
      for (int x = 0; x < w; ++x) {
        const double fx = (gw - 1) * static_cast<double>(x) / std::max(1, w - 1);
        const int x0 = std::min(static_cast<int>(fx), gw - 2);
        const double tx = fx - x0;
        const double v = (1 - ty) * ((1 - tx) * grid.at(y0, x0) + tx * grid.at(y0, x0 + 1)) +
                         ty * ((1 - tx) * grid.at(y0 + 1, x0) + tx * grid.at(y0 + 1, x0 + 1));
        field.at(y, x) += weight * v;
      }
    }
    weight *= 0.5;
  }
  double lo = 1e300, hi = -1e300;
  for (int64_t i = 0; i < field.numel(); ++i) {
    lo = std::min(lo, field[i]);
    hi = std::max(hi, field[i]);
  }
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  for (int64_t i = 0; i < field.numel(); ++i) field[i] = (field[i] - lo) * scale;
  return field;
}

double quantile_threshold(const Tensor& field, double fraction_below) {
  std::vector<double> sorted(field.data(), field.data() + field.numel());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const auto idx = static_cast<size_t>(std::clamp(fraction_below, 0.0, 1.0) * (n - 1));
  return sorted[idx];
}

}  // namespace

std::pair<data::OpticalImage, Tensor> apply_clouds(const data::OpticalImage& img, double coverage,
                                                   double thickness, uint64_t seed) {
  if (coverage < 0 || coverage > 1 || thickness < 0 || thickness > 1)
    throw DataError("clouds: coverage and thickness must be in [0,1]");
  const int h = img.height(), w = img.width();
  Tensor mask({h, w});
  if (coverage == 0.0) return {img, mask};

  auto rng = make_rng(seed, "clouds");
  const Tensor g = smooth_field(h, w, rng, 3, 3);
  const Tensor detail = smooth_field(h, w, rng, 8, 2);

  Tensor soft({h, w});
  if (coverage >= 0.999) {
    soft.fill(1.0);
  } else {
    const double tau = quantile_threshold(g, 1.0 - coverage);
    const double softness = 0.25;  // transition width of the cloud edge
    for (int64_t i = 0; i < soft.numel(); ++i)
      soft[i] = std::clamp(0.5 + (g[i] - tau) / softness, 0.0, 1.0);
  }

  data::OpticalImage out = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double alpha = thickness * soft.at(y, x);
      const double cloud = 0.90 + 0.10 * detail.at(y, x);  // white-ish deck
      for (int c = 0; c < img.bands(); ++c)
        out.values.at(y, x, c) = (1.0 - alpha) * img.values.at(y, x, c) + alpha * cloud;
      mask.at(y, x) = alpha > 0.5 * thickness ? 1.0 : 0.0;
    }
  return {out, mask};
}

Tensor speckle_field(int h, int w, int looks, uint64_t seed) {
  if (looks < 1) throw DataError("speckle: looks must be >= 1");
  auto rng = make_rng(seed, "speckle");
  std::gamma_distribution<double> gamma(static_cast<double>(looks), 1.0 / looks);
  Tensor s({h, w});
  for (int64_t i = 0; i < s.numel(); ++i) s[i] = gamma(rng);
  return s;
}

data::SARImage simulate_sar(const Tensor& optical_gray, int looks, uint64_t seed) {
  if (optical_gray.rank() != 2) throw DataError("sar: grayscale input must be rank 2");
  const int h = optical_gray.dim(0), w = optical_gray.dim(1);
  const Tensor s = speckle_field(h, w, looks, seed);
  data::SARImage out(h, w, data::Range::Unit, looks);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.values.at(y, x, 0) = optical_gray.at(y, x) * s.at(y, x);
  return out;
}

Tensor to_grayscale(const data::OpticalImage& img) {
  const int h = img.height(), w = img.width(), b = img.bands();
  Tensor g({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int c = 0; c < b; ++c) acc += img.values.at(y, x, c);
      g.at(y, x) = acc / b;
    }
  return g;
}

ROISeries synth_scene(uint64_t seed, const SceneCfg& cfg) {
  if (cfg.size < 16) throw DataError("synth: image size must be >= 16");
  if (cfg.coverage < 0 || cfg.coverage > 1) throw DataError("synth: coverage must be in [0,1]");
  if (cfg.steps < 1) throw DataError("synth: need at least one time step");

  const int n = cfg.size;
  auto rng = make_rng(seed, "terrain");
  const Tensor s0 = smooth_field(n, n, rng, 4, 3);
  const Tensor s1 = smooth_field(n, n, rng, 4, 3);

  // Per-ROI channel palette plus a little per-channel texture.
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double lo[3], hi[3];
  for (int c = 0; c < 3; ++c) {
    lo[c] = 0.05 + 0.25 * uni(rng);
    hi[c] = 0.50 + 0.35 * uni(rng);
  }
  Tensor details[3];
  for (int c = 0; c < 3; ++c) details[c] = smooth_field(n, n, rng, 8, 2);

  ROISeries series;
  series.roi_id = "roi" + std::to_string(seed);
  series.seed = seed;
  series.cfg = cfg;
  for (int t = 0; t < cfg.steps; ++t) {
    const double blend = std::min(1.0, t * cfg.drift);
    const double bright = t * cfg.brightness_drift;
    data::OpticalImage clean(n, n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double s = (1.0 - blend) * s0.at(y, x) + blend * s1.at(y, x);
        for (int c = 0; c < 3; ++c) {
          double v = lo[c] + (hi[c] - lo[c]) * s + 0.10 * (details[c].at(y, x) - 0.5) + bright;
          clean.values.at(y, x, c) = std::clamp(v, 0.0, 1.0);
        }
      }

    const bool clouded = cfg.cloud_all || t == cfg.steps - 1;
    const double cov = clouded ? cfg.coverage : 0.0;
    auto [cloudy, mask] = apply_clouds(clean, cov, cfg.thickness, derive_seed(seed, "cloud", t));

    series.optical.push_back(clean);
    series.cloudy.push_back(std::move(cloudy));
    series.cloud_masks.push_back(std::move(mask));
    series.sar.push_back(
        simulate_sar(to_grayscale(clean), cfg.looks, derive_seed(seed, "sar", t)));
    series.timestamps.push_back(static_cast<double>(t));
  }
  return series;
}

Histogram cumulative_histogram(const std::vector<Tensor>& images, int bins) {
  if (images.empty()) throw DataError("histogram: empty sample");
  if (bins < 2) throw DataError("histogram: need at least 2 bins");
  Histogram h;
  h.bins = bins;
  h.counts.assign(static_cast<size_t>(bins), 0.0);
  for (const Tensor& img : images)
    for (int64_t i = 0; i < img.numel(); ++i) {
      int b = static_cast<int>(img[i] * bins);
      b = std::clamp(b, 0, bins - 1);
      h.counts[static_cast<size_t>(b)] += 1.0;
    }
  for (size_t i = 1; i < h.counts.size(); ++i) h.counts[i] += h.counts[i - 1];
  h.cumulative = true;
  return h;
}

double dissimilarity(const Histogram& h_train, const Histogram& h_val, int n_images,
                     bool normalized) {
  if (h_train.bins != h_val.bins || h_train.counts.size() != h_val.counts.size())
    throw DataError("dissimilarity: bin count mismatch");
  if (!h_train.cumulative || !h_val.cumulative)
    throw DataError("dissimilarity: histograms must be cumulative");
  if (n_images < 1) throw DataError("dissimilarity: N must be >= 1");
  const double bins = static_cast<double>(h_train.bins);
  double t_total = 0, v_total = 0;
  for (double c : h_train.counts) t_total += c;
  for (double c : h_val.counts) v_total += c;
  const double t_scale = normalized && t_total > 0 ? 1.0 / t_total : 1.0;
  const double v_scale = normalized && v_total > 0 ? 1.0 / v_total : 1.0;

  double num = 0, den = 0;
  for (size_t i = 0; i < h_train.counts.size(); ++i) {
    const double ht = h_train.counts[i] * t_scale / bins;
    const double hv = h_val.counts[i] * v_scale / bins;
    num += std::abs(ht - hv);
    den += ht;
  }
  num /= n_images;
  den /= n_images;
  if (den == 0.0) throw DataError("dissimilarity: empty train histogram");
  return num / den;
}

namespace {

struct StageOutcome {
  std::vector<std::string> kept, removed;  // removed = the carved-out fraction
  double best = 0;
  std::vector<double> trace;
  int best_iteration = 0;
};

/// One round of Algorithm-1 style search: random splits at ROI granularity,
/// scored on per-image histograms, argmin kept (first iteration wins ties).
StageOutcome run_stage(const std::vector<std::string>& ids,
                       const std::map<std::string, std::vector<const std::vector<double>*>>& hists,
                       double fraction, const SplitConfig& cfg, uint64_t seed,
                       const char* stage_tag) {
  const int total = static_cast<int>(ids.size());
  const int n_removed = std::clamp(static_cast<int>(std::lround(fraction * total)), 1, total - 1);

  StageOutcome out;
  out.trace.reserve(static_cast<size_t>(cfg.iterations));
  std::vector<std::string> best_kept, best_removed;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    auto rng = make_rng(seed, stage_tag, static_cast<uint64_t>(iter));
    std::vector<std::string> shuffled = ids;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::string> removed(shuffled.begin(), shuffled.begin() + n_removed);
    std::vector<std::string> kept(shuffled.begin() + n_removed, shuffled.end());

    const auto collect = [&](const std::vector<std::string>& side) {
      std::vector<const std::vector<double>*> pool;
      for (const auto& id : side) {
        auto it = hists.find(id);
        if (it != hists.end())
          pool.insert(pool.end(), it->second.begin(), it->second.end());
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      return pool;
    };
    auto pool_kept = collect(kept);
    auto pool_removed = collect(removed);
    // both sides sample the same count, so count imbalance never inflates d
    const size_t n_shared = std::min<size_t>({static_cast<size_t>(cfg.n_images),
                                              pool_kept.size(), pool_removed.size()});
    pool_kept.resize(std::max<size_t>(1, n_shared));
    pool_removed.resize(std::max<size_t>(1, n_shared));

    const auto sum_hist = [&](const std::vector<const std::vector<double>*>& pool) {
      Histogram h;
      h.bins = cfg.bins;
      h.counts.assign(static_cast<size_t>(cfg.bins), 0.0);
      for (const auto* raw : pool)
        for (size_t i = 0; i < raw->size(); ++i) h.counts[i] += (*raw)[i];
      for (size_t i = 1; i < h.counts.size(); ++i) h.counts[i] += h.counts[i - 1];
      h.cumulative = true;
      return h;
    };
    const double d = dissimilarity(sum_hist(pool_kept), sum_hist(pool_removed),
                                   static_cast<int>(pool_kept.size()), cfg.normalized);
    out.trace.push_back(d);
    if (iter == 0 || d < out.best) {
      out.best = d;
      out.best_iteration = iter;
      best_kept = kept;
      best_removed = removed;
    }
  }
  out.kept = std::move(best_kept);
  out.removed = std::move(best_removed);
  return out;
}

}  // namespace

SplitResult split_dataset(const DatasetIndex& index, const SplitConfig& cfg, uint64_t seed) {
  const std::vector<std::string> ids = roi_ids(index);
  if (ids.size() < 2) throw DataError("split: need at least 2 ROIs");
  if (cfg.iterations < 1) throw DataError("split: iterations must be >= 1");

  // Raw (non-cumulative) per-image histograms, loaded once; pooled-sample
  // cumulative histograms are sums of these by additivity.
  std::vector<std::vector<double>> raw_store;
  raw_store.reserve(index.entries.size());
  std::map<std::string, std::vector<const std::vector<double>*>> hists;
  for (const auto& e : index.entries) {
    const data::OpticalImage img = io::read_optical(index.root / e.optical_path);
    std::vector<double> counts(static_cast<size_t>(cfg.bins), 0.0);
    for (int64_t i = 0; i < img.values.numel(); ++i) {
      int b = static_cast<int>(img.values[i] * cfg.bins);
      counts[static_cast<size_t>(std::clamp(b, 0, cfg.bins - 1))] += 1.0;
    }
    raw_store.push_back(std::move(counts));
  }
  for (size_t i = 0; i < index.entries.size(); ++i)
    hists[index.entries[i].roi_id].push_back(&raw_store[i]);

  const StageOutcome val_stage =
      run_stage(ids, hists, cfg.val_fraction, cfg, seed, "split.val");
  StageOutcome test_stage;
  if (val_stage.kept.size() >= 2 && cfg.test_fraction > 0) {
    test_stage = run_stage(val_stage.kept, hists, cfg.test_fraction, cfg, seed, "split.test");
  } else {
    test_stage.kept = val_stage.kept;
  }

  SplitResult res;
  res.train_ids = test_stage.kept;
  res.val_ids = val_stage.removed;
  res.test_ids = test_stage.removed;
  std::sort(res.train_ids.begin(), res.train_ids.end());
  std::sort(res.val_ids.begin(), res.val_ids.end());
  std::sort(res.test_ids.begin(), res.test_ids.end());
  res.dissimilarity_value = val_stage.best;
  res.trace = val_stage.trace;
  res.best_iteration = val_stage.best_iteration;
  res.test_dissimilarity = test_stage.best;
  res.test_trace = test_stage.trace;
  res.test_best_iteration = test_stage.best_iteration;
  return res;
}

void write_series(const fs::path& root, const ROISeries& series) {
  for (size_t t = 0; t < series.optical.size(); ++t) {
    const fs::path dir = root / series.roi_id / ("t" + std::to_string(t));
    fs::create_directories(dir);
    io::Meta meta;
    meta.sensor = "synthetic";
    meta.timestamp = std::to_string(t);

    double cov = 0;
    const Tensor& mask = series.cloud_masks[t];
    for (int64_t i = 0; i < mask.numel(); ++i) cov += mask[i];
    cov /= static_cast<double>(mask.numel());

    io::Meta m2 = meta;
    m2.sensor = "S2";
    m2.extra["coverage"] = std::to_string(cov);
    io::write_optical(dir / "s2.f32", series.cloudy[t], m2);
    io::Meta mg = meta;
    mg.sensor = "S2";
    io::write_optical(dir / "gt.f32", series.optical[t], mg);
    io::Meta m1 = meta;
    m1.sensor = "S1";
    io::write_sar(dir / "s1.f32", series.sar[t], m1);
    io::Meta mm = meta;
    io::write_tensor(dir / "mask.f32", mask.reshaped({mask.dim(0), mask.dim(1), 1}), mm);
  }
}

DatasetIndex build_index(const fs::path& root) {
  DatasetIndex index;
  index.root = root;
  if (!fs::exists(root)) return index;
  std::vector<std::string> rois;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) rois.push_back(entry.path().filename().string());
  std::sort(rois.begin(), rois.end());
  for (const auto& roi : rois) {
    std::vector<std::string> steps;
    for (const auto& entry : fs::directory_iterator(root / roi))
      if (entry.is_directory() && entry.path().filename().string().starts_with("t"))
        steps.push_back(entry.path().filename().string());
    std::sort(steps.begin(), steps.end());
    for (const auto& step : steps) {
      const fs::path dir = root / roi / step;
      if (!fs::exists(dir / "s2.f32")) continue;
      io::Meta meta;
      io::read_tensor(dir / "s2.f32", &meta);  // validates sidecar; throws naming the path
      IndexEntry e;
      e.roi_id = roi;
      e.time_index = std::stoi(step.substr(1));
      e.optical_path = (fs::path(roi) / step / "s2.f32").string();
      e.sar_path = fs::exists(dir / "s1.f32") ? (fs::path(roi) / step / "s1.f32").string() : "";
      if (auto it = meta.extra.find("coverage"); it != meta.extra.end())
        e.coverage = std::stod(it->second);
      index.entries.push_back(std::move(e));
    }
  }
  return index;
}

void write_index(const DatasetIndex& index, const fs::path& root) {
  fs::create_directories(root);
  std::ofstream f(root / "index.tsv");
  if (!f) throw DataError("index: cannot write " + (root / "index.tsv").string());
  f << "roi_id\ttime_index\toptical_path\tsar_path\tcoverage\n";
  for (const auto& e : index.entries)
    f << e.roi_id << "\t" << e.time_index << "\t" << e.optical_path << "\t" << e.sar_path << "\t"
      << e.coverage << "\n";
}

DatasetIndex load_index(const fs::path& root) {
  const fs::path manifest = root / "index.tsv";
  DatasetIndex index;
  index.root = root;
  if (!fs::exists(manifest)) {
    index = build_index(root);
  } else {
    std::ifstream f(manifest);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      IndexEntry e;
      std::string cov;
      if (!std::getline(is, e.roi_id, '\t')) throw DataError("index: malformed row in " + manifest.string());
      std::string t;
      std::getline(is, t, '\t');
      e.time_index = std::stoi(t);
      std::getline(is, e.optical_path, '\t');
      std::getline(is, e.sar_path, '\t');
      std::getline(is, cov, '\t');
      if (!cov.empty()) e.coverage = std::stod(cov);
      if (!fs::exists(root / e.optical_path))
        throw DataError("index: missing file " + (root / e.optical_path).string());
      index.entries.push_back(std::move(e));
    }
  }
  if (fs::exists(root / "split.tsv")) index.split_labels = read_split(root / "split.tsv");
  return index;
}

void write_split(const fs::path& path, const SplitResult& split) {
  std::ofstream f(path);
  if (!f) throw DataError("split: cannot write " + path.string());
  f << "roi_id\tset\n";
  for (const auto& id : split.train_ids) f << id << "\ttrain\n";
  for (const auto& id : split.val_ids) f << id << "\tval\n";
  for (const auto& id : split.test_ids) f << id << "\ttest\n";
}

std::map<std::string, std::string> read_split(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("split: cannot read " + path.string());
  std::map<std::string, std::string> labels;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("split: malformed row in " + path.string());
    labels[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return labels;
}

std::vector<std::string> roi_ids(const DatasetIndex& index) {
  std::set<std::string> ids;
  for (const auto& e : index.entries) ids.insert(e.roi_id);
  return {ids.begin(), ids.end()};
}

ROISample load_roi(const DatasetIndex& index, const std::string& roi_id) {
  std::vector<const IndexEntry*> entries;
  for (const auto& e : index.entries)
    if (e.roi_id == roi_id) entries.push_back(&e);
  if (entries.empty()) throw DataError("roi: no entries for " + roi_id);
  std::sort(entries.begin(), entries.end(),
            [](const IndexEntry* a, const IndexEntry* b) { return a->time_index < b->time_index; });

  ROISample sample;
  sample.roi_id = roi_id;
  for (size_t t = 0; t < entries.size(); ++t) {
    const fs::path opt_path = index.root / entries[t]->optical_path;
    const fs::path dir = opt_path.parent_path();
    const data::OpticalImage observed = io::read_optical(opt_path);
    const data::OpticalImage clean =
        fs::exists(dir / "gt.f32") ? io::read_optical(dir / "gt.f32") : observed;
    data::SARImage sar;
    if (!entries[t]->sar_path.empty()) sar = io::read_sar(index.root / entries[t]->sar_path);

    if (t + 1 < entries.size()) {
      sample.input_seq.frames.push_back(observed);
      sample.input_seq.timestamps.push_back(static_cast<double>(entries[t]->time_index));
    } else {
      sample.target = clean;
      sample.cloudy = observed;
      sample.sar = sar;
      sample.coverage = entries[t]->coverage;
      if (fs::exists(dir / "mask.f32")) {
        const Tensor m = io::read_tensor(dir / "mask.f32");
        sample.mask = m.reshaped({m.dim(0), m.dim(1)});
      }
    }
    sample.sar_optical_pairs.emplace_back(std::move(sar), clean);
  }
  return sample;
}

}  // namespace plfm::dataset
