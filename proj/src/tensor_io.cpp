#include "plfm/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "plfm/errors.hpp"
#include "plfm/png.hpp"

namespace plfm::io {

namespace fs = std::filesystem;

std::filesystem::path sidecar_path(const fs::path& tensor_path) {
  fs::path p = tensor_path;
  p.replace_extension(".meta");
  return p;
}

namespace {

void write_meta(const fs::path& path, const Meta& meta) {
  std::ofstream f(path);
  if (!f) throw DataError("io: cannot write " + path.string());
  f << "shape:";
  for (int d : meta.shape) f << " " << d;
  f << "\n";
  f << "dtype: f32\n";
  f << "range: " << meta.range << "\n";
  f << "sensor: " << meta.sensor << "\n";
  if (!meta.timestamp.empty()) f << "timestamp: " << meta.timestamp << "\n";
  for (const auto& [k, v] : meta.extra) f << k << ": " << v << "\n";
}

Meta read_meta(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("io: missing sidecar " + path.string());
  Meta meta;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw DataError("io: malformed sidecar line in " + path.string());
    std::string key = line.substr(0, colon);
    std::string val = line.substr(colon + 1);
    const auto strip = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    strip(key);
    strip(val);
    if (key == "shape") {
      std::istringstream is(val);
      int d;
      while (is >> d) meta.shape.push_back(d);
    } else if (key == "range") {
      meta.range = val;
    } else if (key == "sensor") {
      meta.sensor = val;
    } else if (key == "timestamp") {
      meta.timestamp = val;
    } else if (key == "dtype") {
      if (val != "f32") throw DataError("io: unsupported dtype '" + val + "' in " + path.string());
    } else {
      meta.extra[key] = val;
    }
  }
  if (meta.shape.empty()) throw DataError("io: sidecar missing shape in " + path.string());
  return meta;
}

}  // namespace

void write_tensor(const fs::path& path, const Tensor& hwc, const Meta& meta_in) {
  Meta meta = meta_in;
  meta.shape = hwc.shape();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("io: cannot write " + path.string());
  std::vector<float> buf(static_cast<size_t>(hwc.numel()));
  for (int64_t i = 0; i < hwc.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(hwc[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  write_meta(sidecar_path(path), meta);
}

Tensor read_tensor(const fs::path& path, Meta* meta_out) {
  const Meta meta = read_meta(sidecar_path(path));
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("io: missing tensor file " + path.string());
  const int64_t n = Tensor::count(meta.shape);
  std::vector<float> buf(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    throw DataError("io: truncated tensor file " + path.string());
  Tensor t(meta.shape);
  for (int64_t i = 0; i < n; ++i) t[i] = buf[static_cast<size_t>(i)];
  if (meta_out) *meta_out = meta;
  return t;
}

void write_optical(const fs::path& path, const data::OpticalImage& img, Meta meta) {
  meta.range = data::range_name(img.range);
  write_tensor(path, img.values, meta);
}

data::OpticalImage read_optical(const fs::path& path, Meta* meta_out) {
  Meta meta;
  Tensor t = read_tensor(path, &meta);
  if (t.rank() != 3) throw DataError("io: optical tensor must be rank 3: " + path.string());
  data::OpticalImage img;
  img.values = std::move(t);
  img.range = data::parse_range(meta.range);
  if (meta_out) *meta_out = meta;
  return img;
}

void write_sar(const fs::path& path, const data::SARImage& img, Meta meta) {
  meta.range = data::range_name(img.range);
  if (!meta.extra.count("looks")) meta.extra["looks"] = std::to_string(img.looks);
  write_tensor(path, img.values, meta);
}

data::SARImage read_sar(const fs::path& path, Meta* meta_out) {
  Meta meta;
  Tensor t = read_tensor(path, &meta);
  if (t.rank() != 3 || t.dim(2) != 1)
    throw DataError("io: sar tensor must be rank 3 with one band: " + path.string());
  data::SARImage img;
  img.values = std::move(t);
  img.range = data::parse_range(meta.range);
  if (auto it = meta.extra.find("looks"); it != meta.extra.end()) img.looks = std::stoi(it->second);
  if (meta_out) *meta_out = meta;
  return img;
}

void export_rgb8(const fs::path& path, const data::OpticalImage& img) {
  const auto b = data::bounds(img.range);
  const int h = img.height(), w = img.width();
  if (img.bands() != 3) throw DataError("export: RGB export needs 3 bands");
  std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = (img.values.at(y, x, c) - b.lo) / (b.hi - b.lo);
        v = std::clamp(v, 0.0, 1.0);
        rgb[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
  write_png_rgb8(path, rgb, w, h);
}

std::string file_hash(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("io: cannot hash missing file " + path.string());
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!f) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

}  // namespace plfm::io
