#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "plfm/image.hpp"
#include "plfm/tensor.hpp"

namespace plfm::io {

/// Sidecar metadata for one tensor file. Serialized as UTF-8 "key: value"
/// lines next to the payload (`foo.f32` -> `foo.meta`).
struct Meta {
  std::vector<int> shape;                    // (H, W, C)
  std::string range = "unit";
  std::string sensor = "synthetic";          // S1 | S2 | synthetic
  std::string timestamp;                     // acquisition label (month index)
  std::map<std::string, std::string> extra;  // free-form provenance keys
};

std::filesystem::path sidecar_path(const std::filesystem::path& tensor_path);

/// Raw little-endian float32, row-major (H, W, C).
void write_tensor(const std::filesystem::path& path, const Tensor& hwc, const Meta& meta);
Tensor read_tensor(const std::filesystem::path& path, Meta* meta = nullptr);

void write_optical(const std::filesystem::path& path, const data::OpticalImage& img, Meta meta);
data::OpticalImage read_optical(const std::filesystem::path& path, Meta* meta = nullptr);
void write_sar(const std::filesystem::path& path, const data::SARImage& img, Meta meta);
data::SARImage read_sar(const std::filesystem::path& path, Meta* meta = nullptr);

/// 8-bit RGB visualization export; values are clamped to the declared range
/// and quantized here only.
void export_rgb8(const std::filesystem::path& path, const data::OpticalImage& img);

/// FNV-1a over a file's bytes, hex-encoded; used for checkpoint provenance.
std::string file_hash(const std::filesystem::path& path);

}  // namespace plfm::io
