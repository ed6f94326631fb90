#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "plfm/image.hpp"
#include "plfm/tensor.hpp"

namespace plfm::dataset {

/// Parameters of one synthetic region-of-interest time series.
struct SceneCfg {
  int size = 64;
  int steps = 4;                   // monthly acquisitions per series
  double coverage = 0.65;          // cloud coverage target for clouded frames
  double thickness = 0.8;          // cloud opacity; thin <= 0.4, thick >= 0.7
  double drift = 0.15;             // month-to-month structure change
  double brightness_drift = 0.02;  // month-to-month brightness change
  bool cloud_all = false;          // default: only the last frame is clouded
  int looks = 1;                   // speckle averaging count
};

/// One region of interest: co-registered monthly SAR/optical frames. The
/// clean optical frames are the ground truth; `cloudy` holds the observed
/// frames (equal to clean where no clouds were applied).
struct ROISeries {
  std::string roi_id;
  std::vector<data::OpticalImage> optical;  // clean ground truth
  std::vector<data::OpticalImage> cloudy;   // observed
  std::vector<data::SARImage> sar;
  std::vector<Tensor> cloud_masks;          // (H, W), values 0/1
  std::vector<double> timestamps;
  uint64_t seed = 0;
  SceneCfg cfg;
};

ROISeries synth_scene(uint64_t seed, const SceneCfg& cfg);

/// Alpha-blends a band-limited cloud field over the image.
/// cloudy = (1-a)*img + a*cloud with a = thickness * soft mask; the binary
/// mask is (a > 0.5*thickness). Measured mask coverage tracks the request
/// within +-0.05 for images >= 64x64.
std::pair<data::OpticalImage, Tensor> apply_clouds(const data::OpticalImage& img, double coverage,
                                                   double thickness, uint64_t seed);

/// I.i.d. Gamma(shape=looks, scale=1/looks) field: mean 1, variance 1/looks.
Tensor speckle_field(int h, int w, int looks, uint64_t seed);

/// Multiplicative speckle in the amplitude domain: out = gray * speckle.
data::SARImage simulate_sar(const Tensor& optical_gray, int looks, uint64_t seed);

Tensor to_grayscale(const data::OpticalImage& img);  // channel mean, (H, W)

struct Histogram {
  std::vector<double> counts;
  int bins = 0;
  bool cumulative = false;
};

/// Pools every pixel of every image into `bins` equal-width bins over the
/// unit range, then takes the running sum.
Histogram cumulative_histogram(const std::vector<Tensor>& images, int bins);

/// Relative cumulative-histogram distance used by the split search:
///   d = [(1/N) sum_i |h_t[i]/bins - h_v[i]/bins|] / [(1/N) sum_i h_t[i]/bins]
/// Asymmetric by construction (the denominator uses the train histogram).
/// `normalized` rescales both histograms to unit mass first; never the default.
double dissimilarity(const Histogram& h_train, const Histogram& h_val, int n_images,
                     bool normalized = false);

struct IndexEntry {
  std::string roi_id;
  int time_index = 0;
  std::string optical_path;  // relative to the dataset root
  std::string sar_path;
  double coverage = 0.0;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<IndexEntry> entries;
  std::map<std::string, std::string> split_labels;  // roi_id -> train|val|test
};

struct SplitConfig {
  int iterations = 2000;
  int n_images = 150;   // sampled per side, capped at availability
  int bins = 20;
  double val_fraction = 0.2;
  double test_fraction = 0.1;  // of the post-validation remainder
  bool normalized = false;
};

struct SplitResult {
  std::vector<std::string> train_ids, val_ids, test_ids;
  double dissimilarity_value = 0.0;  // min of trace (validation stage)
  std::vector<double> trace;         // d_j per validation-stage iteration
  int best_iteration = 0;
  double test_dissimilarity = 0.0;
  std::vector<double> test_trace;
  int test_best_iteration = 0;
};

/// Random-split search at ROI granularity: `iterations` candidate 80/20
/// splits scored by `dissimilarity`, argmin kept (first iteration wins ties),
/// then the same procedure carves the test set out of the training remainder.
SplitResult split_dataset(const DatasetIndex& index, const SplitConfig& cfg, uint64_t seed);

// Dataset tree layout: <root>/<roi_id>/t<k>/{s2,gt,s1,mask}.f32 (+ sidecars),
// with an index.tsv manifest and split.tsv labels at the root.
void write_series(const std::filesystem::path& root, const ROISeries& series);
DatasetIndex build_index(const std::filesystem::path& root);  // scans the tree
DatasetIndex load_index(const std::filesystem::path& root);   // index.tsv if present, else scan
void write_index(const DatasetIndex& index, const std::filesystem::path& root);
void write_split(const std::filesystem::path& path, const SplitResult& split);
std::map<std::string, std::string> read_split(const std::filesystem::path& path);

/// Everything the trainers need from one ROI.
struct ROISample {
  std::string roi_id;
  data::TemporalSequence input_seq;  // observed frames t0..t(n-2)
  data::OpticalImage target;         // clean frame t(n-1)
  data::OpticalImage cloudy;         // observed frame t(n-1)
  data::SARImage sar;                // SAR frame t(n-1)
  Tensor mask;                       // cloud mask of t(n-1), (H, W)
  double coverage = 0.0;
  // (SAR, clean optical) pairs across all time steps for the translation branch
  std::vector<std::pair<data::SARImage, data::OpticalImage>> sar_optical_pairs;
};

ROISample load_roi(const DatasetIndex& index, const std::string& roi_id);
std::vector<std::string> roi_ids(const DatasetIndex& index);

}  // namespace plfm::dataset
