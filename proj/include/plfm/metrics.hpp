#pragma once

#include <string>

#include "plfm/image.hpp"

namespace plfm::metrics {

using data::OpticalImage;

/// One row of quality measures for a (prediction, ground truth) pair.
struct MetricsReport {
  double psnr = 0, ssim = 0, sam = 0, mse = 0, rmse = 0, cc = 0, dd = 0, uqi = 0;
  bool csc_applied = false;
  int e1 = 0, e2 = 0;       // shift chosen by the PSNR search when CSC is on
  int sam_skipped = 0;      // zero-norm spectral vectors skipped
  int cc_skipped = 0;       // constant bands skipped
};

inline constexpr double kPsnrCap = 100.0;  // reported on zero residual

// All metrics take (reference, prediction) in that order.
double psnr(const OpticalImage& ref, const OpticalImage& pred);
double ssim(const OpticalImage& ref, const OpticalImage& pred);
double sam(const OpticalImage& ref, const OpticalImage& pred, bool degrees = false,
           int* skipped = nullptr);
double mse(const OpticalImage& ref, const OpticalImage& pred);
double rmse(const OpticalImage& ref, const OpticalImage& pred);
double cc(const OpticalImage& ref, const OpticalImage& pred, int* skipped = nullptr);
double dd(const OpticalImage& ref, const OpticalImage& pred);
double uqi(const OpticalImage& ref, const OpticalImage& pred);

enum class MetricId { Psnr, Ssim, Sam, Mse, Rmse, Cc, Dd, Uqi };
enum class CscMode { Min, Max };

/// Improving direction of each metric (max for PSNR/SSIM/CC/UQI).
CscMode csc_mode_for(MetricId id);
std::string metric_name(MetricId id);
double run_metric(MetricId id, const OpticalImage& ref, const OpticalImage& pred, bool degrees = false);

struct CscResult {
  double value;
  int e1;
  int e2;
};

/// Co-registration shift compensation: evaluates the metric over all integer
/// shifts (e1,e2) in [-E,E]^2, pairing ref pixel (i,j) with pred pixel
/// (i-e1, j-e2) on the cropped valid overlap, and keeps the best value in the
/// metric's improving direction. Ties break toward the lexicographically
/// lowest (e1,e2). E = 0 reproduces the plain metric bit-exactly.
CscResult with_csc(MetricId id, const OpticalImage& ref, const OpticalImage& pred, int radius,
                   CscMode mode, bool degrees = false);
CscResult with_csc(MetricId id, const OpticalImage& ref, const OpticalImage& pred, int radius,
                   bool degrees = false);

struct EvalConfig {
  bool csc = false;
  int radius = 2;
  bool degrees = false;
};

/// All eight metrics for one pair, each CSC-wrapped independently when enabled.
MetricsReport evaluate(const OpticalImage& pred, const OpticalImage& gt, const EvalConfig& cfg);

std::string report_tsv_header();
std::string report_tsv_row(const std::string& image_id, const MetricsReport& rep);

}  // namespace plfm::metrics
