#include "plfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "plfm/errors.hpp"

namespace plfm::metrics {

namespace {

void check_pair(const OpticalImage& ref, const OpticalImage& pred) {
  if (!same_shape(ref.values, pred.values))
    throw DataError("metrics: shape mismatch " + Tensor::shape_str(ref.values.shape()) + " vs " +
                    Tensor::shape_str(pred.values.shape()));
  if (ref.range != pred.range) throw DataError("metrics: range tag mismatch");
  if (ref.values.rank() != 3) throw DataError("metrics: images must be (H,W,B)");
}

struct BandStats {
  double mean_a = 0, mean_b = 0;
  double var_a = 0, var_b = 0;   // sample variance, 1/(N-1)
  double cov = 0;                // sample covariance, 1/(N-1)
  bool const_a = true, const_b = true;
};

BandStats band_stats(const OpticalImage& a, const OpticalImage& b, int band) {
  const int h = a.height(), w = a.width();
  const int64_t n = static_cast<int64_t>(h) * w;
  BandStats s;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      s.mean_a += a.values.at(y, x, band);
      s.mean_b += b.values.at(y, x, band);
      s.const_a = s.const_a && a.values.at(y, x, band) == a.values.at(0, 0, band);
      s.const_b = s.const_b && b.values.at(y, x, band) == b.values.at(0, 0, band);
    }
  s.mean_a /= static_cast<double>(n);
  s.mean_b /= static_cast<double>(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double da = a.values.at(y, x, band) - s.mean_a;
      const double db = b.values.at(y, x, band) - s.mean_b;
      s.var_a += da * da;
      s.var_b += db * db;
      s.cov += da * db;
    }
  const double denom = static_cast<double>(n > 1 ? n - 1 : 1);
  s.var_a /= denom;
  s.var_b /= denom;
  s.cov /= denom;
  return s;
}

/// sign(x) * sqrt(min(1, x^2/d)): evaluates to exactly 1 when x^2 and d round
/// identically (the identical-input case), and is clamped into [-1,1].
double normalized_ratio(double x, double d) {
  const double r = (x * x) / d;
  const double m = std::sqrt(std::min(r, 1.0));
  return x >= 0 ? m : -m;
}

}  // namespace

double psnr(const OpticalImage& ref, const OpticalImage& pred) {
  check_pair(ref, pred);
  const int h = ref.height(), w = ref.width(), bands = ref.bands();
  const double n = static_cast<double>(h) * w;
  double acc = 0;
  for (int k = 0; k < bands; ++k) {
    double peak = -1e300, err = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        peak = std::max(peak, ref.values.at(y, x, k));
        const double d = ref.values.at(y, x, k) - pred.values.at(y, x, k);
        err += d * d;
      }
    if (peak == 0.0) throw DataError("psnr: reference band " + std::to_string(k) + " has zero peak");
    const double band_mse = err / n;
    double v = band_mse == 0.0 ? kPsnrCap : 10.0 * std::log10(peak * peak / band_mse);
    acc += std::min(v, kPsnrCap);
  }
  return acc / bands;
}

double ssim(const OpticalImage& ref, const OpticalImage& pred) {
  check_pair(ref, pred);
  const auto rb = data::bounds(ref.range);
  const double L = rb.hi - rb.lo;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const BandStats s = band_stats(ref, pred, k);
    const double num = (2.0 * (s.mean_a * s.mean_b) + c1) * (2.0 * s.cov + c2);
    const double den =
        (s.mean_a * s.mean_a + s.mean_b * s.mean_b + c1) * (s.var_a + s.var_b + c2);
    acc += num / den;
  }
  return acc / ref.bands();
}

double sam(const OpticalImage& ref, const OpticalImage& pred, bool degrees, int* skipped_out) {
  check_pair(ref, pred);
  const int h = ref.height(), w = ref.width(), bands = ref.bands();
  double acc = 0;
  int64_t used = 0;
  int skipped = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < bands; ++k) {
        const double a = ref.values.at(y, x, k);
        const double b = pred.values.at(y, x, k);
        dot += a * b;
        na += a * a;
        nb += b * b;
      }
      if (na == 0.0 || nb == 0.0) {
        ++skipped;
        continue;
      }
      acc += std::acos(normalized_ratio(dot, na * nb));
      ++used;
    }
  if (skipped_out) *skipped_out = skipped;
  if (used == 0) throw DataError("sam: all spectral vectors degenerate");
  double mean = acc / static_cast<double>(used);
  if (degrees) mean *= 180.0 / M_PI;
  return mean;
}

double mse(const OpticalImage& ref, const OpticalImage& pred) {
  check_pair(ref, pred);
  double acc = 0;
  for (int64_t i = 0; i < ref.values.numel(); ++i) {
    const double d = ref.values[i] - pred.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(ref.values.numel());
}

double rmse(const OpticalImage& ref, const OpticalImage& pred) { return std::sqrt(mse(ref, pred)); }

double cc(const OpticalImage& ref, const OpticalImage& pred, int* skipped_out) {
  check_pair(ref, pred);
  double acc = 0;
  int used = 0, skipped = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const BandStats s = band_stats(ref, pred, k);
    if (s.const_a || s.const_b || s.var_a == 0.0 || s.var_b == 0.0) {
      ++skipped;
      continue;
    }
    acc += normalized_ratio(s.cov, s.var_a * s.var_b);
    ++used;
  }
  if (skipped_out) *skipped_out = skipped;
  if (used == 0) throw DataError("cc: all bands constant");
  return acc / used;
}

double dd(const OpticalImage& ref, const OpticalImage& pred) {
  check_pair(ref, pred);
  double acc = 0;
  for (int64_t i = 0; i < ref.values.numel(); ++i) acc += std::abs(ref.values[i] - pred.values[i]);
  return acc / static_cast<double>(ref.values.numel());
}

double uqi(const OpticalImage& ref, const OpticalImage& pred) {
  check_pair(ref, pred);
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const BandStats s = band_stats(ref, pred, k);
    const double den = (s.var_a + s.var_b) * (s.mean_a * s.mean_a + s.mean_b * s.mean_b);
    if (den == 0.0) throw DataError("uqi: degenerate band " + std::to_string(k));
    acc += 4.0 * (s.cov * (s.mean_a * s.mean_b)) / den;
  }
  return acc / ref.bands();
}

CscMode csc_mode_for(MetricId id) {
  switch (id) {
    case MetricId::Psnr:
    case MetricId::Ssim:
    case MetricId::Cc:
    case MetricId::Uqi:
      return CscMode::Max;
    default:
      return CscMode::Min;
  }
}

std::string metric_name(MetricId id) {
  switch (id) {
    case MetricId::Psnr: return "psnr";
    case MetricId::Ssim: return "ssim";
    case MetricId::Sam: return "sam";
    case MetricId::Mse: return "mse";
    case MetricId::Rmse: return "rmse";
    case MetricId::Cc: return "cc";
    case MetricId::Dd: return "dd";
    case MetricId::Uqi: return "uqi";
  }
  return "?";
}

double run_metric(MetricId id, const OpticalImage& ref, const OpticalImage& pred, bool degrees) {
  switch (id) {
    case MetricId::Psnr: return psnr(ref, pred);
    case MetricId::Ssim: return ssim(ref, pred);
    case MetricId::Sam: return sam(ref, pred, degrees);
    case MetricId::Mse: return mse(ref, pred);
    case MetricId::Rmse: return rmse(ref, pred);
    case MetricId::Cc: return cc(ref, pred);
    case MetricId::Dd: return dd(ref, pred);
    case MetricId::Uqi: return uqi(ref, pred);
  }
  throw DataError("metrics: invalid metric id");
}

namespace {

/// Crop ref/pred to the overlap where ref pixel (i,j) pairs with pred pixel
/// (i-e1, j-e2).
void overlap_crop(const OpticalImage& ref, const OpticalImage& pred, int e1, int e2,
                  OpticalImage& ref_out, OpticalImage& pred_out) {
  const int h = ref.height(), w = ref.width(), bands = ref.bands();
  const int hc = h - std::abs(e1), wc = w - std::abs(e2);
  const int ri = std::max(0, e1), rj = std::max(0, e2);
  const int pi = std::max(0, -e1), pj = std::max(0, -e2);
  ref_out = OpticalImage(hc, wc, bands, ref.range);
  pred_out = OpticalImage(hc, wc, bands, pred.range);
  for (int y = 0; y < hc; ++y)
    for (int x = 0; x < wc; ++x)
      for (int k = 0; k < bands; ++k) {
        ref_out.values.at(y, x, k) = ref.values.at(y + ri, x + rj, k);
        pred_out.values.at(y, x, k) = pred.values.at(y + pi, x + pj, k);
      }
}

}  // namespace

CscResult with_csc(MetricId id, const OpticalImage& ref, const OpticalImage& pred, int radius,
                   CscMode mode, bool degrees) {
  check_pair(ref, pred);
  if (radius < 0) throw DataError("csc: radius must be >= 0");
  const int h = ref.height(), w = ref.width();
  if (radius > 0) {
    const double overlap = static_cast<double>(h - radius) * (w - radius);
    if (h <= radius || w <= radius || overlap < 0.5 * h * w)
      throw DataError("csc: radius " + std::to_string(radius) + " leaves <50% overlap at " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  if (radius == 0) return {run_metric(id, ref, pred, degrees), 0, 0};

  bool have = false;
  CscResult best{0, 0, 0};
  OpticalImage rc, pc;
  for (int e1 = -radius; e1 <= radius; ++e1)
    for (int e2 = -radius; e2 <= radius; ++e2) {
      overlap_crop(ref, pred, e1, e2, rc, pc);
      const double v = run_metric(id, rc, pc, degrees);
      const bool better = !have || (mode == CscMode::Max ? v > best.value : v < best.value);
      if (better) {
        best = {v, e1, e2};
        have = true;
      }
    }
  return best;
}

CscResult with_csc(MetricId id, const OpticalImage& ref, const OpticalImage& pred, int radius,
                   bool degrees) {
  return with_csc(id, ref, pred, radius, csc_mode_for(id), degrees);
}

MetricsReport evaluate(const OpticalImage& pred, const OpticalImage& gt, const EvalConfig& cfg) {
  MetricsReport rep;
  if (cfg.csc && cfg.radius > 0) {
    rep.csc_applied = true;
    const CscResult p = with_csc(MetricId::Psnr, gt, pred, cfg.radius);
    rep.psnr = p.value;
    rep.e1 = p.e1;
    rep.e2 = p.e2;
    rep.ssim = with_csc(MetricId::Ssim, gt, pred, cfg.radius).value;
    rep.sam = with_csc(MetricId::Sam, gt, pred, cfg.radius, cfg.degrees).value;
    rep.mse = with_csc(MetricId::Mse, gt, pred, cfg.radius).value;
    rep.rmse = with_csc(MetricId::Rmse, gt, pred, cfg.radius).value;
    rep.cc = with_csc(MetricId::Cc, gt, pred, cfg.radius).value;
    rep.dd = with_csc(MetricId::Dd, gt, pred, cfg.radius).value;
    rep.uqi = with_csc(MetricId::Uqi, gt, pred, cfg.radius).value;
  } else {
    rep.psnr = psnr(gt, pred);
    rep.ssim = ssim(gt, pred);
    rep.sam = sam(gt, pred, cfg.degrees, &rep.sam_skipped);
    rep.mse = mse(gt, pred);
    rep.rmse = rmse(gt, pred);
    rep.cc = cc(gt, pred, &rep.cc_skipped);
    rep.dd = dd(gt, pred);
    rep.uqi = uqi(gt, pred);
  }
  return rep;
}

std::string report_tsv_header() {
  return "image_id\tpsnr\tssim\tsam\tmse\trmse\tcc\tdd\tuqi\tcsc\te1\te2";
}

std::string report_tsv_row(const std::string& image_id, const MetricsReport& rep) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%d\t%d\t%d", image_id.c_str(),
                rep.psnr, rep.ssim, rep.sam, rep.mse, rep.rmse, rep.cc, rep.dd, rep.uqi,
                rep.csc_applied ? 1 : 0, rep.e1, rep.e2);
  return std::string(buf);
}

}  // namespace plfm::metrics
