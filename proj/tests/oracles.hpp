#pragma once

// Naive scalar-loop reference implementations of the quality measures,
// written independently of the library path: per-band value vectors first,
// then the formulas transcribed directly. Test/acceptance use only.

#include <cmath>
#include <vector>

#include "plfm/image.hpp"

namespace oracle {

using plfm::data::OpticalImage;

inline std::vector<double> band(const OpticalImage& img, int k) {
  std::vector<double> v;
  v.reserve(static_cast<size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) v.push_back(img.values.at(y, x, k));
  return v;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double psnr(const OpticalImage& ref, const OpticalImage& pred) {
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const auto a = band(ref, k), b = band(pred, k);
    double peak = a[0], err = 0;
    for (double x : a) peak = std::max(peak, x);
    for (size_t i = 0; i < a.size(); ++i) err += (a[i] - b[i]) * (a[i] - b[i]);
    const double m = err / static_cast<double>(a.size());
    const double v = m == 0.0 ? 100.0 : 10.0 * std::log10(peak * peak / m);
    acc += std::min(v, 100.0);
  }
  return acc / ref.bands();
}

inline double ssim(const OpticalImage& ref, const OpticalImage& pred) {
  const auto bounds = plfm::data::bounds(ref.range);
  const double L = bounds.hi - bounds.lo;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const auto a = band(ref, k), b = band(pred, k);
    const double ma = mean_of(a), mb = mean_of(b);
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
      cov += (a[i] - ma) * (b[i] - mb);
    }
    const double n1 = static_cast<double>(a.size() - 1);
    va /= n1;
    vb /= n1;
    cov /= n1;
    acc += ((2.0 * (ma * mb) + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / ref.bands();
}

inline double sam(const OpticalImage& ref, const OpticalImage& pred) {
  double acc = 0;
  int64_t used = 0;
  for (int y = 0; y < ref.height(); ++y)
    for (int x = 0; x < ref.width(); ++x) {
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < ref.bands(); ++k) {
        dot += ref.values.at(y, x, k) * pred.values.at(y, x, k);
        na += ref.values.at(y, x, k) * ref.values.at(y, x, k);
        nb += pred.values.at(y, x, k) * pred.values.at(y, x, k);
      }
      if (na == 0.0 || nb == 0.0) continue;
      double c = dot / (std::sqrt(na) * std::sqrt(nb));
      c = std::clamp(c, -1.0, 1.0);
      acc += std::acos(c);
      ++used;
    }
  return acc / static_cast<double>(used);
}

inline double mse(const OpticalImage& ref, const OpticalImage& pred) {
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const auto a = band(ref, k), b = band(pred, k);
    for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return acc / static_cast<double>(ref.values.numel());
}

inline double rmse(const OpticalImage& ref, const OpticalImage& pred) {
  return std::sqrt(mse(ref, pred));
}

inline double cc(const OpticalImage& ref, const OpticalImage& pred) {
  double acc = 0;
  int used = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const auto a = band(ref, k), b = band(pred, k);
    const double ma = mean_of(a), mb = mean_of(b);
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
      cov += (a[i] - ma) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) continue;
    acc += cov / std::sqrt(va * vb);
    ++used;
  }
  return acc / used;
}

inline double dd(const OpticalImage& ref, const OpticalImage& pred) {
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const auto a = band(ref, k), b = band(pred, k);
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  }
  return acc / static_cast<double>(ref.values.numel());
}

inline double uqi(const OpticalImage& ref, const OpticalImage& pred) {
  double acc = 0;
  for (int k = 0; k < ref.bands(); ++k) {
    const auto a = band(ref, k), b = band(pred, k);
    const double ma = mean_of(a), mb = mean_of(b);
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
      cov += (a[i] - ma) * (b[i] - mb);
    }
    const double n1 = static_cast<double>(a.size() - 1);
    va /= n1;
    vb /= n1;
    cov /= n1;
    acc += 4.0 * (cov * (ma * mb)) / ((va + vb) * (ma * ma + mb * mb));
  }
  return acc / ref.bands();
}

}  // namespace oracle
