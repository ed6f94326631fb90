#pragma once

#include <random>
#include <vector>

#include "plfm/image.hpp"
#include "plfm/tensor.hpp"

namespace testutil {

inline plfm::data::OpticalImage random_optical(int h, int w, std::mt19937_64& rng, double lo = 0.0,
                                               double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  plfm::data::OpticalImage img(h, w);
  for (int64_t i = 0; i < img.values.numel(); ++i) img.values[i] = uni(rng);
  return img;
}

inline plfm::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  plfm::Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = uni(rng);
  return t;
}

inline bool bitwise_equal(const plfm::Tensor& a, const plfm::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline double max_abs_diff(const plfm::Tensor& a, const plfm::Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Central finite difference of a scalar function w.r.t. one tensor entry.
template <typename F>
double fd_grad(plfm::Tensor& t, int64_t idx, F&& loss, double eps = 1e-5) {
  const double saved = t[idx];
  t[idx] = saved + eps;
  const double lp = loss();
  t[idx] = saved - eps;
  const double lm = loss();
  t[idx] = saved;
  return (lp - lm) / (2.0 * eps);
}

inline double rel_err(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testutil
