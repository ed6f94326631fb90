#pragma once

#include "plfm/tensor.hpp"

namespace plfm {

/// (H, W, C) image plane -> (C, H, W) activation layout.
inline Tensor hwc_to_chw(const Tensor& hwc) {
  const int h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  Tensor out({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at(k, y, x) = hwc.at(y, x, k);
  return out;
}

inline Tensor chw_to_hwc(const Tensor& chw) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({h, w, c});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(y, x, k) = chw.at(k, y, x);
  return out;
}

/// Stack single-sample (C,H,W) tensors into a batch (N,C,H,W).
inline Tensor stack_batch(const std::vector<Tensor>& chw) {
  const int n = static_cast<int>(chw.size());
  const int c = chw[0].dim(0), h = chw[0].dim(1), w = chw[0].dim(2);
  Tensor out({n, c, h, w});
  for (int i = 0; i < n; ++i)
    std::copy(chw[static_cast<size_t>(i)].data(), chw[static_cast<size_t>(i)].data() + chw[0].numel(),
              out.data() + static_cast<int64_t>(i) * chw[0].numel());
  return out;
}

inline Tensor slice_batch(const Tensor& nchw, int i) {
  const int c = nchw.dim(1), h = nchw.dim(2), w = nchw.dim(3);
  Tensor out({c, h, w});
  std::copy(nchw.data() + static_cast<int64_t>(i) * out.numel(),
            nchw.data() + static_cast<int64_t>(i + 1) * out.numel(), out.data());
  return out;
}

}  // namespace plfm
