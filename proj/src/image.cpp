#include "plfm/image.hpp"

#include <cmath>

#include "plfm/errors.hpp"

namespace plfm::data {

RangeBounds bounds(Range r) {
  switch (r) {
    case Range::Unit: return {0.0, 1.0};
    case Range::Symmetric: return {-1.0, 1.0};
    case Range::Byte: return {0.0, 255.0};
  }
  throw DataError("range: invalid enum value");
}

Range parse_range(const std::string& tag) {
  if (tag == "unit") return Range::Unit;
  if (tag == "symmetric") return Range::Symmetric;
  if (tag == "byte") return Range::Byte;
  throw DataError("range: unknown tag '" + tag + "'");
}

std::string range_name(Range r) {
  switch (r) {
    case Range::Unit: return "unit";
    case Range::Symmetric: return "symmetric";
    case Range::Byte: return "byte";
  }
  return "?";
}

ValidationReport validate_image(const OpticalImage& img) {
  ValidationReport rep;
  if (img.values.rank() != 3) {
    rep.violations.push_back("optical: values must be a rank-3 (H,W,B) grid");
    return rep;
  }
  if (img.height() <= 0 || img.width() <= 0)
    rep.violations.push_back("optical: W and H must be positive");
  if (img.bands() != 3)
    rep.violations.push_back("optical: band count must be 3 (RGB), got " +
                             std::to_string(img.bands()));
  const RangeBounds b = bounds(img.range);
  for (int64_t i = 0; i < img.values.numel(); ++i) {
    const double v = img.values[i];
    if (!(v >= b.lo && v <= b.hi) || std::isnan(v)) {
      rep.violations.push_back("optical: value " + std::to_string(v) + " outside " +
                               range_name(img.range) + " range");
      break;
    }
  }
  return rep;
}

ValidationReport validate_image(const SARImage& img) {
  ValidationReport rep;
  if (img.values.rank() != 3) {
    rep.violations.push_back("sar: values must be a rank-3 (H,W,P) grid");
    return rep;
  }
  if (img.height() <= 0 || img.width() <= 0)
    rep.violations.push_back("sar: W and H must be positive");
  if (img.bands() != 1)
    rep.violations.push_back("sar: polarization count must be 1 (VV), got " +
                             std::to_string(img.bands()));
  if (img.looks < 1) rep.violations.push_back("sar: looks must be >= 1");
  if (img.range == Range::Unit) {
    for (int64_t i = 0; i < img.values.numel(); ++i) {
      const double v = img.values[i];
      if (v < 0.0 || std::isnan(v)) {
        rep.violations.push_back("sar: negative or NaN amplitude under unit range");
        break;
      }
    }
  }
  return rep;
}

ValidationReport validate_sequence(const TemporalSequence& seq) {
  ValidationReport rep;
  if (seq.frames.empty()) {
    rep.violations.push_back("sequence: no frames");
    return rep;
  }
  if (seq.frames.size() != seq.timestamps.size())
    rep.violations.push_back("sequence: frame/timestamp count mismatch");
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    const auto r = validate_image(seq.frames[i]);
    rep.violations.insert(rep.violations.end(), r.violations.begin(), r.violations.end());
    if (i > 0) {
      if (!same_shape(seq.frames[i].values, seq.frames[0].values) ||
          seq.frames[i].range != seq.frames[0].range)
        rep.violations.push_back("sequence: frame " + std::to_string(i) +
                                 " shape/range differs from frame 0");
    }
  }
  for (size_t i = 1; i < seq.timestamps.size(); ++i)
    if (!(seq.timestamps[i] > seq.timestamps[i - 1])) {
      rep.violations.push_back("sequence: timestamps not strictly increasing");
      break;
    }
  return rep;
}

ValidationReport validate_volume(const ClassVolume& vol) {
  ValidationReport rep;
  if (vol.probs.rank() != 3) {
    rep.violations.push_back("volume: probs must be rank-3 (H,W,C)");
    return rep;
  }
  const int h = vol.height(), w = vol.width(), c = vol.classes();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        const double p = vol.probs.at(y, x, k);
        if (p < 0.0 || p > 1.0) {
          rep.violations.push_back("volume: probability outside [0,1]");
          return rep;
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        rep.violations.push_back("volume: pixel distribution does not sum to 1");
        return rep;
      }
    }
  return rep;
}

double remap_value(double v, Range from, Range to) {
  const RangeBounds a = bounds(from), b = bounds(to);
  return b.lo + (v - a.lo) * (b.hi - b.lo) / (a.hi - a.lo);
}

namespace {
Tensor remap_tensor(const Tensor& t, Range from, Range to) {
  Tensor out = t;
  if (from == to) return out;
  const RangeBounds a = bounds(from), b = bounds(to);
  const double scale = (b.hi - b.lo) / (a.hi - a.lo);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = b.lo + (t[i] - a.lo) * scale;
  return out;
}
}  // namespace

OpticalImage normalize(const OpticalImage& img, Range target) {
  OpticalImage out = img;
  out.values = remap_tensor(img.values, img.range, target);
  out.range = target;
  return out;
}

SARImage normalize(const SARImage& img, Range target) {
  SARImage out = img;
  out.values = remap_tensor(img.values, img.range, target);
  out.range = target;
  return out;
}

FeatureMap concat_embeddings(const OpticalImage& z_hat, const OpticalImage& y_hat) {
  if (!same_shape(z_hat.values, y_hat.values))
    throw DataError("concat: embedding shapes differ " + Tensor::shape_str(z_hat.values.shape()) +
                    " vs " + Tensor::shape_str(y_hat.values.shape()));
  if (z_hat.bands() != 3)
    throw DataError("concat: embeddings must have 3 bands");
  if (z_hat.range != y_hat.range)
    throw DataError("concat: embedding ranges differ");
  const int h = z_hat.height(), w = z_hat.width();
  FeatureMap f;
  f.values = Tensor({h, w, 6});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        f.values.at(y, x, c) = z_hat.values.at(y, x, c);
        f.values.at(y, x, c + 3) = y_hat.values.at(y, x, c);
      }
  return f;
}

Tensor channel_pair(const FeatureMap& f, int k) {
  if (k < 1 || k > 3) throw DataError("channel_pair: k must be in 1..3, got " + std::to_string(k));
  if (f.depth() != 6) throw DataError("channel_pair: feature map depth must be 6");
  const int h = f.height(), w = f.width();
  Tensor out({h, w, 2});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.at(y, x, 0) = f.values.at(y, x, k - 1);      // SAR-translated channel
      out.at(y, x, 1) = f.values.at(y, x, k - 1 + 3);  // temporal-prediction channel
    }
  return out;
}

}  // namespace plfm::data
