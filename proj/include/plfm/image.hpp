#pragma once

#include <string>
#include <vector>

#include "plfm/tensor.hpp"

namespace plfm::data {

/// Declared value range of an image. Canonical storage is Unit; the GAN
/// branch converts to Symmetric internally and back on output; Byte is a
/// real-valued [0,255] scale (quantization happens only on 8-bit export).
enum class Range { Unit, Symmetric, Byte };

struct RangeBounds {
  double lo;
  double hi;
};

RangeBounds bounds(Range r);
Range parse_range(const std::string& tag);        // throws DataError on unknown tag
std::string range_name(Range r);

/// W x H x B optical grid, B = 3 (RGB). Values stored (H, W, B) row-major.
struct OpticalImage {
  Tensor values;               // (H, W, B)
  Range range = Range::Unit;

  OpticalImage() = default;
  OpticalImage(int h, int w, int b = 3, Range r = Range::Unit)
      : values({h, w, b}), range(r) {}

  int height() const { return values.rank() == 3 ? values.dim(0) : 0; }
  int width() const { return values.rank() == 3 ? values.dim(1) : 0; }
  int bands() const { return values.rank() == 3 ? values.dim(2) : 0; }
};

/// W x H x P SAR grid, P = 1 (VV), linear backscatter amplitude. Amplitudes
/// are nonnegative but not bounded above under Unit (speckle is multiplicative
/// with mean one), so only the lower bound is an invariant there.
struct SARImage {
  Tensor values;               // (H, W, 1)
  Range range = Range::Unit;
  int looks = 1;

  SARImage() = default;
  SARImage(int h, int w, Range r = Range::Unit, int looks_ = 1)
      : values({h, w, 1}), range(r), looks(looks_) {}

  int height() const { return values.rank() == 3 ? values.dim(0) : 0; }
  int width() const { return values.rank() == 3 ? values.dim(1) : 0; }
  int bands() const { return values.rank() == 3 ? values.dim(2) : 0; }
};

/// Time-ordered stack of optical frames with strictly increasing timestamps
/// (month labels). Default length is 3 for the forecasting branch input.
struct TemporalSequence {
  std::vector<OpticalImage> frames;
  std::vector<double> timestamps;
};

/// Channel concatenation of the two branch outputs: channels 0..2 are the
/// SAR-translated image, channels 3..5 the temporal prediction.
struct FeatureMap {
  Tensor values;               // (H, W, 6)

  int height() const { return values.rank() == 3 ? values.dim(0) : 0; }
  int width() const { return values.rank() == 3 ? values.dim(1) : 0; }
  int depth() const { return values.rank() == 3 ? values.dim(2) : 0; }
};

/// Per-pixel class distribution over intensity classes.
struct ClassVolume {
  Tensor probs;                // (H, W, |C|)

  int height() const { return probs.rank() == 3 ? probs.dim(0) : 0; }
  int width() const { return probs.rank() == 3 ? probs.dim(1) : 0; }
  int classes() const { return probs.rank() == 3 ? probs.dim(2) : 0; }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Invariant checks; reports instead of throwing.
ValidationReport validate_image(const OpticalImage& img);
ValidationReport validate_image(const SARImage& img);
ValidationReport validate_sequence(const TemporalSequence& seq);
ValidationReport validate_volume(const ClassVolume& vol);

/// Affine remap between declared ranges. Bijective on the reals; byte<->unit
/// uses divisor 255.
OpticalImage normalize(const OpticalImage& img, Range target);
SARImage normalize(const SARImage& img, Range target);
double remap_value(double v, Range from, Range to);

/// Stacks the two embeddings along the channel axis (SAR-translated first).
FeatureMap concat_embeddings(const OpticalImage& z_hat, const OpticalImage& y_hat);

/// k in {1,2,3}: returns (H, W, 2) holding (Z_hat channel k-1, Y_hat channel k-1).
Tensor channel_pair(const FeatureMap& f, int k);

}  // namespace plfm::data
