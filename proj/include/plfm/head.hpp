#pragma once

#include <vector>

#include "plfm/cgan.hpp"
#include "plfm/convlstm.hpp"
#include "plfm/image.hpp"
#include "plfm/nn.hpp"

namespace plfm::head {

struct HeadConfig {
  int classes = 256;  // intensity classes; desk-scale tests run 16
  int depth = 2;      // stride-2 stages
  int base_filters = 32;
  int batch_size = 16;
  double lr = 2e-4;
  int epochs = 40;
  uint64_t seed = 0;
};

/// class = floor(v * |C|) clamped to |C|-1, per band.
Tensor quantize_targets(const data::OpticalImage& img, int classes);  // (H, W, 3) class ids
double dequantize(int cls, int classes);                              // (c + 0.5) / |C|

/// Small encoder-decoder with skip connections mapping a channel pair to
/// per-class logits.
class HeadModel {
 public:
  HeadModel(const HeadConfig& cfg, int height, int width, uint64_t seed);

  Tensor forward_logits(const Tensor& x, bool train);  // (N,2,H,W) -> (N,|C|,H,W)
  void backward(const Tensor& glogits);
  nn::ParamRefs params();

  nn::Archive to_archive() const;
  static HeadModel from_archive(const nn::Archive& archive);

  HeadConfig cfg;
  int height, width;

 private:
  nn::Conv2d stem_;
  nn::ReLU stem_act_;
  std::vector<nn::Conv2d> enc_;
  std::vector<nn::BatchNorm2d> enc_bn_;
  std::vector<nn::ReLU> enc_act_;
  std::vector<nn::ConvTranspose2d> dec_;
  std::vector<nn::BatchNorm2d> dec_bn_;
  std::vector<nn::ReLU> dec_act_;
  nn::Conv2d out_;
  std::vector<Tensor> skips_;
};

/// Softmax over the class axis of single-sample logits.
data::ClassVolume head_forward(const Tensor& f_k, HeadModel& model);  // f_k (H, W, 2)

/// Mean categorical cross-entropy of a probability volume against integer
/// class targets (log clipped at 1e-12).
double cross_entropy(const data::ClassVolume& m, const Tensor& targets);

/// Fused softmax + cross-entropy on batched logits; fills (p - onehot)/count
/// gradients when requested.
double softmax_ce_loss(const Tensor& logits, const Tensor& targets, Tensor* glogits);

/// Per-pixel argmax (ties to the lowest class), dequantized to unit range.
Tensor reconstruct_channel(const data::ClassVolume& m);  // (H, W)

struct Triple {
  data::OpticalImage y_hat;   // temporal-branch prediction
  data::OpticalImage z_hat;   // translation-branch prediction
  data::OpticalImage target;  // clean ground truth
};

struct EpochRow {
  int epoch;
  double loss;
  double accuracy;
};

struct TrainResult {
  std::vector<EpochRow> history;  // row 0 is the pre-training evaluation
};

/// One shared-weight head trained over all three channel pairs per couple.
TrainResult train_head(HeadModel& model, const std::vector<Triple>& triples,
                       const HeadConfig& cfg);

/// The three trained branches plus compatibility metadata.
struct PLFMModels {
  convlstm::Model forecaster;
  cgan::UNetGenerator generator;
  HeadModel head;

  void check_compatible() const;  // throws CompatError naming the dimension
};

/// Full pipeline: forecast, translate, concatenate, classify per channel
/// pair, reassemble. No intermediate is persisted.
data::OpticalImage plfm_infer(const data::TemporalSequence& seq, const data::SARImage& sar,
                              PLFMModels& models);

}  // namespace plfm::head
