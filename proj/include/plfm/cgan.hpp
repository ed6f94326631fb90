#pragma once

#include <random>
#include <vector>

#include "plfm/image.hpp"
#include "plfm/nn.hpp"

namespace plfm::cgan {

struct GeneratorConfig {
  int depth = 5;          // encoder stages at 256^2; shrunk to fit smaller inputs
  int base_filters = 64;
  double dropout = 0.5;   // the generator's noise source, active in train mode
  int in_ch = 1;
  int out_ch = 3;
};

struct DiscriminatorConfig {
  int patch_target = 70;  // receptive-field goal; clamped to ~image/2 at desk scale
  int base_filters = 64;
  double gamma1 = 0.5;    // simulated-SAR stream weight
  double gamma2 = 0.5;    // real-SAR stream weight
  double lambda_l1 = 100.0;
};

struct LossBundle {
  double d1_loss = 0, d2_loss = 0;
  double g_adv_loss = 0, g_l1_loss = 0, g_total = 0;
};

/// Encoder-decoder generator with skip connections; tanh output in [-1,1].
class UNetGenerator {
 public:
  UNetGenerator(const GeneratorConfig& cfg, int height, int width, uint64_t seed);

  Tensor forward(const Tensor& x, bool train);  // (N,in,H,W) -> (N,out,H,W)
  void backward(const Tensor& gy);
  nn::ParamRefs params();

  nn::Archive to_archive() const;
  static UNetGenerator from_archive(const nn::Archive& archive);

  GeneratorConfig cfg;
  int height, width, depth_used;

 private:
  std::vector<nn::Conv2d> enc_;
  std::vector<nn::BatchNorm2d> enc_bn_;
  std::vector<nn::LeakyReLU> enc_act_;
  std::vector<nn::ConvTranspose2d> dec_;
  std::vector<nn::BatchNorm2d> dec_bn_;
  std::vector<nn::ReLU> dec_act_;
  std::vector<nn::Dropout> dec_drop_;
  nn::Tanh out_act_;
  std::vector<Tensor> enc_out_;
  std::mt19937_64 noise_rng_;
};

/// Patch classifier over (SAR, optical) channel-concatenated pairs. Strided
/// stages halve the grid; the patch probability grid is input/2^(#strided).
class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscriminatorConfig& cfg, int in_ch, int height, int width,
                     uint64_t seed, const std::string& name);

  Tensor forward_logits(const Tensor& xz, bool train);  // (N,in,H,W) -> (N,1,h',w')
  void backward(const Tensor& glogits);
  nn::ParamRefs params();

  int receptive_field() const { return rf_; }
  int strided_stages() const { return n_strided_; }
  int patch_target_used() const { return target_; }

  /// Gradient w.r.t. the conditioned input pair after the last backward call.
  const Tensor& input_grad() const { return last_input_grad_; }

 private:
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm2d> bns_;
  std::vector<nn::LeakyReLU> acts_;
  Tensor last_input_grad_;
  int n_strided_ = 0, rf_ = 0, target_ = 0;
};

/// SAR (unit amplitude) to optical (unit RGB); symmetric-range conversion is
/// internal. Train mode draws fresh dropout noise, eval is deterministic.
data::OpticalImage generator_forward(const data::SARImage& x, UNetGenerator& model,
                                     bool train_mode);

/// Patch probability grid (sigmoid of the logits), conditioned on (X, Z).
Tensor discriminator_forward(const data::SARImage& x, const data::OpticalImage& z,
                             PatchDiscriminator& model);

/// All loss terms on one aligned batch, evaluated in eval mode (no dropout):
/// per-stream discriminator cross-entropies, gamma-weighted adversarial
/// term, L1 over both streams' generations, and the combined total.
/// Tensors are NCHW in symmetric network space.
LossBundle cgan_losses(const Tensor& real_sar, const Tensor& sim_sar, const Tensor& optical,
                       UNetGenerator& g, PatchDiscriminator& d1, PatchDiscriminator& d2,
                       const DiscriminatorConfig& cfg);

/// Speckle-corrupts clean optical images into simulated SAR amplitudes.
std::vector<data::SARImage> simulate_training_pairs(const std::vector<data::OpticalImage>& optical,
                                                    int looks, uint64_t seed);

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;     // image-translation GAN convention
  int batch_size = 32;
  int steps = 2000;
  int looks = 1;
  bool adversarial = true;  // false: pure L1 regression ablation
  uint64_t seed = 0;
};

struct StepRow {
  int step;
  LossBundle losses;
};

struct Pair {
  Tensor sar;      // (1, H, W), unit amplitude
  Tensor optical;  // (3, H, W), unit range
};

struct TrainResult {
  std::vector<StepRow> history;
};

/// Alternating D1/D2/G updates with Adam; simulated-SAR pairs are drawn
/// fresh every step from the ground-truth optical batch.
TrainResult train_cgan(UNetGenerator& g, PatchDiscriminator& d1, PatchDiscriminator& d2,
                       const std::vector<Pair>& dataset, const DiscriminatorConfig& dcfg,
                       const TrainConfig& cfg);

}  // namespace plfm::cgan
