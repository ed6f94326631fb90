#pragma once

#include <random>
#include <vector>

#include "plfm/image.hpp"
#include "plfm/nn.hpp"
#include "plfm/tensor.hpp"

namespace plfm::convlstm {

struct HuberConfig {
  double delta = 1.0;
  int batch_size = 16;
};

/// Mean Huber loss over batch and all elements: 0.5 e^2 on |e| <= delta,
/// delta|e| - delta^2/2 on the linear arm.
double huber_loss(const Tensor& y_hat, const Tensor& y, const HuberConfig& cfg);
Tensor huber_grad(const Tensor& y_hat, const Tensor& y, const HuberConfig& cfg);

/// One recurrent layer's parameters: eight gate kernels, per-gate peephole
/// grids, four biases. Peephole grids are elementwise over the (hidden, H, W)
/// cell state, which ties a layer to one spatial size.
struct CellParams {
  nn::Param wxf, whf, wxc, whc, wxi, whi, wxo, who;  // (hid, in|hid, K, K)
  nn::Param pf, pi, po;                              // (hid, H, W)
  nn::Param bf, bc, bi, bo;                          // (hid)
  int in_ch, hid_ch, kernel, height, width;
  bool peephole;

  CellParams(int in_ch, int hid_ch, int kernel, int height, int width, bool peephole,
             const std::string& name);
  void init(std::mt19937_64& rng);  // uniform fan-in; forget bias starts at 1
  void collect(nn::ParamRefs& out);
};

struct CellState {
  Tensor h, c;  // (N, hid, H, W)
};

struct StepCache {
  Tensor x, h_prev, c_prev;
  Tensor f, i, o, tanh_cstar, c, tanh_c;
};

/// One recurrence step. The input-to-candidate term uses the input frame
/// (the only reading consistent with the per-kernel naming); the output-gate
/// peephole sees the updated cell state.
CellState cell_step(const Tensor& x, const CellState& prev, const CellParams& params,
                    StepCache* cache = nullptr);

struct StepGrads {
  Tensor gx, gh_prev, gc_prev;
};

/// Backward through one step; accumulates parameter gradients into params.
StepGrads cell_backward(const Tensor& gh, const Tensor& gc, const StepCache& cache,
                        CellParams& params);

struct ModelConfig {
  int input_ch = 3;
  std::vector<int> hidden = {32, 32, 32};
  int kernel = 3;
  bool peephole = true;
  bool pooling = false;  // pool+upsample variant of the stack
  int height = 64, width = 64;
  int seq_len = 3;
};

/// Stacked recurrence with batch normalization between layers and a final
/// 1x1 convolution + sigmoid onto three channels. Stride-1 padded
/// convolutions keep the output at the input size unless pooling is enabled.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  Tensor forward(const Tensor& seq, bool train);  // (T, N, C, H, W) -> (N, 3, H, W)
  void backward(const Tensor& gy);
  nn::ParamRefs params();

  nn::Archive to_archive() const;
  static Model from_archive(const nn::Archive& archive);

  ModelConfig cfg;
  std::vector<CellParams> layers;
  std::vector<nn::BatchNorm2d> norms;
  nn::Conv2d out_conv;
  nn::Sigmoid out_act;

 private:
  std::vector<std::vector<StepCache>> caches_;       // [layer][t]
  std::vector<std::vector<nn::MaxPool2>> pools_;     // [layer][t], pooling variant
  std::vector<int> layer_h_, layer_w_;
  int last_n_ = 0;
};

/// Predicts the frame after the sequence; eval-mode, deterministic.
data::OpticalImage convlstm_forward(const data::TemporalSequence& seq, Model& model);

struct TrainConfig {
  double lr = 1e-2;
  int batch_size = 16;
  int max_epochs = 200;
  double plateau_factor = 0.5;
  int plateau_patience = 5;
  int early_patience = 10;
  double delta = 1.0;
  uint64_t seed = 0;
};

struct Sample {
  Tensor seq;     // (T, C, H, W)
  Tensor target;  // (3, H, W)
};

struct EpochRow {
  int epoch;
  double train_loss;
  double val_loss;
  double lr;
};

struct TrainResult {
  std::vector<EpochRow> history;
  int best_epoch = 0;
  double best_val = 0;
};

/// Adam + reduce-on-plateau + early stopping with best-weights restore.
/// An empty validation set validates on the training samples.
TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg);

}  // namespace plfm::convlstm
