#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "plfm/tensor.hpp"

// Small training core: NCHW activations, double precision, explicit
// backward passes. Layers cache what their backward needs; one instance
// serves one in-flight forward/backward at a time.
namespace plfm::nn {

struct Param {
  Tensor value;
  Tensor grad;
  std::string name;

  Param() = default;
  Param(std::vector<int> shape, std::string n)
      : value(shape), grad(std::move(shape)), name(std::move(n)) {}
  void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Param*>;

void init_uniform_fanin(Tensor& w, int fan_in, std::mt19937_64& rng);

// Convolution primitives. x (N,C,H,W), w (OC,IC,K,K); stride s, zero pad p.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad);
Tensor conv2d_grad_input(const Tensor& gy, const Tensor& w, int stride, int pad, int in_h,
                         int in_w);
void conv2d_grad_weights(const Tensor& x, const Tensor& gy, Tensor& gw, Tensor* gb, int stride,
                         int pad);
inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, const std::string& name);
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(ParamRefs& out);

  Param w, b;
  int in_ch, out_ch, k, stride, pad;

 private:
  Tensor x_cache_;
};

/// Fractionally-strided convolution; output spatial size (in-1)*s - 2p + k.
class ConvTranspose2d {
 public:
  ConvTranspose2d(int in_ch, int out_ch, int ksize, int stride, int pad, const std::string& name);
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(ParamRefs& out);

  Param w, b;  // w stored as (in_ch, out_ch, k, k)
  int in_ch, out_ch, k, stride, pad;

 private:
  Tensor x_cache_;
};

class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels, const std::string& name, double momentum = 0.1,
                       double eps = 1e-5);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(ParamRefs& out);

  Param gamma, beta;
  Tensor running_mean, running_var;
  int channels;
  double momentum, eps;

 private:
  Tensor xhat_cache_;
  std::vector<double> invstd_cache_;
  int64_t count_ = 0;
};

class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {}
  Tensor forward(const Tensor& x, bool train, std::mt19937_64& rng);
  Tensor backward(const Tensor& gy);

 private:
  double rate_;
  Tensor mask_;
  bool active_ = false;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  Tensor x_;
};

class LeakyReLU {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  double slope_;
  Tensor x_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  Tensor y_;
};

class Tanh {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  Tensor y_;
};

Tensor sigmoid(const Tensor& x);
Tensor tanh_t(const Tensor& x);

/// 2x2 stride-2 max pooling (used only by the pooled forecasting variant).
class MaxPool2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  std::vector<int64_t> argmax_;
  std::vector<int> in_shape_;
};

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
Tensor upsample_bilinear_grad(const Tensor& gy, int in_h, int in_w);

class Adam {
 public:
  Adam(ParamRefs params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  /// Optimizer slots, exposed for checkpoint round-trips.
  std::map<std::string, Tensor> state() const;
  void load_state(const std::map<std::string, Tensor>& state);

 private:
  ParamRefs params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Flat tensor archive: raw little-endian payload next to a text manifest of
/// names, dtypes, shapes and offsets.
struct Archive {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
};

void save_archive(const std::filesystem::path& bin_path, const Archive& archive);
Archive load_archive(const std::filesystem::path& bin_path);

}  // namespace plfm::nn
