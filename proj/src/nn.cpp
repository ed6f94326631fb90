#include "plfm/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "plfm/errors.hpp"

namespace plfm::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

void init_uniform_fanin(Tensor& w, int fan_in, std::mt19937_64& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  std::uniform_real_distribution<double> uni(-a, a);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = uni(rng);
}

namespace {

/// Row-major (C*K*K, OH*OW) patch matrix for one sample.
void im2col(const double* x, int c_in, int h, int w, int k, int stride, int pad, int oh, int ow,
            double* cols) {
  for (int c = 0; c < c_in; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        double* row = cols + ((static_cast<int64_t>(c) * k + kh) * k + kw) *
                                 (static_cast<int64_t>(oh) * ow);
        const double* src = x + static_cast<int64_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + kh;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * stride - pad + kw;
            row[static_cast<int64_t>(y) * ow + xo] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[static_cast<int64_t>(iy) * w + ix]
                                                         : 0.0;
          }
        }
      }
}

/// Scatter-add of a patch matrix back into an image.
void col2im(const double* cols, int c_in, int h, int w, int k, int stride, int pad, int oh, int ow,
            double* x) {
  for (int c = 0; c < c_in; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        const double* row = cols + ((static_cast<int64_t>(c) * k + kh) * k + kw) *
                                       (static_cast<int64_t>(oh) * ow);
        double* dst = x + static_cast<int64_t>(c) * h * w;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + kh;
          if (iy < 0 || iy >= h) continue;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * stride - pad + kw;
            if (ix >= 0 && ix < w)
              dst[static_cast<int64_t>(iy) * w + ix] += row[static_cast<int64_t>(y) * ow + xo];
          }
        }
      }
}

void check_conv_args(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 4)
    throw DataError("conv: expected NCHW input and OIKK weights");
  if (x.dim(1) != w.dim(1))
    throw DataError("conv: channel mismatch, input " + std::to_string(x.dim(1)) + " vs weight " +
                    std::to_string(w.dim(1)));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
  check_conv_args(x, w);
  const int n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int oc = w.dim(0), k = w.dim(2);
  const int oh = conv_out_size(h, k, stride, pad), ow = conv_out_size(wd, k, stride, pad);
  if (oh <= 0 || ow <= 0) throw DataError("conv: output would be empty");

  Tensor y({n, oc, oh, ow});
  const int64_t ckk = static_cast<int64_t>(c_in) * k * k;
  const int64_t l = static_cast<int64_t>(oh) * ow;
  std::vector<double> cols(static_cast<size_t>(ckk * l));
  MapCM wm(w.data(), oc, ckk);
  for (int i = 0; i < n; ++i) {
    im2col(x.data() + static_cast<int64_t>(i) * c_in * h * wd, c_in, h, wd, k, stride, pad, oh, ow,
           cols.data());
    MapCM cm(cols.data(), ckk, l);
    MapM ym(y.data() + static_cast<int64_t>(i) * oc * l, oc, l);
    ym.noalias() = wm * cm;
    if (bias)
      for (int c = 0; c < oc; ++c) ym.row(c).array() += (*bias)[c];
  }
  return y;
}

Tensor conv2d_grad_input(const Tensor& gy, const Tensor& w, int stride, int pad, int in_h,
                         int in_w) {
  const int n = gy.dim(0), oc = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  const int c_in = w.dim(1), k = w.dim(2);
  if (w.dim(0) != oc) throw DataError("conv: grad channel mismatch");

  Tensor gx({n, c_in, in_h, in_w});
  const int64_t ckk = static_cast<int64_t>(c_in) * k * k;
  const int64_t l = static_cast<int64_t>(oh) * ow;
  std::vector<double> cols(static_cast<size_t>(ckk * l));
  MapCM wm(w.data(), oc, ckk);
  for (int i = 0; i < n; ++i) {
    MapCM gym(gy.data() + static_cast<int64_t>(i) * oc * l, oc, l);
    MapM cm(cols.data(), ckk, l);
    cm.noalias() = wm.transpose() * gym;
    col2im(cols.data(), c_in, in_h, in_w, k, stride, pad, oh, ow,
           gx.data() + static_cast<int64_t>(i) * c_in * in_h * in_w);
  }
  return gx;
}

void conv2d_grad_weights(const Tensor& x, const Tensor& gy, Tensor& gw, Tensor* gb, int stride,
                         int pad) {
  check_conv_args(x, gw);
  const int n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int oc = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  const int k = gw.dim(2);

  const int64_t ckk = static_cast<int64_t>(c_in) * k * k;
  const int64_t l = static_cast<int64_t>(oh) * ow;
  std::vector<double> cols(static_cast<size_t>(ckk * l));
  MapM gwm(gw.data(), oc, ckk);
  for (int i = 0; i < n; ++i) {
    im2col(x.data() + static_cast<int64_t>(i) * c_in * h * wd, c_in, h, wd, k, stride, pad, oh, ow,
           cols.data());
    MapCM cm(cols.data(), ckk, l);
    MapCM gym(gy.data() + static_cast<int64_t>(i) * oc * l, oc, l);
    gwm.noalias() += gym * cm.transpose();
    if (gb)
      for (int c = 0; c < oc; ++c) (*gb)[c] += gym.row(c).sum();
  }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch_, int out_ch_, int ksize, int stride_, int pad_, const std::string& name)
    : w({out_ch_, in_ch_, ksize, ksize}, name + ".w"),
      b({out_ch_}, name + ".b"),
      in_ch(in_ch_),
      out_ch(out_ch_),
      k(ksize),
      stride(stride_),
      pad(pad_) {}

void Conv2d::init(std::mt19937_64& rng) {
  init_uniform_fanin(w.value, in_ch * k * k, rng);
  b.value.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (train) x_cache_ = x;
  return conv2d(x, w.value, &b.value, stride, pad);
}

Tensor Conv2d::backward(const Tensor& gy) {
  conv2d_grad_weights(x_cache_, gy, w.grad, &b.grad, stride, pad);
  return conv2d_grad_input(gy, w.value, stride, pad, x_cache_.dim(2), x_cache_.dim(3));
}

void Conv2d::collect(ParamRefs& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// ---------------------------------------------------------------------------
// ConvTranspose2d: the adjoint data map of a Conv2d with weight roles swapped.

ConvTranspose2d::ConvTranspose2d(int in_ch_, int out_ch_, int ksize, int stride_, int pad_,
                                 const std::string& name)
    : w({in_ch_, out_ch_, ksize, ksize}, name + ".w"),
      b({out_ch_}, name + ".b"),
      in_ch(in_ch_),
      out_ch(out_ch_),
      k(ksize),
      stride(stride_),
      pad(pad_) {}

void ConvTranspose2d::init(std::mt19937_64& rng) {
  init_uniform_fanin(w.value, in_ch * k * k, rng);
  b.value.fill(0.0);
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool train) {
  if (train) x_cache_ = x;
  const int oh = (x.dim(2) - 1) * stride - 2 * pad + k;
  const int ow = (x.dim(3) - 1) * stride - 2 * pad + k;
  Tensor y = conv2d_grad_input(x, w.value, stride, pad, oh, ow);
  for (int i = 0; i < y.dim(0); ++i)
    for (int c = 0; c < out_ch; ++c) {
      double* p = y.data() + (static_cast<int64_t>(i) * out_ch + c) * oh * ow;
      for (int64_t j = 0; j < static_cast<int64_t>(oh) * ow; ++j) p[j] += b.value[c];
    }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& gy) {
  conv2d_grad_weights(gy, x_cache_, w.grad, nullptr, stride, pad);
  for (int i = 0; i < gy.dim(0); ++i)
    for (int c = 0; c < out_ch; ++c) {
      const double* p =
          gy.data() + (static_cast<int64_t>(i) * out_ch + c) * gy.dim(2) * gy.dim(3);
      double acc = 0;
      for (int64_t j = 0; j < static_cast<int64_t>(gy.dim(2)) * gy.dim(3); ++j) acc += p[j];
      b.grad[c] += acc;
    }
  return conv2d(gy, w.value, nullptr, stride, pad);
}

void ConvTranspose2d::collect(ParamRefs& out) {
  out.push_back(&w);
  out.push_back(&b);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels_, const std::string& name, double momentum_, double eps_)
    : gamma({channels_}, name + ".gamma"),
      beta({channels_}, name + ".beta"),
      running_mean({channels_}),
      running_var({channels_}),
      channels(channels_),
      momentum(momentum_),
      eps(eps_) {
  gamma.value.fill(1.0);
  running_var.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != channels) throw DataError("batchnorm: channel mismatch");
  const int64_t m = static_cast<int64_t>(n) * h * w;
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor y({n, c, h, w});

  if (train) {
    xhat_cache_ = Tensor({n, c, h, w});
    invstd_cache_.assign(static_cast<size_t>(c), 0.0);
    count_ = m;
    for (int ch = 0; ch < c; ++ch) {
      double mean = 0;
      for (int i = 0; i < n; ++i) {
        const double* p = x.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        for (int64_t j = 0; j < plane; ++j) mean += p[j];
      }
      mean /= static_cast<double>(m);
      double var = 0;
      for (int i = 0; i < n; ++i) {
        const double* p = x.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        for (int64_t j = 0; j < plane; ++j) {
          const double d = p[j] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      const double invstd = 1.0 / std::sqrt(var + eps);
      invstd_cache_[static_cast<size_t>(ch)] = invstd;
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var;
      const double g = gamma.value[ch], bt = beta.value[ch];
      for (int i = 0; i < n; ++i) {
        const double* p = x.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        double* xh = xhat_cache_.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        double* yo = y.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        for (int64_t j = 0; j < plane; ++j) {
          xh[j] = (p[j] - mean) * invstd;
          yo[j] = g * xh[j] + bt;
        }
      }
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      const double invstd = 1.0 / std::sqrt(running_var[ch] + eps);
      const double mean = running_mean[ch];
      const double g = gamma.value[ch], bt = beta.value[ch];
      for (int i = 0; i < n; ++i) {
        const double* p = x.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        double* yo = y.data() + (static_cast<int64_t>(i) * c + ch) * plane;
        for (int64_t j = 0; j < plane; ++j) yo[j] = g * (p[j] - mean) * invstd + bt;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const double m = static_cast<double>(count_);
  Tensor gx({n, c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    double sum_gy = 0, sum_gy_xhat = 0;
    for (int i = 0; i < n; ++i) {
      const double* g = gy.data() + (static_cast<int64_t>(i) * c + ch) * plane;
      const double* xh = xhat_cache_.data() + (static_cast<int64_t>(i) * c + ch) * plane;
      for (int64_t j = 0; j < plane; ++j) {
        sum_gy += g[j];
        sum_gy_xhat += g[j] * xh[j];
      }
    }
    gamma.grad[ch] += sum_gy_xhat;
    beta.grad[ch] += sum_gy;
    const double scale = gamma.value[ch] * invstd_cache_[static_cast<size_t>(ch)] / m;
    for (int i = 0; i < n; ++i) {
      const double* g = gy.data() + (static_cast<int64_t>(i) * c + ch) * plane;
      const double* xh = xhat_cache_.data() + (static_cast<int64_t>(i) * c + ch) * plane;
      double* out = gx.data() + (static_cast<int64_t>(i) * c + ch) * plane;
      for (int64_t j = 0; j < plane; ++j)
        out[j] = scale * (m * g[j] - sum_gy - xh[j] * sum_gy_xhat);
    }
  }
  return gx;
}

void BatchNorm2d::collect(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------------------
// Dropout and activations

Tensor Dropout::forward(const Tensor& x, bool train, std::mt19937_64& rng) {
  active_ = train && rate_ > 0.0;
  if (!active_) return x;
  const double keep = 1.0 - rate_;
  std::bernoulli_distribution coin(keep);
  mask_ = Tensor(x.shape());
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    mask_[i] = coin(rng) ? 1.0 / keep : 0.0;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& gy) {
  if (!active_) return gy;
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * mask_[i];
  return gx;
}

Tensor ReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = x_[i] > 0 ? gy[i] : 0.0;
  return gx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0 ? x[i] : slope_ * x[i];
  return y;
}

Tensor LeakyReLU::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = x_[i] > 0 ? gy[i] : slope_ * gy[i];
  return gx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y;
}

Tensor tanh_t(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

Tensor Sigmoid::forward(const Tensor& x) {
  y_ = sigmoid(x);
  return y_;
}

Tensor Sigmoid::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * y_[i] * (1.0 - y_[i]);
  return gx;
}

Tensor Tanh::forward(const Tensor& x) {
  y_ = tanh_t(x);
  return y_;
}

Tensor Tanh::backward(const Tensor& gy) {
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) gx[i] = gy[i] * (1.0 - y_[i] * y_[i]);
  return gx;
}

// ---------------------------------------------------------------------------
// Pooling / upsampling (pooled forecasting variant only)

Tensor MaxPool2::forward(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  in_shape_ = x.shape();
  Tensor y({n, c, oh, ow});
  argmax_.assign(static_cast<size_t>(y.numel()), 0);
  int64_t oi = 0;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx, ++oi) {
          double best = -1e300;
          int64_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int64_t idx =
                  ((static_cast<int64_t>(i) * c + ch) * h + (2 * yy + dy)) * w + (2 * xx + dx);
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          y[oi] = best;
          argmax_[static_cast<size_t>(oi)] = best_idx;
        }
  return y;
}

Tensor MaxPool2::backward(const Tensor& gy) {
  Tensor gx(in_shape_);
  for (int64_t i = 0; i < gy.numel(); ++i) gx[argmax_[static_cast<size_t>(i)]] += gy[i];
  return gx;
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, out_h, out_w});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < out_h; ++yy) {
        const double fy = out_h > 1 ? static_cast<double>(yy) * (h - 1) / (out_h - 1) : 0.0;
        const int y0 = std::min(static_cast<int>(fy), h - 2 >= 0 ? h - 2 : 0);
        const double ty = fy - y0;
        for (int xx = 0; xx < out_w; ++xx) {
          const double fx = out_w > 1 ? static_cast<double>(xx) * (w - 1) / (out_w - 1) : 0.0;
          const int x0 = std::min(static_cast<int>(fx), w - 2 >= 0 ? w - 2 : 0);
          const double tx = fx - x0;
          const auto v = [&](int a, int b) { return x.at(i, ch, a, b); };
          y.at(i, ch, yy, xx) = (1 - ty) * ((1 - tx) * v(y0, x0) + tx * v(y0, std::min(x0 + 1, w - 1))) +
                                ty * ((1 - tx) * v(std::min(y0 + 1, h - 1), x0) +
                                      tx * v(std::min(y0 + 1, h - 1), std::min(x0 + 1, w - 1)));
        }
      }
  return y;
}

Tensor upsample_bilinear_grad(const Tensor& gy, int in_h, int in_w) {
  const int n = gy.dim(0), c = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  Tensor gx({n, c, in_h, in_w});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int yy = 0; yy < oh; ++yy) {
        const double fy = oh > 1 ? static_cast<double>(yy) * (in_h - 1) / (oh - 1) : 0.0;
        const int y0 = std::min(static_cast<int>(fy), in_h - 2 >= 0 ? in_h - 2 : 0);
        const double ty = fy - y0;
        for (int xx = 0; xx < ow; ++xx) {
          const double fx = ow > 1 ? static_cast<double>(xx) * (in_w - 1) / (ow - 1) : 0.0;
          const int x0 = std::min(static_cast<int>(fx), in_w - 2 >= 0 ? in_w - 2 : 0);
          const double tx = fx - x0;
          const double g = gy.at(i, ch, yy, xx);
          gx.at(i, ch, y0, x0) += (1 - ty) * (1 - tx) * g;
          gx.at(i, ch, y0, std::min(x0 + 1, in_w - 1)) += (1 - ty) * tx * g;
          gx.at(i, ch, std::min(y0 + 1, in_h - 1), x0) += ty * (1 - tx) * g;
          gx.at(i, ch, std::min(y0 + 1, in_h - 1), std::min(x0 + 1, in_w - 1)) += ty * tx * g;
        }
      }
  return gx;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(ParamRefs params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Param* p : params_) {
    m_.emplace_back(Tensor(p->value.shape()));
    v_.emplace_back(Tensor(p->value.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      p.value[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

std::map<std::string, Tensor> Adam::state() const {
  std::map<std::string, Tensor> s;
  for (size_t i = 0; i < params_.size(); ++i) {
    s["adam.m." + params_[i]->name] = m_[i];
    s["adam.v." + params_[i]->name] = v_[i];
  }
  Tensor t({1});
  t[0] = static_cast<double>(t_);
  s["adam.t"] = t;
  return s;
}

void Adam::load_state(const std::map<std::string, Tensor>& state) {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (auto it = state.find("adam.m." + params_[i]->name); it != state.end()) m_[i] = it->second;
    if (auto it = state.find("adam.v." + params_[i]->name); it != state.end()) v_[i] = it->second;
  }
  if (auto it = state.find("adam.t"); it != state.end()) t_ = static_cast<long>(it->second[0]);
}

// ---------------------------------------------------------------------------
// Archive

void save_archive(const std::filesystem::path& bin_path, const Archive& archive) {
  std::filesystem::create_directories(bin_path.parent_path());
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("archive: cannot write " + bin_path.string());
  std::filesystem::path man_path = bin_path;
  man_path.replace_extension(".manifest");
  std::ofstream man(man_path);
  if (!man) throw DataError("archive: cannot write " + man_path.string());

  for (const auto& [key, value] : archive.meta) man << "# " << key << ": " << value << "\n";
  int64_t offset = 0;
  for (const auto& [name, tensor] : archive.tensors) {
    man << name << "\tf64\t" << offset;
    for (int d : tensor.shape()) man << "\t" << d;
    man << "\n";
    bin.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    offset += tensor.numel() * static_cast<int64_t>(sizeof(double));
  }
}

Archive load_archive(const std::filesystem::path& bin_path) {
  std::filesystem::path man_path = bin_path;
  man_path.replace_extension(".manifest");
  std::ifstream man(man_path);
  if (!man) throw DataError("archive: missing manifest " + man_path.string());
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("archive: missing payload " + bin_path.string());

  Archive archive;
  std::string line;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string key = line.substr(2, colon - 2);
        std::string value = line.substr(colon + 1);
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        archive.meta[key] = value;
      }
      continue;
    }
    std::istringstream is(line);
    std::string name, dtype;
    int64_t offset;
    is >> name >> dtype >> offset;
    if (dtype != "f64") throw DataError("archive: unsupported dtype " + dtype);
    std::vector<int> shape;
    int d;
    while (is >> d) shape.push_back(d);
    Tensor t(shape);
    bin.seekg(offset);
    bin.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(double)))
      throw DataError("archive: truncated payload " + bin_path.string());
    archive.tensors[name] = std::move(t);
  }
  return archive;
}

}  // namespace plfm::nn
