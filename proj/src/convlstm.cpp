#include "plfm/convlstm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "plfm/errors.hpp"
#include "plfm/layout.hpp"
#include "plfm/rng.hpp"

namespace plfm::convlstm {

double huber_loss(const Tensor& y_hat, const Tensor& y, const HuberConfig& cfg) {
  if (cfg.delta <= 0) throw DataError("huber: delta must be positive");
  if (!same_shape(y_hat, y)) throw DataError("huber: shape mismatch");
  const double d = cfg.delta;
  double acc = 0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double e = y_hat[i] - y[i];
    const double a = std::abs(e);
    acc += a <= d ? 0.5 * e * e : d * a - 0.5 * d * d;
  }
  return acc / static_cast<double>(y.numel());
}

Tensor huber_grad(const Tensor& y_hat, const Tensor& y, const HuberConfig& cfg) {
  if (cfg.delta <= 0) throw DataError("huber: delta must be positive");
  if (!same_shape(y_hat, y)) throw DataError("huber: shape mismatch");
  const double d = cfg.delta;
  const double scale = 1.0 / static_cast<double>(y.numel());
  Tensor g(y.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double e = y_hat[i] - y[i];
    g[i] = (std::abs(e) <= d ? e : d * (e > 0 ? 1.0 : -1.0)) * scale;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Cell

CellParams::CellParams(int in_ch_, int hid_ch_, int kernel_, int height_, int width_,
                       bool peephole_, const std::string& name)
    : wxf({hid_ch_, in_ch_, kernel_, kernel_}, name + ".wxf"),
      whf({hid_ch_, hid_ch_, kernel_, kernel_}, name + ".whf"),
      wxc({hid_ch_, in_ch_, kernel_, kernel_}, name + ".wxc"),
      whc({hid_ch_, hid_ch_, kernel_, kernel_}, name + ".whc"),
      wxi({hid_ch_, in_ch_, kernel_, kernel_}, name + ".wxi"),
      whi({hid_ch_, hid_ch_, kernel_, kernel_}, name + ".whi"),
      wxo({hid_ch_, in_ch_, kernel_, kernel_}, name + ".wxo"),
      who({hid_ch_, hid_ch_, kernel_, kernel_}, name + ".who"),
      pf({hid_ch_, height_, width_}, name + ".pf"),
      pi({hid_ch_, height_, width_}, name + ".pi"),
      po({hid_ch_, height_, width_}, name + ".po"),
      bf({hid_ch_}, name + ".bf"),
      bc({hid_ch_}, name + ".bc"),
      bi({hid_ch_}, name + ".bi"),
      bo({hid_ch_}, name + ".bo"),
      in_ch(in_ch_),
      hid_ch(hid_ch_),
      kernel(kernel_),
      height(height_),
      width(width_),
      peephole(peephole_) {
  if (kernel % 2 == 0) throw DataError("convlstm: kernel size must be odd");
}

void CellParams::init(std::mt19937_64& rng) {
  for (nn::Param* p : {&wxf, &wxc, &wxi, &wxo})
    nn::init_uniform_fanin(p->value, in_ch * kernel * kernel, rng);
  for (nn::Param* p : {&whf, &whc, &whi, &who})
    nn::init_uniform_fanin(p->value, hid_ch * kernel * kernel, rng);
  if (peephole)
    for (nn::Param* p : {&pf, &pi, &po}) nn::init_uniform_fanin(p->value, hid_ch, rng);
  bf.value.fill(1.0);  // open forget gate at the start
  bc.value.fill(0.0);
  bi.value.fill(0.0);
  bo.value.fill(0.0);
}

void CellParams::collect(nn::ParamRefs& out) {
  for (nn::Param* p : {&wxf, &whf, &wxc, &whc, &wxi, &whi, &wxo, &who}) out.push_back(p);
  if (peephole)
    for (nn::Param* p : {&pf, &pi, &po}) out.push_back(p);
  for (nn::Param* p : {&bf, &bc, &bi, &bo}) out.push_back(p);
}

namespace {

/// acts += peep (C,H,W) broadcast over the batch, elementwise with state.
void add_peephole(Tensor& acts, const Tensor& peep, const Tensor& state) {
  const int n = acts.dim(0);
  const int64_t plane = peep.numel();
  for (int i = 0; i < n; ++i) {
    double* a = acts.data() + static_cast<int64_t>(i) * plane;
    const double* s = state.data() + static_cast<int64_t>(i) * plane;
    for (int64_t j = 0; j < plane; ++j) a[j] += peep[j] * s[j];
  }
}

/// gpeep += sum over batch of gate_grad * state.
void accum_peephole_grad(Tensor& gpeep, const Tensor& gate_grad, const Tensor& state) {
  const int n = gate_grad.dim(0);
  const int64_t plane = gpeep.numel();
  for (int i = 0; i < n; ++i) {
    const double* g = gate_grad.data() + static_cast<int64_t>(i) * plane;
    const double* s = state.data() + static_cast<int64_t>(i) * plane;
    for (int64_t j = 0; j < plane; ++j) gpeep[j] += g[j] * s[j];
  }
}

/// out += peep (C,H,W) * grad, broadcast over batch.
void add_peephole_to_grad(Tensor& out, const Tensor& peep, const Tensor& grad) {
  const int n = out.dim(0);
  const int64_t plane = peep.numel();
  for (int i = 0; i < n; ++i) {
    double* o = out.data() + static_cast<int64_t>(i) * plane;
    const double* g = grad.data() + static_cast<int64_t>(i) * plane;
    for (int64_t j = 0; j < plane; ++j) o[j] += peep[j] * g[j];
  }
}

void add_bias(Tensor& acts, const Tensor& bias) {
  const int n = acts.dim(0), c = acts.dim(1);
  const int64_t plane = static_cast<int64_t>(acts.dim(2)) * acts.dim(3);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      double* a = acts.data() + (static_cast<int64_t>(i) * c + ch) * plane;
      for (int64_t j = 0; j < plane; ++j) a[j] += bias[ch];
    }
}

}  // namespace

CellState cell_step(const Tensor& x, const CellState& prev, const CellParams& p,
                    StepCache* cache) {
  if (x.rank() != 4 || x.dim(1) != p.in_ch)
    throw DataError("convlstm: input shape mismatch, expected " + std::to_string(p.in_ch) +
                    " channels");
  if (x.dim(2) != p.height || x.dim(3) != p.width)
    throw DataError("convlstm: spatial size mismatch with cell parameters");
  const int pad = p.kernel / 2;

  Tensor af = nn::conv2d(x, p.wxf.value, nullptr, 1, pad);
  af += nn::conv2d(prev.h, p.whf.value, nullptr, 1, pad);
  add_bias(af, p.bf.value);
  if (p.peephole) add_peephole(af, p.pf.value, prev.c);
  const Tensor f = nn::sigmoid(af);

  Tensor ac = nn::conv2d(x, p.wxc.value, nullptr, 1, pad);
  ac += nn::conv2d(prev.h, p.whc.value, nullptr, 1, pad);
  add_bias(ac, p.bc.value);
  const Tensor tanh_cstar = nn::tanh_t(ac);

  Tensor ai = nn::conv2d(x, p.wxi.value, nullptr, 1, pad);
  ai += nn::conv2d(prev.h, p.whi.value, nullptr, 1, pad);
  add_bias(ai, p.bi.value);
  if (p.peephole) add_peephole(ai, p.pi.value, prev.c);
  const Tensor i = nn::sigmoid(ai);

  Tensor c(prev.c.shape());
  for (int64_t j = 0; j < c.numel(); ++j)
    c[j] = f[j] * prev.c[j] + i[j] * tanh_cstar[j];

  Tensor ao = nn::conv2d(x, p.wxo.value, nullptr, 1, pad);
  ao += nn::conv2d(prev.h, p.who.value, nullptr, 1, pad);
  add_bias(ao, p.bo.value);
  if (p.peephole) add_peephole(ao, p.po.value, c);  // output gate peeks at the new state
  const Tensor o = nn::sigmoid(ao);

  const Tensor tanh_c = nn::tanh_t(c);
  Tensor h(c.shape());
  for (int64_t j = 0; j < h.numel(); ++j) h[j] = o[j] * tanh_c[j];

  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->f = f;
    cache->i = i;
    cache->o = o;
    cache->tanh_cstar = tanh_cstar;
    cache->c = c;
    cache->tanh_c = tanh_c;
  }
  return {h, c};
}

StepGrads cell_backward(const Tensor& gh, const Tensor& gc_in, const StepCache& cache,
                        CellParams& p) {
  const int pad = p.kernel / 2;
  const int64_t n = gh.numel();

  Tensor go_pre(gh.shape());
  for (int64_t j = 0; j < n; ++j)
    go_pre[j] = gh[j] * cache.tanh_c[j] * cache.o[j] * (1.0 - cache.o[j]);

  Tensor gc(gh.shape());
  for (int64_t j = 0; j < n; ++j)
    gc[j] = gc_in[j] + gh[j] * cache.o[j] * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
  if (p.peephole) add_peephole_to_grad(gc, p.po.value, go_pre);

  Tensor gf_pre(gh.shape()), gi_pre(gh.shape()), gcs_pre(gh.shape());
  for (int64_t j = 0; j < n; ++j) {
    gf_pre[j] = gc[j] * cache.c_prev[j] * cache.f[j] * (1.0 - cache.f[j]);
    gi_pre[j] = gc[j] * cache.tanh_cstar[j] * cache.i[j] * (1.0 - cache.i[j]);
    gcs_pre[j] = gc[j] * cache.i[j] * (1.0 - cache.tanh_cstar[j] * cache.tanh_cstar[j]);
  }

  Tensor gc_prev(gh.shape());
  for (int64_t j = 0; j < n; ++j) gc_prev[j] = gc[j] * cache.f[j];
  if (p.peephole) {
    add_peephole_to_grad(gc_prev, p.pf.value, gf_pre);
    add_peephole_to_grad(gc_prev, p.pi.value, gi_pre);
    accum_peephole_grad(p.pf.grad, gf_pre, cache.c_prev);
    accum_peephole_grad(p.pi.grad, gi_pre, cache.c_prev);
    accum_peephole_grad(p.po.grad, go_pre, cache.c);
  }

  nn::conv2d_grad_weights(cache.x, gf_pre, p.wxf.grad, &p.bf.grad, 1, pad);
  nn::conv2d_grad_weights(cache.x, gcs_pre, p.wxc.grad, &p.bc.grad, 1, pad);
  nn::conv2d_grad_weights(cache.x, gi_pre, p.wxi.grad, &p.bi.grad, 1, pad);
  nn::conv2d_grad_weights(cache.x, go_pre, p.wxo.grad, &p.bo.grad, 1, pad);
  nn::conv2d_grad_weights(cache.h_prev, gf_pre, p.whf.grad, nullptr, 1, pad);
  nn::conv2d_grad_weights(cache.h_prev, gcs_pre, p.whc.grad, nullptr, 1, pad);
  nn::conv2d_grad_weights(cache.h_prev, gi_pre, p.whi.grad, nullptr, 1, pad);
  nn::conv2d_grad_weights(cache.h_prev, go_pre, p.who.grad, nullptr, 1, pad);

  const int h = cache.x.dim(2), w = cache.x.dim(3);
  Tensor gx = nn::conv2d_grad_input(gf_pre, p.wxf.value, 1, pad, h, w);
  gx += nn::conv2d_grad_input(gcs_pre, p.wxc.value, 1, pad, h, w);
  gx += nn::conv2d_grad_input(gi_pre, p.wxi.value, 1, pad, h, w);
  gx += nn::conv2d_grad_input(go_pre, p.wxo.value, 1, pad, h, w);

  Tensor gh_prev = nn::conv2d_grad_input(gf_pre, p.whf.value, 1, pad, h, w);
  gh_prev += nn::conv2d_grad_input(gcs_pre, p.whc.value, 1, pad, h, w);
  gh_prev += nn::conv2d_grad_input(gi_pre, p.whi.value, 1, pad, h, w);
  gh_prev += nn::conv2d_grad_input(go_pre, p.who.value, 1, pad, h, w);

  return {std::move(gx), std::move(gh_prev), std::move(gc_prev)};
}

// ---------------------------------------------------------------------------
// Stacked model

namespace {

Tensor stack_time(const std::vector<Tensor>& frames) {
  const int t = static_cast<int>(frames.size());
  const int n = frames[0].dim(0), c = frames[0].dim(1), h = frames[0].dim(2), w = frames[0].dim(3);
  Tensor out({t * n, c, h, w});
  for (int k = 0; k < t; ++k)
    std::copy(frames[static_cast<size_t>(k)].data(),
              frames[static_cast<size_t>(k)].data() + frames[0].numel(),
              out.data() + static_cast<int64_t>(k) * frames[0].numel());
  return out;
}

std::vector<Tensor> split_time(const Tensor& stacked, int t) {
  const int n = stacked.dim(0) / t, c = stacked.dim(1), h = stacked.dim(2), w = stacked.dim(3);
  std::vector<Tensor> frames;
  frames.reserve(static_cast<size_t>(t));
  for (int k = 0; k < t; ++k) {
    Tensor f({n, c, h, w});
    std::copy(stacked.data() + static_cast<int64_t>(k) * f.numel(),
              stacked.data() + static_cast<int64_t>(k + 1) * f.numel(), f.data());
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace

Model::Model(const ModelConfig& cfg_, uint64_t seed)
    : cfg(cfg_), out_conv(cfg_.hidden.back(), 3, 1, 1, 0, "out") {
  auto rng = make_rng(seed, "convlstm.init");
  int in_ch = cfg.input_ch;
  int h = cfg.height, w = cfg.width;
  for (size_t l = 0; l < cfg.hidden.size(); ++l) {
    layer_h_.push_back(h);
    layer_w_.push_back(w);
    layers.emplace_back(in_ch, cfg.hidden[l], cfg.kernel, h, w, cfg.peephole,
                        "layer" + std::to_string(l));
    layers.back().init(rng);
    norms.emplace_back(cfg.hidden[l], "norm" + std::to_string(l));
    in_ch = cfg.hidden[l];
    if (cfg.pooling && l + 1 < cfg.hidden.size()) {
      h /= 2;
      w /= 2;
    }
  }
  out_conv.init(rng);
}

nn::ParamRefs Model::params() {
  nn::ParamRefs refs;
  for (auto& layer : layers) layer.collect(refs);
  for (auto& norm : norms) norm.collect(refs);
  out_conv.collect(refs);
  return refs;
}

Tensor Model::forward(const Tensor& seq, bool train) {
  if (seq.rank() != 5) throw DataError("convlstm: expected (T,N,C,H,W) sequence");
  const int t = seq.dim(0), n = seq.dim(1);
  if (t != cfg.seq_len)
    throw CompatError("convlstm: sequence length " + std::to_string(t) + " != configured " +
                      std::to_string(cfg.seq_len));
  last_n_ = n;
  caches_.assign(layers.size(), {});
  pools_.assign(layers.size(), {});

  std::vector<Tensor> frames = split_time(
      seq.reshaped({t * n, seq.dim(2), seq.dim(3), seq.dim(4)}), t);

  for (size_t l = 0; l < layers.size(); ++l) {
    CellState state{Tensor({n, layers[l].hid_ch, layer_h_[l], layer_w_[l]}),
                    Tensor({n, layers[l].hid_ch, layer_h_[l], layer_w_[l]})};
    caches_[l].resize(static_cast<size_t>(t));
    std::vector<Tensor> hs;
    hs.reserve(static_cast<size_t>(t));
    for (int k = 0; k < t; ++k) {
      state = cell_step(frames[static_cast<size_t>(k)], state, layers[l],
                        train ? &caches_[l][static_cast<size_t>(k)] : nullptr);
      hs.push_back(state.h);
    }
    const Tensor normed = norms[l].forward(stack_time(hs), train);
    frames = split_time(normed, t);
    if (cfg.pooling && l + 1 < layers.size()) {
      pools_[l].resize(static_cast<size_t>(t));
      for (int k = 0; k < t; ++k)
        frames[static_cast<size_t>(k)] = pools_[l][static_cast<size_t>(k)].forward(
            frames[static_cast<size_t>(k)]);
    }
  }

  Tensor last = frames.back();
  if (cfg.pooling && (last.dim(2) != cfg.height || last.dim(3) != cfg.width))
    last = nn::upsample_bilinear(last, cfg.height, cfg.width);
  return out_act.forward(out_conv.forward(last, train));
}

void Model::backward(const Tensor& gy) {
  const int t = cfg.seq_len;
  Tensor g = out_conv.backward(out_act.backward(gy));
  if (cfg.pooling && (layer_h_.back() != cfg.height || layer_w_.back() != cfg.width))
    g = nn::upsample_bilinear_grad(g, layer_h_.back(), layer_w_.back());

  // Gradient of each layer's output sequence; only the last frame of the top
  // layer is consumed directly, the rest couple through batch-norm statistics
  // and the recurrence.
  std::vector<Tensor> gseq;
  for (int k = 0; k < t; ++k)
    gseq.push_back(k == t - 1 ? g
                              : Tensor({g.dim(0), g.dim(1), g.dim(2), g.dim(3)}));

  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    if (cfg.pooling && static_cast<size_t>(l) + 1 < layers.size())
      for (int k = 0; k < t; ++k)
        gseq[static_cast<size_t>(k)] =
            pools_[static_cast<size_t>(l)][static_cast<size_t>(k)].backward(
                gseq[static_cast<size_t>(k)]);

    const Tensor gstacked = norms[static_cast<size_t>(l)].backward(stack_time(gseq));
    gseq = split_time(gstacked, t);

    Tensor gh_carry({last_n_, layers[static_cast<size_t>(l)].hid_ch,
                     layer_h_[static_cast<size_t>(l)], layer_w_[static_cast<size_t>(l)]});
    Tensor gc_carry(gh_carry.shape());
    std::vector<Tensor> gx(static_cast<size_t>(t));
    for (int k = t - 1; k >= 0; --k) {
      Tensor gh = gseq[static_cast<size_t>(k)];
      gh += gh_carry;
      StepGrads grads = cell_backward(gh, gc_carry, caches_[static_cast<size_t>(l)][static_cast<size_t>(k)],
                                      layers[static_cast<size_t>(l)]);
      gh_carry = std::move(grads.gh_prev);
      gc_carry = std::move(grads.gc_prev);
      gx[static_cast<size_t>(k)] = std::move(grads.gx);
    }
    gseq = std::move(gx);
  }
}

nn::Archive Model::to_archive() const {
  nn::Archive a;
  a.meta["kind"] = "convlstm";
  a.meta["input_ch"] = std::to_string(cfg.input_ch);
  std::string hidden;
  for (size_t i = 0; i < cfg.hidden.size(); ++i)
    hidden += (i ? "," : "") + std::to_string(cfg.hidden[i]);
  a.meta["hidden"] = hidden;
  a.meta["kernel"] = std::to_string(cfg.kernel);
  a.meta["peephole"] = cfg.peephole ? "1" : "0";
  a.meta["pooling"] = cfg.pooling ? "1" : "0";
  a.meta["height"] = std::to_string(cfg.height);
  a.meta["width"] = std::to_string(cfg.width);
  a.meta["seq_len"] = std::to_string(cfg.seq_len);

  Model& self = const_cast<Model&>(*this);
  for (nn::Param* p : self.params()) a.tensors[p->name] = p->value;
  for (size_t l = 0; l < norms.size(); ++l) {
    a.tensors["norm" + std::to_string(l) + ".running_mean"] = norms[l].running_mean;
    a.tensors["norm" + std::to_string(l) + ".running_var"] = norms[l].running_var;
  }
  return a;
}

Model Model::from_archive(const nn::Archive& a) {
  ModelConfig cfg;
  const auto get = [&](const std::string& key) {
    auto it = a.meta.find(key);
    if (it == a.meta.end()) throw CompatError("convlstm: archive missing meta key " + key);
    return it->second;
  };
  cfg.input_ch = std::stoi(get("input_ch"));
  cfg.hidden.clear();
  std::istringstream hs(get("hidden"));
  std::string tok;
  while (std::getline(hs, tok, ',')) cfg.hidden.push_back(std::stoi(tok));
  cfg.kernel = std::stoi(get("kernel"));
  cfg.peephole = get("peephole") == "1";
  cfg.pooling = get("pooling") == "1";
  cfg.height = std::stoi(get("height"));
  cfg.width = std::stoi(get("width"));
  cfg.seq_len = std::stoi(get("seq_len"));

  Model model(cfg, 0);
  for (nn::Param* p : model.params()) {
    auto it = a.tensors.find(p->name);
    if (it == a.tensors.end()) throw CompatError("convlstm: archive missing tensor " + p->name);
    if (it->second.shape() != p->value.shape())
      throw CompatError("convlstm: tensor shape mismatch for " + p->name);
    p->value = it->second;
  }
  for (size_t l = 0; l < model.norms.size(); ++l) {
    const std::string base = "norm" + std::to_string(l);
    if (auto it = a.tensors.find(base + ".running_mean"); it != a.tensors.end())
      model.norms[l].running_mean = it->second;
    if (auto it = a.tensors.find(base + ".running_var"); it != a.tensors.end())
      model.norms[l].running_var = it->second;
  }
  return model;
}

data::OpticalImage convlstm_forward(const data::TemporalSequence& seq, Model& model) {
  if (static_cast<int>(seq.frames.size()) != model.cfg.seq_len)
    throw CompatError("convlstm: sequence of " + std::to_string(seq.frames.size()) +
                      " frames, model expects " + std::to_string(model.cfg.seq_len));
  const int h = seq.frames[0].height(), w = seq.frames[0].width();
  if (h != model.cfg.height || w != model.cfg.width)
    throw CompatError("convlstm: frame size mismatch with model");
  const int t = model.cfg.seq_len;
  Tensor in({t, 1, 3, h, w});
  for (int k = 0; k < t; ++k) {
    const Tensor chw = hwc_to_chw(seq.frames[static_cast<size_t>(k)].values);
    std::copy(chw.data(), chw.data() + chw.numel(),
              in.data() + static_cast<int64_t>(k) * chw.numel());
  }
  const Tensor out = model.forward(in, false);
  data::OpticalImage img;
  img.values = chw_to_hwc(slice_batch(out, 0));
  img.range = data::Range::Unit;
  return img;
}

// ---------------------------------------------------------------------------
// Training

namespace {

double eval_loss(Model& model, const std::vector<Sample>& samples, const HuberConfig& hc,
                 int batch_size) {
  double acc = 0;
  int64_t count = 0;
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
    const int n = static_cast<int>(end - start);
    const auto& s0 = samples[start];
    const int t = s0.seq.dim(0), c = s0.seq.dim(1), h = s0.seq.dim(2), w = s0.seq.dim(3);
    Tensor seq({t, n, c, h, w});
    Tensor target({n, 3, h, w});
    for (int i = 0; i < n; ++i) {
      const Sample& s = samples[start + static_cast<size_t>(i)];
      for (int k = 0; k < t; ++k)
        std::copy(s.seq.data() + static_cast<int64_t>(k) * c * h * w,
                  s.seq.data() + static_cast<int64_t>(k + 1) * c * h * w,
                  seq.data() + ((static_cast<int64_t>(k) * n + i) * c) * h * w);
      std::copy(s.target.data(), s.target.data() + s.target.numel(),
                target.data() + static_cast<int64_t>(i) * s.target.numel());
    }
    const Tensor out = model.forward(seq, false);
    acc += huber_loss(out, target, hc) * static_cast<double>(n);
    count += n;
  }
  return acc / static_cast<double>(count);
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw DataError("convlstm: empty training set");
  const std::vector<Sample>& val = val_set.empty() ? train_set : val_set;
  const HuberConfig hc{cfg.delta, cfg.batch_size};

  nn::Adam adam(model.params(), cfg.lr);
  TrainResult result;
  double best_val = 1e300;
  std::map<std::string, Tensor> best_weights;
  int early_wait = 0, plateau_wait = 0;
  double plateau_best = 1e300;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto rng = make_rng(cfg.seed, "convlstm.epoch", static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double train_acc = 0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const int n = static_cast<int>(end - start);
      const auto& s0 = train_set[order[start]];
      const int t = s0.seq.dim(0), c = s0.seq.dim(1), h = s0.seq.dim(2), w = s0.seq.dim(3);
      Tensor seq({t, n, c, h, w});
      Tensor target({n, 3, h, w});
      for (int i = 0; i < n; ++i) {
        const Sample& s = train_set[order[start + static_cast<size_t>(i)]];
        for (int k = 0; k < t; ++k)
          std::copy(s.seq.data() + static_cast<int64_t>(k) * c * h * w,
                    s.seq.data() + static_cast<int64_t>(k + 1) * c * h * w,
                    seq.data() + ((static_cast<int64_t>(k) * n + i) * c) * h * w);
        std::copy(s.target.data(), s.target.data() + s.target.numel(),
                  target.data() + static_cast<int64_t>(i) * s.target.numel());
      }
      adam.zero_grad();
      const Tensor out = model.forward(seq, true);
      train_acc += huber_loss(out, target, hc) * n;
      seen += n;
      model.backward(huber_grad(out, target, hc));
      adam.step();
    }

    const double train_loss = train_acc / static_cast<double>(seen);
    const double val_loss = eval_loss(model, val, hc, cfg.batch_size);
    result.history.push_back({epoch, train_loss, val_loss, adam.lr()});

    if (val_loss < best_val) {
      best_val = val_loss;
      result.best_epoch = epoch;
      best_weights = model.to_archive().tensors;
      early_wait = 0;
    } else if (++early_wait > cfg.early_patience) {
      break;
    }
    if (val_loss < plateau_best - 1e-12) {
      plateau_best = val_loss;
      plateau_wait = 0;
    } else if (++plateau_wait > cfg.plateau_patience) {
      adam.set_lr(adam.lr() * cfg.plateau_factor);
      plateau_wait = 0;
    }
  }

  if (!best_weights.empty()) {
    for (nn::Param* p : model.params()) {
      if (auto it = best_weights.find(p->name); it != best_weights.end()) p->value = it->second;
    }
    for (size_t l = 0; l < model.norms.size(); ++l) {
      const std::string base = "norm" + std::to_string(l);
      if (auto it = best_weights.find(base + ".running_mean"); it != best_weights.end())
        model.norms[l].running_mean = it->second;
      if (auto it = best_weights.find(base + ".running_var"); it != best_weights.end())
        model.norms[l].running_var = it->second;
    }
  }
  result.best_val = best_val;
  return result;
}

}  // namespace plfm::convlstm
