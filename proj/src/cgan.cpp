#include "plfm/cgan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "plfm/dataset.hpp"
#include "plfm/errors.hpp"
#include "plfm/layout.hpp"
#include "plfm/rng.hpp"

namespace plfm::cgan {

namespace {

int fit_depth(int requested, int height, int width) {
  int depth = 1;
  while (depth < requested && (std::min(height, width) >> (depth + 2)) >= 1) ++depth;
  return std::max(2, std::min(depth, requested));
}

Tensor concat_ch(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  Tensor out({n, ca + cb, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy(a.data() + static_cast<int64_t>(i) * ca * plane,
              a.data() + static_cast<int64_t>(i + 1) * ca * plane,
              out.data() + static_cast<int64_t>(i) * (ca + cb) * plane);
    std::copy(b.data() + static_cast<int64_t>(i) * cb * plane,
              b.data() + static_cast<int64_t>(i + 1) * cb * plane,
              out.data() + (static_cast<int64_t>(i) * (ca + cb) + ca) * plane);
  }
  return out;
}

void split_ch(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
  const int n = g.dim(0), c = g.dim(1), h = g.dim(2), w = g.dim(3);
  const int cb = c - ca;
  ga = Tensor({n, ca, h, w});
  gb = Tensor({n, cb, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy(g.data() + static_cast<int64_t>(i) * c * plane,
              g.data() + (static_cast<int64_t>(i) * c + ca) * plane,
              ga.data() + static_cast<int64_t>(i) * ca * plane);
    std::copy(g.data() + (static_cast<int64_t>(i) * c + ca) * plane,
              g.data() + static_cast<int64_t>(i + 1) * c * plane,
              gb.data() + static_cast<int64_t>(i) * cb * plane);
  }
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid_s(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// mean of -log sigmoid(z) over all entries (cross-entropy against label 1).
double bce_vs_one(const Tensor& logits) {
  double acc = 0;
  for (int64_t i = 0; i < logits.numel(); ++i) acc += softplus(-logits[i]);
  return acc / static_cast<double>(logits.numel());
}

/// mean of -log(1 - sigmoid(z)) (cross-entropy against label 0).
double bce_vs_zero(const Tensor& logits) {
  double acc = 0;
  for (int64_t i = 0; i < logits.numel(); ++i) acc += softplus(logits[i]);
  return acc / static_cast<double>(logits.numel());
}

Tensor bce_vs_one_grad(const Tensor& logits) {
  Tensor g(logits.shape());
  const double scale = 1.0 / static_cast<double>(logits.numel());
  for (int64_t i = 0; i < logits.numel(); ++i) g[i] = (sigmoid_s(logits[i]) - 1.0) * scale;
  return g;
}

Tensor bce_vs_zero_grad(const Tensor& logits) {
  Tensor g(logits.shape());
  const double scale = 1.0 / static_cast<double>(logits.numel());
  for (int64_t i = 0; i < logits.numel(); ++i) g[i] = sigmoid_s(logits[i]) * scale;
  return g;
}

double l1_mean(const Tensor& a, const Tensor& b) {
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.numel());
}

void check_gammas(const DiscriminatorConfig& cfg) {
  if (std::abs(cfg.gamma1 + cfg.gamma2 - 1.0) > 1e-9)
    throw DataError("cgan: stream weights must sum to 1");
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

UNetGenerator::UNetGenerator(const GeneratorConfig& cfg_, int height_, int width_, uint64_t seed)
    : cfg(cfg_), height(height_), width(width_), noise_rng_(make_rng(seed, "cgan.noise")) {
  depth_used = fit_depth(cfg.depth, height, width);
  if (height % (1 << depth_used) != 0 || width % (1 << depth_used) != 0)
    throw DataError("cgan: image size must be divisible by 2^" + std::to_string(depth_used));

  auto rng = make_rng(seed, "cgan.g.init");
  const auto filters = [&](int i) { return cfg.base_filters << std::min(i, 3); };
  int in_ch = cfg.in_ch;
  for (int i = 0; i < depth_used; ++i) {
    enc_.emplace_back(in_ch, filters(i), 4, 2, 1, "enc" + std::to_string(i));
    enc_.back().init(rng);
    if (i > 0) enc_bn_.emplace_back(filters(i), "enc" + std::to_string(i) + ".bn");
    enc_act_.emplace_back(0.2);
    in_ch = filters(i);
  }
  for (int i = 0; i < depth_used; ++i) {
    const int d_in = i == 0 ? filters(depth_used - 1) : 2 * filters(depth_used - 1 - i);
    const bool last = i == depth_used - 1;
    const int d_out = last ? cfg.out_ch : filters(depth_used - 2 - i);
    dec_.emplace_back(d_in, d_out, 4, 2, 1, "dec" + std::to_string(i));
    dec_.back().init(rng);
    if (!last) {
      dec_bn_.emplace_back(d_out, "dec" + std::to_string(i) + ".bn");
      dec_drop_.emplace_back(i < 3 ? cfg.dropout : 0.0);
      dec_act_.emplace_back();
    }
  }
}

nn::ParamRefs UNetGenerator::params() {
  nn::ParamRefs refs;
  for (auto& l : enc_) l.collect(refs);
  for (auto& l : enc_bn_) l.collect(refs);
  for (auto& l : dec_) l.collect(refs);
  for (auto& l : dec_bn_) l.collect(refs);
  return refs;
}

Tensor UNetGenerator::forward(const Tensor& x, bool train) {
  if (x.dim(2) != height || x.dim(3) != width)
    throw CompatError("cgan: input " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                      " does not match generator " + std::to_string(height) + "x" +
                      std::to_string(width));
  enc_out_.clear();
  Tensor h = x;
  for (int i = 0; i < depth_used; ++i) {
    h = enc_[static_cast<size_t>(i)].forward(h, train);
    if (i > 0) h = enc_bn_[static_cast<size_t>(i - 1)].forward(h, train);
    h = enc_act_[static_cast<size_t>(i)].forward(h);
    enc_out_.push_back(h);
  }
  for (int i = 0; i < depth_used; ++i) {
    const bool last = i == depth_used - 1;
    Tensor in = i == 0 ? h : concat_ch(h, enc_out_[static_cast<size_t>(depth_used - 1 - i)]);
    h = dec_[static_cast<size_t>(i)].forward(in, train);
    if (!last) {
      h = dec_bn_[static_cast<size_t>(i)].forward(h, train);
      h = dec_drop_[static_cast<size_t>(i)].forward(h, train, noise_rng_);
      h = dec_act_[static_cast<size_t>(i)].forward(h);
    }
  }
  return out_act_.forward(h);
}

void UNetGenerator::backward(const Tensor& gy) {
  Tensor g = out_act_.backward(gy);
  std::vector<Tensor> gskip(static_cast<size_t>(depth_used));
  for (int i = depth_used - 1; i >= 0; --i) {
    const bool last = i == depth_used - 1;
    if (!last) {
      g = dec_act_[static_cast<size_t>(i)].backward(g);
      g = dec_drop_[static_cast<size_t>(i)].backward(g);
      g = dec_bn_[static_cast<size_t>(i)].backward(g);
    }
    g = dec_[static_cast<size_t>(i)].backward(g);
    if (i > 0) {
      Tensor gh, gs;
      split_ch(g, g.dim(1) - enc_out_[static_cast<size_t>(depth_used - 1 - i)].dim(1), gh, gs);
      gskip[static_cast<size_t>(depth_used - 1 - i)] = std::move(gs);
      g = std::move(gh);
    }
  }
  for (int i = depth_used - 1; i >= 0; --i) {
    if (i < depth_used - 1) g += gskip[static_cast<size_t>(i)];
    g = enc_act_[static_cast<size_t>(i)].backward(g);
    if (i > 0) g = enc_bn_[static_cast<size_t>(i - 1)].backward(g);
    g = enc_[static_cast<size_t>(i)].backward(g);
  }
}

nn::Archive UNetGenerator::to_archive() const {
  nn::Archive a;
  a.meta["kind"] = "cgan_generator";
  a.meta["depth"] = std::to_string(cfg.depth);
  a.meta["base_filters"] = std::to_string(cfg.base_filters);
  a.meta["dropout"] = std::to_string(cfg.dropout);
  a.meta["in_ch"] = std::to_string(cfg.in_ch);
  a.meta["out_ch"] = std::to_string(cfg.out_ch);
  a.meta["height"] = std::to_string(height);
  a.meta["width"] = std::to_string(width);
  UNetGenerator& self = const_cast<UNetGenerator&>(*this);
  for (nn::Param* p : self.params()) a.tensors[p->name] = p->value;
  const auto save_bn = [&a](const std::vector<nn::BatchNorm2d>& bns) {
    for (const auto& bn : bns) {
      a.tensors[bn.gamma.name + ".running_mean"] = bn.running_mean;
      a.tensors[bn.gamma.name + ".running_var"] = bn.running_var;
    }
  };
  save_bn(enc_bn_);
  save_bn(dec_bn_);
  return a;
}

UNetGenerator UNetGenerator::from_archive(const nn::Archive& a) {
  const auto get = [&](const std::string& key) {
    auto it = a.meta.find(key);
    if (it == a.meta.end()) throw CompatError("cgan: archive missing meta key " + key);
    return it->second;
  };
  GeneratorConfig cfg;
  cfg.depth = std::stoi(get("depth"));
  cfg.base_filters = std::stoi(get("base_filters"));
  cfg.dropout = std::stod(get("dropout"));
  cfg.in_ch = std::stoi(get("in_ch"));
  cfg.out_ch = std::stoi(get("out_ch"));
  UNetGenerator g(cfg, std::stoi(get("height")), std::stoi(get("width")), 0);
  for (nn::Param* p : g.params()) {
    auto it = a.tensors.find(p->name);
    if (it == a.tensors.end()) throw CompatError("cgan: archive missing tensor " + p->name);
    if (it->second.shape() != p->value.shape())
      throw CompatError("cgan: tensor shape mismatch for " + p->name);
    p->value = it->second;
  }
  const auto load_bn = [&a](std::vector<nn::BatchNorm2d>& bns) {
    for (auto& bn : bns) {
      if (auto it = a.tensors.find(bn.gamma.name + ".running_mean"); it != a.tensors.end())
        bn.running_mean = it->second;
      if (auto it = a.tensors.find(bn.gamma.name + ".running_var"); it != a.tensors.end())
        bn.running_var = it->second;
    }
  };
  load_bn(g.enc_bn_);
  load_bn(g.dec_bn_);
  return g;
}

// ---------------------------------------------------------------------------
// Discriminator

PatchDiscriminator::PatchDiscriminator(const DiscriminatorConfig& cfg, int in_ch, int height,
                                       int width, uint64_t seed, const std::string& name) {
  target_ = std::min(cfg.patch_target, std::max(8, std::min(height, width) / 2));
  const int max_strided = std::max(1, static_cast<int>(std::floor(std::log2(std::min(height, width)))) - 1);
  // receptive field of n strided 4x4 stages plus the two stride-1 3x3 stages
  // below is 7*2^n - 2; pick the smallest stack covering the patch target
  n_strided_ = 1;
  while (7 * (1 << n_strided_) - 2 < target_ && n_strided_ < max_strided) ++n_strided_;
  rf_ = 7 * (1 << n_strided_) - 2;

  auto rng = make_rng(seed, name + ".init");
  const auto filters = [&cfg](int i) { return cfg.base_filters << std::min(i, 3); };
  int c = in_ch;
  for (int i = 0; i < n_strided_; ++i) {
    convs_.emplace_back(c, filters(i), 4, 2, 1, name + ".c" + std::to_string(i));
    convs_.back().init(rng);
    if (i > 0) bns_.emplace_back(filters(i), name + ".c" + std::to_string(i) + ".bn");
    acts_.emplace_back(0.2);
    c = filters(i);
  }
  // stride-1 3x3 tail keeps the patch grid at exactly input/2^n
  convs_.emplace_back(c, filters(n_strided_), 3, 1, 1, name + ".mid");
  convs_.back().init(rng);
  bns_.emplace_back(filters(n_strided_), name + ".mid.bn");
  acts_.emplace_back(0.2);
  convs_.emplace_back(filters(n_strided_), 1, 3, 1, 1, name + ".head");
  convs_.back().init(rng);
}

nn::ParamRefs PatchDiscriminator::params() {
  nn::ParamRefs refs;
  for (auto& l : convs_) l.collect(refs);
  for (auto& l : bns_) l.collect(refs);
  return refs;
}

Tensor PatchDiscriminator::forward_logits(const Tensor& xz, bool train) {
  Tensor h = xz;
  size_t bn = 0;
  for (int i = 0; i < n_strided_; ++i) {
    h = convs_[static_cast<size_t>(i)].forward(h, train);
    if (i > 0) h = bns_[bn++].forward(h, train);
    h = acts_[static_cast<size_t>(i)].forward(h);
  }
  h = convs_[static_cast<size_t>(n_strided_)].forward(h, train);
  h = bns_[bn].forward(h, train);
  h = acts_[static_cast<size_t>(n_strided_)].forward(h);
  return convs_[static_cast<size_t>(n_strided_) + 1].forward(h, train);
}

void PatchDiscriminator::backward(const Tensor& glogits) {
  Tensor g = convs_[static_cast<size_t>(n_strided_) + 1].backward(glogits);
  g = acts_[static_cast<size_t>(n_strided_)].backward(g);
  g = bns_[bns_.size() - 1].backward(g);
  g = convs_[static_cast<size_t>(n_strided_)].backward(g);
  for (int i = n_strided_ - 1; i >= 0; --i) {
    g = acts_[static_cast<size_t>(i)].backward(g);
    if (i > 0) g = bns_[static_cast<size_t>(i - 1)].backward(g);
    g = convs_[static_cast<size_t>(i)].backward(g);
  }
  last_input_grad_ = std::move(g);
}

// ---------------------------------------------------------------------------
// Branch-level wrappers

namespace {
Tensor unit_to_sym(const Tensor& t) {
  Tensor out = t;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] * 2.0 - 1.0;
  return out;
}
Tensor sym_to_unit(const Tensor& t) {
  Tensor out = t;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = (out[i] + 1.0) * 0.5;
  return out;
}
}  // namespace

data::OpticalImage generator_forward(const data::SARImage& x, UNetGenerator& model,
                                     bool train_mode) {
  const Tensor chw = hwc_to_chw(x.values);
  Tensor in({1, 1, x.height(), x.width()});
  std::copy(chw.data(), chw.data() + chw.numel(), in.data());
  const Tensor out = model.forward(unit_to_sym(in), train_mode);
  data::OpticalImage img;
  img.values = chw_to_hwc(slice_batch(sym_to_unit(out), 0));
  img.range = data::Range::Unit;
  return img;
}

Tensor discriminator_forward(const data::SARImage& x, const data::OpticalImage& z,
                             PatchDiscriminator& model) {
  if (x.height() != z.height() || x.width() != z.width())
    throw DataError("cgan: SAR/optical shape mismatch");
  Tensor xs({1, 1, x.height(), x.width()});
  const Tensor xc = hwc_to_chw(x.values);
  std::copy(xc.data(), xc.data() + xc.numel(), xs.data());
  Tensor zs({1, 3, z.height(), z.width()});
  const Tensor zc = hwc_to_chw(z.values);
  std::copy(zc.data(), zc.data() + zc.numel(), zs.data());
  const Tensor logits =
      model.forward_logits(concat_ch(unit_to_sym(xs), unit_to_sym(zs)), false);
  Tensor probs(logits.shape());
  for (int64_t i = 0; i < logits.numel(); ++i) probs[i] = sigmoid_s(logits[i]);
  return probs;
}

LossBundle cgan_losses(const Tensor& real_sar, const Tensor& sim_sar, const Tensor& optical,
                       UNetGenerator& g, PatchDiscriminator& d1, PatchDiscriminator& d2,
                       const DiscriminatorConfig& cfg) {
  check_gammas(cfg);
  LossBundle out;
  const Tensor fake1 = g.forward(sim_sar, false);
  const Tensor fake2 = g.forward(real_sar, false);

  const Tensor d1_real = d1.forward_logits(concat_ch(sim_sar, optical), false);
  const Tensor d1_fake = d1.forward_logits(concat_ch(sim_sar, fake1), false);
  const Tensor d2_real = d2.forward_logits(concat_ch(real_sar, optical), false);
  const Tensor d2_fake = d2.forward_logits(concat_ch(real_sar, fake2), false);

  out.d1_loss = bce_vs_one(d1_real) + bce_vs_zero(d1_fake);
  out.d2_loss = bce_vs_one(d2_real) + bce_vs_zero(d2_fake);
  const double adv1 = bce_vs_one(d1_fake);
  const double adv2 = bce_vs_one(d2_fake);
  out.g_adv_loss = cfg.gamma1 * adv1 + cfg.gamma2 * adv2;
  out.g_l1_loss = 0.5 * (l1_mean(fake1, optical) + l1_mean(fake2, optical));
  out.g_total = out.g_adv_loss + cfg.lambda_l1 * out.g_l1_loss;
  return out;
}

std::vector<data::SARImage> simulate_training_pairs(const std::vector<data::OpticalImage>& optical,
                                                    int looks, uint64_t seed) {
  std::vector<data::SARImage> out;
  out.reserve(optical.size());
  for (size_t i = 0; i < optical.size(); ++i)
    out.push_back(dataset::simulate_sar(dataset::to_grayscale(optical[i]), looks,
                                        derive_seed(seed, "simpair", i)));
  return out;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train_cgan(UNetGenerator& g, PatchDiscriminator& d1, PatchDiscriminator& d2,
                       const std::vector<Pair>& dataset_pairs, const DiscriminatorConfig& dcfg,
                       const TrainConfig& cfg) {
  if (dataset_pairs.empty()) throw DataError("cgan: empty dataset");
  if (cfg.adversarial) check_gammas(dcfg);

  nn::Adam adam_g(g.params(), cfg.lr, cfg.beta1);
  nn::Adam adam_d1(d1.params(), cfg.lr, cfg.beta1);
  nn::Adam adam_d2(d2.params(), cfg.lr, cfg.beta1);

  const int total = static_cast<int>(dataset_pairs.size());
  TrainResult result;

  for (int step = 0; step < cfg.steps; ++step) {
    auto rng = make_rng(cfg.seed, "cgan.step", static_cast<uint64_t>(step));
    const int n = std::min(cfg.batch_size, total);
    std::vector<int> picks(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) picks[static_cast<size_t>(i)] = i;
    std::shuffle(picks.begin(), picks.end(), rng);
    picks.resize(static_cast<size_t>(n));

    const int h = dataset_pairs[0].optical.dim(1), w = dataset_pairs[0].optical.dim(2);
    Tensor real_sar({n, 1, h, w}), optical({n, 3, h, w}), sim_sar({n, 1, h, w});
    for (int i = 0; i < n; ++i) {
      const Pair& p = dataset_pairs[static_cast<size_t>(picks[static_cast<size_t>(i)])];
      std::copy(p.sar.data(), p.sar.data() + p.sar.numel(),
                real_sar.data() + static_cast<int64_t>(i) * p.sar.numel());
      std::copy(p.optical.data(), p.optical.data() + p.optical.numel(),
                optical.data() + static_cast<int64_t>(i) * p.optical.numel());
      // fresh speckle per step keeps the simulated stream an augmentation
      data::OpticalImage opt_img;
      opt_img.values = chw_to_hwc(p.optical);
      const data::SARImage sim = dataset::simulate_sar(
          dataset::to_grayscale(opt_img), cfg.looks,
          derive_seed(cfg.seed, "cgan.sim", static_cast<uint64_t>(step) * 1000003ull +
                                              static_cast<uint64_t>(i)));
      const Tensor sim_chw = hwc_to_chw(sim.values);
      std::copy(sim_chw.data(), sim_chw.data() + sim_chw.numel(),
                sim_sar.data() + static_cast<int64_t>(i) * sim_chw.numel());
    }
    real_sar = unit_to_sym(real_sar);
    optical = unit_to_sym(optical);
    sim_sar = unit_to_sym(sim_sar);

    LossBundle bundle;
    double adv1 = 0, adv2 = 0;

    if (cfg.adversarial) {
      // D1: simulated-SAR stream
      adam_d1.zero_grad();
      const Tensor fake1_detached = g.forward(sim_sar, true);
      Tensor d1_real = d1.forward_logits(concat_ch(sim_sar, optical), true);
      bundle.d1_loss += bce_vs_one(d1_real);
      d1.backward(bce_vs_one_grad(d1_real));
      Tensor d1_fake = d1.forward_logits(concat_ch(sim_sar, fake1_detached), true);
      bundle.d1_loss += bce_vs_zero(d1_fake);
      d1.backward(bce_vs_zero_grad(d1_fake));
      adam_d1.step();

      // D2: real-SAR stream
      adam_d2.zero_grad();
      const Tensor fake2_detached = g.forward(real_sar, true);
      Tensor d2_real = d2.forward_logits(concat_ch(real_sar, optical), true);
      bundle.d2_loss += bce_vs_one(d2_real);
      d2.backward(bce_vs_one_grad(d2_real));
      Tensor d2_fake = d2.forward_logits(concat_ch(real_sar, fake2_detached), true);
      bundle.d2_loss += bce_vs_zero(d2_fake);
      d2.backward(bce_vs_zero_grad(d2_fake));
      adam_d2.step();
    }

    // G step: both streams, adversarial + L1
    adam_g.zero_grad();
    struct Stream {
      const Tensor* sar;
      PatchDiscriminator* d;
      double gamma;
      double* adv;
    };
    Stream streams[2] = {{&sim_sar, &d1, dcfg.gamma1, &adv1}, {&real_sar, &d2, dcfg.gamma2, &adv2}};
    for (const Stream& s : streams) {
      const Tensor fake = g.forward(*s.sar, true);
      Tensor gfake({fake.dim(0), fake.dim(1), fake.dim(2), fake.dim(3)});
      if (cfg.adversarial) {
        const Tensor logits = s.d->forward_logits(concat_ch(*s.sar, fake), true);
        *s.adv = bce_vs_one(logits);
        Tensor glog = bce_vs_one_grad(logits);
        glog *= s.gamma;
        s.d->backward(glog);  // D grads here are discarded at its next zero_grad
        Tensor gsar;
        split_ch(s.d->input_grad(), s.sar->dim(1), gsar, gfake);
      }
      const double l1 = l1_mean(fake, optical);
      bundle.g_l1_loss += 0.5 * l1;
      const double l1_scale = dcfg.lambda_l1 * 0.5 / static_cast<double>(fake.numel());
      for (int64_t i = 0; i < fake.numel(); ++i)
        gfake[i] += (fake[i] > optical[i] ? 1.0 : (fake[i] < optical[i] ? -1.0 : 0.0)) * l1_scale;
      g.backward(gfake);
    }
    adam_g.step();

    bundle.g_adv_loss = dcfg.gamma1 * adv1 + dcfg.gamma2 * adv2;
    bundle.g_total = bundle.g_adv_loss + dcfg.lambda_l1 * bundle.g_l1_loss;
    result.history.push_back({step, bundle});
  }
  return result;
}

}  // namespace plfm::cgan
