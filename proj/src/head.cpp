#include "plfm/head.hpp"

#include <algorithm>
#include <cmath>

#include "plfm/errors.hpp"
#include "plfm/layout.hpp"
#include "plfm/rng.hpp"

namespace plfm::head {

Tensor quantize_targets(const data::OpticalImage& img, int classes) {
  if (classes < 2) throw DataError("quantize: need at least 2 classes");
  const int h = img.height(), w = img.width(), b = img.bands();
  Tensor out({h, w, b});
  for (int64_t i = 0; i < out.numel(); ++i) {
    const int cls = static_cast<int>(img.values[i] * classes);
    out[i] = static_cast<double>(std::clamp(cls, 0, classes - 1));
  }
  return out;
}

double dequantize(int cls, int classes) {
  return (static_cast<double>(cls) + 0.5) / static_cast<double>(classes);
}

// ---------------------------------------------------------------------------
// Model

HeadModel::HeadModel(const HeadConfig& cfg_, int height_, int width_, uint64_t seed)
    : cfg(cfg_),
      height(height_),
      width(width_),
      stem_(2, cfg_.base_filters, 3, 1, 1, "stem"),
      out_(2 * cfg_.base_filters, cfg_.classes, 3, 1, 1, "out") {
  if (height % (1 << cfg.depth) != 0 || width % (1 << cfg.depth) != 0)
    throw DataError("head: image size must be divisible by 2^" + std::to_string(cfg.depth));
  auto rng = make_rng(seed, "head.init");
  stem_.init(rng);
  int c = cfg.base_filters;
  for (int i = 0; i < cfg.depth; ++i) {
    enc_.emplace_back(c, 2 * c, 4, 2, 1, "enc" + std::to_string(i));
    enc_.back().init(rng);
    enc_bn_.emplace_back(2 * c, "enc" + std::to_string(i) + ".bn");
    enc_act_.emplace_back();
    c *= 2;
  }
  for (int i = 0; i < cfg.depth; ++i) {
    // decoder input is the previous stage (or bottleneck) concatenated output
    const int in_ch = i == 0 ? c : c * 2;
    dec_.emplace_back(in_ch, c / 2, 4, 2, 1, "dec" + std::to_string(i));
    dec_.back().init(rng);
    dec_bn_.emplace_back(c / 2, "dec" + std::to_string(i) + ".bn");
    dec_act_.emplace_back();
    c /= 2;
  }
  out_.init(rng);
}

nn::ParamRefs HeadModel::params() {
  nn::ParamRefs refs;
  stem_.collect(refs);
  for (auto& l : enc_) l.collect(refs);
  for (auto& l : enc_bn_) l.collect(refs);
  for (auto& l : dec_) l.collect(refs);
  for (auto& l : dec_bn_) l.collect(refs);
  out_.collect(refs);
  return refs;
}

namespace {

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

}  // namespace

Tensor HeadModel::forward_logits(const Tensor& x, bool train) {
  if (x.dim(1) != 2) throw DataError("head: expected a 2-channel pair input");
  if (x.dim(2) != height || x.dim(3) != width)
    throw CompatError("head: input size mismatch with model");
  skips_.clear();
  Tensor h = stem_act_.forward(stem_.forward(x, train));
  skips_.push_back(h);
  for (int i = 0; i < cfg.depth; ++i) {
    h = enc_act_[static_cast<size_t>(i)].forward(
        enc_bn_[static_cast<size_t>(i)].forward(enc_[static_cast<size_t>(i)].forward(h, train), train));
    if (i + 1 < cfg.depth) skips_.push_back(h);
  }
  for (int i = 0; i < cfg.depth; ++i) {
    Tensor in = i == 0 ? h : concat_ch(h, skips_[static_cast<size_t>(cfg.depth - i)]);
    h = dec_act_[static_cast<size_t>(i)].forward(
        dec_bn_[static_cast<size_t>(i)].forward(dec_[static_cast<size_t>(i)].forward(in, train), train));
  }
  return out_.forward(concat_ch(h, skips_[0]), train);
}

void HeadModel::backward(const Tensor& glogits) {
  Tensor g = out_.backward(glogits);
  Tensor gstem_skip;
  {
    Tensor gh;
    split_ch(g, g.dim(1) / 2, gh, gstem_skip);
    g = std::move(gh);
  }
  std::vector<Tensor> gskips(static_cast<size_t>(cfg.depth - 1));
  for (int i = cfg.depth - 1; i >= 0; --i) {
    g = dec_[static_cast<size_t>(i)].backward(
        dec_bn_[static_cast<size_t>(i)].backward(dec_act_[static_cast<size_t>(i)].backward(g)));
    if (i > 0) {
      Tensor gh, gs;
      split_ch(g, g.dim(1) - skips_[static_cast<size_t>(cfg.depth - i)].dim(1), gh, gs);
      gskips[static_cast<size_t>(cfg.depth - i - 1)] = std::move(gs);
      g = std::move(gh);
    }
  }
  for (int i = cfg.depth - 1; i >= 0; --i) {
    if (i + 1 < cfg.depth) g += gskips[static_cast<size_t>(i)];
    g = enc_[static_cast<size_t>(i)].backward(
        enc_bn_[static_cast<size_t>(i)].backward(enc_act_[static_cast<size_t>(i)].backward(g)));
  }
  g += gstem_skip;
  stem_.backward(stem_act_.backward(g));
}

nn::Archive HeadModel::to_archive() const {
  nn::Archive a;
  a.meta["kind"] = "head";
  a.meta["classes"] = std::to_string(cfg.classes);
  a.meta["depth"] = std::to_string(cfg.depth);
  a.meta["base_filters"] = std::to_string(cfg.base_filters);
  a.meta["height"] = std::to_string(height);
  a.meta["width"] = std::to_string(width);
  HeadModel& self = const_cast<HeadModel&>(*this);
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

HeadModel HeadModel::from_archive(const nn::Archive& a) {
  const auto get = [&](const std::string& key) {
    auto it = a.meta.find(key);
    if (it == a.meta.end()) throw CompatError("head: archive missing meta key " + key);
    return it->second;
  };
  HeadConfig cfg;
  cfg.classes = std::stoi(get("classes"));
  cfg.depth = std::stoi(get("depth"));
  cfg.base_filters = std::stoi(get("base_filters"));
  HeadModel m(cfg, std::stoi(get("height")), std::stoi(get("width")), 0);
  for (nn::Param* p : m.params()) {
    auto it = a.tensors.find(p->name);
    if (it == a.tensors.end()) throw CompatError("head: archive missing tensor " + p->name);
    if (it->second.shape() != p->value.shape())
      throw CompatError("head: tensor shape mismatch for " + p->name);
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
  load_bn(m.enc_bn_);
  load_bn(m.dec_bn_);
  return m;
}

// ---------------------------------------------------------------------------
// Losses and reconstruction

data::ClassVolume head_forward(const Tensor& f_k, HeadModel& model) {
  if (f_k.rank() != 3 || f_k.dim(2) != 2) throw DataError("head: channel pair must be (H,W,2)");
  const Tensor chw = hwc_to_chw(f_k);
  Tensor in({1, 2, f_k.dim(0), f_k.dim(1)});
  std::copy(chw.data(), chw.data() + chw.numel(), in.data());
  const Tensor logits = model.forward_logits(in, false);

  const int c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  data::ClassVolume vol;
  vol.probs = Tensor({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double peak = -1e300;
      for (int k = 0; k < c; ++k) peak = std::max(peak, logits.at(0, k, y, x));
      double z = 0;
      for (int k = 0; k < c; ++k) z += std::exp(logits.at(0, k, y, x) - peak);
      for (int k = 0; k < c; ++k)
        vol.probs.at(y, x, k) = std::exp(logits.at(0, k, y, x) - peak) / z;
    }
  return vol;
}

double cross_entropy(const data::ClassVolume& m, const Tensor& targets) {
  const int h = m.height(), w = m.width(), c = m.classes();
  if (targets.rank() != 2 || targets.dim(0) != h || targets.dim(1) != w)
    throw DataError("cross_entropy: target grid shape mismatch");
  double acc = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int cls = static_cast<int>(targets.at(y, x));
      if (cls < 0 || cls >= c)
        throw DataError("cross_entropy: target class " + std::to_string(cls) + " out of range");
      acc += -std::log(std::max(m.probs.at(y, x, cls), 1e-12));
    }
  return acc / (static_cast<double>(h) * w);
}

double softmax_ce_loss(const Tensor& logits, const Tensor& targets, Tensor* glogits) {
  const int n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const double count = static_cast<double>(n) * h * w;
  if (glogits) *glogits = Tensor({n, c, h, w});
  double acc = 0;
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double peak = -1e300;
        for (int k = 0; k < c; ++k) peak = std::max(peak, logits.at(i, k, y, x));
        double z = 0;
        for (int k = 0; k < c; ++k) z += std::exp(logits.at(i, k, y, x) - peak);
        const int cls = static_cast<int>(targets.at(i, y, x));
        if (cls < 0 || cls >= c)
          throw DataError("cross_entropy: target class out of range");
        const double logp = logits.at(i, cls, y, x) - peak - std::log(z);
        acc += -logp;
        if (glogits)
          for (int k = 0; k < c; ++k) {
            const double p = std::exp(logits.at(i, k, y, x) - peak) / z;
            glogits->at(i, k, y, x) = (p - (k == cls ? 1.0 : 0.0)) / count;
          }
      }
  return acc / count;
}

Tensor reconstruct_channel(const data::ClassVolume& m) {
  const int h = m.height(), w = m.width(), c = m.classes();
  Tensor out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_p = m.probs.at(y, x, 0);
      for (int k = 1; k < c; ++k)
        if (m.probs.at(y, x, k) > best_p) {  // strict: ties keep the lowest class
          best_p = m.probs.at(y, x, k);
          best = k;
        }
      out.at(y, x) = dequantize(best, c);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

/// Expand triples into (channel-pair input, class-target) samples, k = 1..3.
struct PairSample {
  Tensor input;   // (2, H, W)
  Tensor target;  // (H, W)
};

std::vector<PairSample> expand_triples(const std::vector<Triple>& triples, int classes) {
  std::vector<PairSample> out;
  out.reserve(triples.size() * 3);
  for (const Triple& t : triples) {
    const data::FeatureMap f = data::concat_embeddings(t.z_hat, t.y_hat);
    const Tensor targets = quantize_targets(t.target, classes);
    for (int k = 1; k <= 3; ++k) {
      PairSample s;
      s.input = hwc_to_chw(data::channel_pair(f, k));
      s.target = Tensor({targets.dim(0), targets.dim(1)});
      for (int y = 0; y < targets.dim(0); ++y)
        for (int x = 0; x < targets.dim(1); ++x) s.target.at(y, x) = targets.at(y, x, k - 1);
      out.push_back(std::move(s));
    }
  }
  return out;
}

double eval_pass(HeadModel& model, const std::vector<PairSample>& samples, int batch,
                 double* accuracy) {
  double loss_acc = 0;
  int64_t correct = 0, total = 0, seen = 0;
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch)) {
    const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch));
    const int n = static_cast<int>(end - start);
    const int h = samples[0].input.dim(1), w = samples[0].input.dim(2);
    Tensor in({n, 2, h, w}), tg({n, h, w});
    for (int i = 0; i < n; ++i) {
      const PairSample& s = samples[start + static_cast<size_t>(i)];
      std::copy(s.input.data(), s.input.data() + s.input.numel(),
                in.data() + static_cast<int64_t>(i) * s.input.numel());
      std::copy(s.target.data(), s.target.data() + s.target.numel(),
                tg.data() + static_cast<int64_t>(i) * s.target.numel());
    }
    const Tensor logits = model.forward_logits(in, false);
    loss_acc += softmax_ce_loss(logits, tg, nullptr) * n;
    seen += n;
    const int c = logits.dim(1);
    for (int i = 0; i < n; ++i)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          int best = 0;
          double bp = logits.at(i, 0, y, x);
          for (int k = 1; k < c; ++k)
            if (logits.at(i, k, y, x) > bp) {
              bp = logits.at(i, k, y, x);
              best = k;
            }
          correct += best == static_cast<int>(tg.at(i, y, x)) ? 1 : 0;
          ++total;
        }
  }
  if (accuracy) *accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0;
  return loss_acc / static_cast<double>(seen);
}

}  // namespace

TrainResult train_head(HeadModel& model, const std::vector<Triple>& triples,
                       const HeadConfig& cfg) {
  if (triples.empty()) throw DataError("head: empty training set");
  for (const Triple& t : triples)
    if (!same_shape(t.y_hat.values, t.z_hat.values) ||
        !same_shape(t.y_hat.values, t.target.values))
      throw DataError("head: triple shapes disagree");

  const std::vector<PairSample> samples = expand_triples(triples, cfg.classes);
  nn::Adam adam(model.params(), cfg.lr);

  TrainResult result;
  double acc0 = 0;
  const double loss0 = eval_pass(model, samples, cfg.batch_size * 3, &acc0);
  result.history.push_back({0, loss0, acc0});

  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  // one batch = cfg.batch_size couples = 3x that in channel-pair samples
  const int batch = cfg.batch_size * 3;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto rng = make_rng(cfg.seed, "head.epoch", static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_acc = 0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(batch));
      const int n = static_cast<int>(end - start);
      const int h = samples[0].input.dim(1), w = samples[0].input.dim(2);
      Tensor in({n, 2, h, w}), tg({n, h, w});
      for (int i = 0; i < n; ++i) {
        const PairSample& s = samples[order[start + static_cast<size_t>(i)]];
        std::copy(s.input.data(), s.input.data() + s.input.numel(),
                  in.data() + static_cast<int64_t>(i) * s.input.numel());
        std::copy(s.target.data(), s.target.data() + s.target.numel(),
                  tg.data() + static_cast<int64_t>(i) * s.target.numel());
      }
      adam.zero_grad();
      const Tensor logits = model.forward_logits(in, true);
      Tensor glogits;
      loss_acc += softmax_ce_loss(logits, tg, &glogits) * n;
      seen += n;
      model.backward(glogits);
      adam.step();
    }
    double acc = 0;
    const double eval_loss = eval_pass(model, samples, batch, &acc);
    (void)eval_loss;
    result.history.push_back({epoch, loss_acc / static_cast<double>(seen), acc});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Composition

void PLFMModels::check_compatible() const {
  if (forecaster.cfg.height != generator.height || forecaster.cfg.width != generator.width)
    throw CompatError("plfm: forecaster " + std::to_string(forecaster.cfg.height) + "x" +
                      std::to_string(forecaster.cfg.width) + " vs generator " +
                      std::to_string(generator.height) + "x" + std::to_string(generator.width));
  if (forecaster.cfg.height != head.height || forecaster.cfg.width != head.width)
    throw CompatError("plfm: head trained at " + std::to_string(head.height) + "x" +
                      std::to_string(head.width) + ", branches at " +
                      std::to_string(forecaster.cfg.height) + "x" +
                      std::to_string(forecaster.cfg.width));
}

data::OpticalImage plfm_infer(const data::TemporalSequence& seq, const data::SARImage& sar,
                              PLFMModels& models) {
  models.check_compatible();
  const data::OpticalImage y_hat = convlstm::convlstm_forward(seq, models.forecaster);
  const data::OpticalImage z_hat = cgan::generator_forward(sar, models.generator, false);
  const data::FeatureMap f = data::concat_embeddings(z_hat, y_hat);

  const int h = f.height(), w = f.width();
  data::OpticalImage out(h, w);
  for (int k = 1; k <= 3; ++k) {
    const data::ClassVolume m = head_forward(data::channel_pair(f, k), models.head);
    const Tensor channel = reconstruct_channel(m);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.values.at(y, x, k - 1) = channel.at(y, x);
  }
  return out;
}

}  // namespace plfm::head
