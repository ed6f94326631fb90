#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "plfm/errors.hpp"
#include "plfm/head.hpp"
#include "plfm/layout.hpp"
#include "test_util.hpp"

using namespace plfm;
using namespace plfm::head;

namespace {

HeadConfig small_cfg() {
  HeadConfig cfg;
  cfg.classes = 16;
  cfg.depth = 2;
  cfg.base_filters = 8;
  return cfg;
}

}  // namespace

TEST_CASE("quantize: endpoints, midpoint, and the round-trip identity") {
  data::OpticalImage img(1, 1);
  img.values.at(0, 0, 0) = 0.0;
  img.values.at(0, 0, 1) = 1.0;
  img.values.at(0, 0, 2) = 0.5;
  const Tensor q = quantize_targets(img, 256);
  CHECK(q.at(0, 0, 0) == 0.0);
  CHECK(q.at(0, 0, 1) == 255.0);
  CHECK(q.at(0, 0, 2) == 128.0);
  CHECK_THROWS_AS(quantize_targets(img, 1), DataError);

  for (int classes : {2, 16, 256})
    for (int c = 0; c < classes; ++c) {
      data::OpticalImage probe(1, 1);
      probe.values.fill(dequantize(c, classes));
      CHECK(quantize_targets(probe, classes).at(0, 0, 0) == static_cast<double>(c));
    }
}

TEST_CASE("quantize/dequantize round trip stays within half a class width") {
  std::mt19937_64 rng(31);
  const auto img = testutil::random_optical(8, 8, rng);
  const Tensor q = quantize_targets(img, 16);
  double worst = 0;
  for (int64_t i = 0; i < q.numel(); ++i)
    worst = std::max(worst, std::abs(dequantize(static_cast<int>(q[i]), 16) - img.values[i]));
  CHECK(worst <= 1.0 / 32 + 1e-12);
}

TEST_CASE("head_forward produces a valid class volume") {
  HeadModel model(small_cfg(), 16, 16, 1);
  std::mt19937_64 rng(2);
  const Tensor f_k = testutil::random_tensor({16, 16, 2}, rng, 0.0, 1.0);
  const data::ClassVolume vol = head_forward(f_k, model);
  CHECK(vol.height() == 16);
  CHECK(vol.width() == 16);
  CHECK(vol.classes() == 16);
  CHECK(data::validate_volume(vol).ok());
}

TEST_CASE("uniform logits give the uniform distribution") {
  HeadModel model(small_cfg(), 16, 16, 3);
  for (nn::Param* p : model.params()) p->value.fill(0.0);
  std::mt19937_64 rng(4);
  const Tensor f_k = testutil::random_tensor({16, 16, 2}, rng, 0.0, 1.0);
  const data::ClassVolume vol = head_forward(f_k, model);
  for (int64_t i = 0; i < vol.probs.numel(); ++i)
    CHECK(vol.probs[i] == doctest::Approx(1.0 / 16).epsilon(1e-9));
}

TEST_CASE("cross entropy: one-hot hit is zero, uniform is log|C|, monotone in mass") {
  data::ClassVolume m;
  m.probs = Tensor({2, 2, 8});
  Tensor targets({2, 2});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      m.probs.at(y, x, 3) = 1.0;
      targets.at(y, x) = 3;
    }
  CHECK(cross_entropy(m, targets) == doctest::Approx(0.0));

  m.probs.fill(1.0 / 8);
  CHECK(cross_entropy(m, targets) == doctest::Approx(std::log(8.0)).epsilon(1e-12));

  // moving probability mass toward the target class reduces the loss
  data::ClassVolume better = m;
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      better.probs.at(y, x, 3) += 0.2;
      better.probs.at(y, x, 5) -= 0.2;
    }
  CHECK(cross_entropy(better, targets) < cross_entropy(m, targets));

  targets.at(0, 0) = 9;
  CHECK_THROWS_AS(cross_entropy(m, targets), DataError);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 5; ++inst) {
    Tensor logits = testutil::random_tensor({2, 6, 3, 3}, rng, -2.0, 2.0);
    Tensor targets({2, 3, 3});
    for (int64_t i = 0; i < targets.numel(); ++i)
      targets[i] = static_cast<double>(rng() % 6);
    Tensor g;
    softmax_ce_loss(logits, targets, &g);
    std::mt19937_64 pick(inst);
    for (int rep = 0; rep < 15; ++rep) {
      const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(logits.numel()));
      const double fd = testutil::fd_grad(
          logits, idx, [&]() { return softmax_ce_loss(logits, targets, nullptr); }, 1e-6);
      CHECK(testutil::rel_err(g[idx], fd, 1e-7) < 1e-5);
    }
  }
}

TEST_CASE("reconstruct_channel: dequantized argmax with low-class tie break") {
  data::ClassVolume m;
  m.probs = Tensor({2, 2, 16});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) m.probs.at(y, x, 5) = 1.0;
  const Tensor img = reconstruct_channel(m);
  for (int64_t i = 0; i < img.numel(); ++i) CHECK(img[i] == doctest::Approx(0.34375));

  data::ClassVolume tie;
  tie.probs = Tensor({1, 1, 4});
  tie.probs.at(0, 0, 1) = 0.5;
  tie.probs.at(0, 0, 2) = 0.5;
  CHECK(reconstruct_channel(tie).at(0, 0) == doctest::Approx(dequantize(1, 4)));
}

TEST_CASE("argmax reconstruction is invariant to positive logit scaling") {
  HeadModel model(small_cfg(), 16, 16, 6);
  std::mt19937_64 rng(7);
  const Tensor f_k = testutil::random_tensor({16, 16, 2}, rng, 0.0, 1.0);
  const data::ClassVolume base = head_forward(f_k, model);
  const Tensor img1 = reconstruct_channel(base);

  data::ClassVolume scaled = base;  // softmax(a*logits) keeps the argmax order
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      double z = 0;
      for (int k = 0; k < 16; ++k) {
        scaled.probs.at(y, x, k) = std::pow(base.probs.at(y, x, k), 3.0);
        z += scaled.probs.at(y, x, k);
      }
      for (int k = 0; k < 16; ++k) scaled.probs.at(y, x, k) /= z;
    }
  CHECK(testutil::bitwise_equal(img1, reconstruct_channel(scaled)));
}

TEST_CASE("head model gradients match finite differences") {
  HeadConfig cfg = small_cfg();
  cfg.classes = 4;
  cfg.base_filters = 4;
  cfg.depth = 1;
  HeadModel model(cfg, 8, 8, 8);
  std::mt19937_64 rng(9);
  const Tensor x = testutil::random_tensor({2, 2, 8, 8}, rng);
  Tensor targets({2, 8, 8});
  for (int64_t i = 0; i < targets.numel(); ++i) targets[i] = static_cast<double>(rng() % 4);

  nn::ParamRefs refs = model.params();
  for (nn::Param* p : refs) p->zero_grad();
  const Tensor logits = model.forward_logits(x, true);
  Tensor glogits;
  softmax_ce_loss(logits, targets, &glogits);
  model.backward(glogits);

  const auto loss = [&]() {
    return softmax_ce_loss(model.forward_logits(x, true), targets, nullptr);
  };
  std::mt19937_64 pick(10);
  for (nn::Param* p : refs) {
    const Tensor analytic = p->grad;
    for (int rep = 0; rep < 2; ++rep) {
      const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(p->value.numel()));
      const double fd = testutil::fd_grad(p->value, idx, loss);
      CHECK(testutil::rel_err(analytic[idx], fd, 1e-6) < 1e-3);
    }
  }
}

TEST_CASE("training on perfect embeddings reaches high pixel accuracy") {
  HeadConfig cfg = small_cfg();
  cfg.epochs = 600;
  cfg.batch_size = 1;
  cfg.seed = 11;
  HeadModel model(cfg, 16, 16, 11);

  std::mt19937_64 rng(12);
  std::vector<Triple> triples;
  for (int i = 0; i < 4; ++i) {
    Triple t;
    t.target = testutil::random_optical(16, 16, rng);
    // quantization-aligned targets keep the task exactly representable
    for (int64_t j = 0; j < t.target.values.numel(); ++j)
      t.target.values[j] =
          dequantize(static_cast<int>(t.target.values[j] * 16) % 16, 16);
    t.y_hat = t.target;
    t.z_hat = t.target;
    triples.push_back(std::move(t));
  }
  const TrainResult res = train_head(model, triples, cfg);
  REQUIRE(res.history.size() == static_cast<size_t>(cfg.epochs) + 1);
  CHECK(res.history[0].loss == doctest::Approx(std::log(16.0)).epsilon(0.25));
  CHECK(res.history.back().accuracy > 0.95);
}

TEST_CASE("plfm_infer equals the manual composition bitwise") {
  convlstm::ModelConfig fcfg;
  fcfg.hidden = {4};
  fcfg.height = 16;
  fcfg.width = 16;
  cgan::GeneratorConfig gcfg;
  gcfg.depth = 2;
  gcfg.base_filters = 4;
  HeadConfig hcfg = small_cfg();

  PLFMModels models{convlstm::Model(fcfg, 21), cgan::UNetGenerator(gcfg, 16, 16, 22),
                    HeadModel(hcfg, 16, 16, 23)};

  std::mt19937_64 rng(24);
  data::TemporalSequence seq;
  for (int t = 0; t < 3; ++t) {
    seq.frames.push_back(testutil::random_optical(16, 16, rng));
    seq.timestamps.push_back(t);
  }
  data::SARImage sar(16, 16);
  for (int64_t i = 0; i < sar.values.numel(); ++i)
    sar.values[i] = std::uniform_real_distribution<double>(0, 1)(rng);

  const data::OpticalImage composed = plfm_infer(seq, sar, models);
  CHECK(composed.height() == 16);
  for (int64_t i = 0; i < composed.values.numel(); ++i) {
    CHECK(composed.values[i] >= 0.0);
    CHECK(composed.values[i] <= 1.0);
  }

  const data::OpticalImage y_hat = convlstm::convlstm_forward(seq, models.forecaster);
  const data::OpticalImage z_hat = cgan::generator_forward(sar, models.generator, false);
  const data::FeatureMap f = data::concat_embeddings(z_hat, y_hat);
  data::OpticalImage manual(16, 16);
  for (int k = 1; k <= 3; ++k) {
    const Tensor ch = reconstruct_channel(head_forward(data::channel_pair(f, k), models.head));
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) manual.values.at(y, x, k - 1) = ch.at(y, x);
  }
  CHECK(testutil::bitwise_equal(composed.values, manual.values));

  // repeated inference is deterministic
  const data::OpticalImage again = plfm_infer(seq, sar, models);
  CHECK(testutil::bitwise_equal(composed.values, again.values));
}

TEST_CASE("incompatible branch sizes are rejected with a named dimension") {
  convlstm::ModelConfig fcfg;
  fcfg.hidden = {4};
  fcfg.height = 16;
  fcfg.width = 16;
  cgan::GeneratorConfig gcfg;
  gcfg.depth = 2;
  gcfg.base_filters = 4;
  PLFMModels models{convlstm::Model(fcfg, 1), cgan::UNetGenerator(gcfg, 32, 32, 2),
                    HeadModel(small_cfg(), 16, 16, 3)};
  CHECK_THROWS_AS(models.check_compatible(), CompatError);
}
