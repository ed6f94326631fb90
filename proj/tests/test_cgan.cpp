#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "plfm/cgan.hpp"
#include "plfm/errors.hpp"
#include "plfm/layout.hpp"
#include "test_util.hpp"

using namespace plfm;
using namespace plfm::cgan;

namespace {

GeneratorConfig small_gcfg() {
  GeneratorConfig cfg;
  cfg.depth = 3;
  cfg.base_filters = 8;
  return cfg;
}

DiscriminatorConfig small_dcfg() {
  DiscriminatorConfig cfg;
  cfg.base_filters = 8;
  return cfg;
}

}  // namespace

TEST_CASE("generator: SAR in, three-band optical out, unit range") {
  UNetGenerator g(small_gcfg(), 64, 64, 1);
  data::SARImage sar(64, 64);
  std::mt19937_64 rng(2);
  for (int64_t i = 0; i < sar.values.numel(); ++i)
    sar.values[i] = std::uniform_real_distribution<double>(0, 1)(rng);
  const data::OpticalImage out = generator_forward(sar, g, false);
  CHECK(out.height() == 64);
  CHECK(out.width() == 64);
  CHECK(out.bands() == 3);
  for (int64_t i = 0; i < out.values.numel(); ++i) {
    CHECK(out.values[i] >= 0.0);
    CHECK(out.values[i] <= 1.0);
  }
}

TEST_CASE("generator eval mode is deterministic, train mode draws noise") {
  UNetGenerator g(small_gcfg(), 32, 32, 3);
  std::mt19937_64 rng(4);
  const Tensor x = testutil::random_tensor({1, 1, 32, 32}, rng);
  const Tensor a = g.forward(x, false);
  const Tensor b = g.forward(x, false);
  CHECK(testutil::bitwise_equal(a, b));
  const Tensor c = g.forward(x, true);
  const Tensor d = g.forward(x, true);
  CHECK(testutil::max_abs_diff(c, d) > 1e-9);
}

TEST_CASE("generator rejects sizes not divisible by the stage count") {
  UNetGenerator g(small_gcfg(), 32, 32, 5);
  std::mt19937_64 rng(6);
  const Tensor bad = testutil::random_tensor({1, 1, 24, 24}, rng);
  CHECK_THROWS_AS(g.forward(bad, false), CompatError);
}

TEST_CASE("generator gradients match finite differences") {
  GeneratorConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 4;
  cfg.dropout = 0.0;  // freeze the noise for determinism
  UNetGenerator g(cfg, 8, 8, 7);
  std::mt19937_64 rng(8);
  const Tensor x = testutil::random_tensor({2, 1, 8, 8}, rng);
  const Tensor probe = testutil::random_tensor({2, 3, 8, 8}, rng);

  nn::ParamRefs refs = g.params();
  for (nn::Param* p : refs) p->zero_grad();
  const Tensor y = g.forward(x, true);
  g.backward(probe);

  const auto loss = [&]() {
    const Tensor out = g.forward(x, true);
    double acc = 0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += out[i] * probe[i];
    return acc;
  };
  std::mt19937_64 pick(9);
  for (nn::Param* p : refs) {
    const Tensor analytic = p->grad;
    for (int rep = 0; rep < 2; ++rep) {
      const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(p->value.numel()));
      const double fd = testutil::fd_grad(p->value, idx, loss);
      CHECK(testutil::rel_err(analytic[idx], fd, 1e-6) < 1e-3);
    }
  }
}

TEST_CASE("discriminator: patch grid arithmetic and probability range") {
  DiscriminatorConfig cfg = small_dcfg();
  PatchDiscriminator d(cfg, 4, 64, 64, 11, "d");
  CHECK(d.receptive_field() >= d.patch_target_used());
  std::mt19937_64 rng(12);
  const Tensor xz = testutil::random_tensor({2, 4, 64, 64}, rng);
  const Tensor logits = d.forward_logits(xz, false);
  CHECK(logits.dim(1) == 1);
  CHECK(logits.dim(2) == 64 / (1 << d.strided_stages()));
  CHECK(logits.dim(3) == 64 / (1 << d.strided_stages()));

  data::SARImage sar(64, 64);
  data::OpticalImage opt(64, 64);
  for (int64_t i = 0; i < sar.values.numel(); ++i) sar.values[i] = 0.3;
  for (int64_t i = 0; i < opt.values.numel(); ++i) opt.values[i] = 0.6;
  const Tensor probs = discriminator_forward(sar, opt, d);
  for (int64_t i = 0; i < probs.numel(); ++i) {
    CHECK(probs[i] > 0.0);
    CHECK(probs[i] < 1.0);
  }
  const Tensor probs2 = discriminator_forward(sar, opt, d);
  CHECK(testutil::bitwise_equal(probs, probs2));
}

TEST_CASE("discriminator at full scale sizes itself to the 70x70 target") {
  DiscriminatorConfig cfg;
  cfg.base_filters = 4;
  PatchDiscriminator d(cfg, 4, 256, 256, 13, "d");
  CHECK(d.patch_target_used() == 70);
  CHECK(d.receptive_field() >= 70);
}

TEST_CASE("cgan_losses: L1 vanishes when the target equals the generation") {
  UNetGenerator g(small_gcfg(), 16, 16, 14);
  PatchDiscriminator d1(small_dcfg(), 4, 16, 16, 15, "d1");
  PatchDiscriminator d2(small_dcfg(), 4, 16, 16, 16, "d2");
  std::mt19937_64 rng(17);
  const Tensor sar = testutil::random_tensor({2, 1, 16, 16}, rng);
  // feed the generator's own eval output as ground truth: both streams see
  // identical SAR so both generations equal the "optical" batch exactly
  const Tensor fake = g.forward(sar, false);
  const LossBundle bundle = cgan_losses(sar, sar, fake, g, d1, d2, small_dcfg());
  CHECK(bundle.g_l1_loss == 0.0);
  CHECK(bundle.g_total == doctest::Approx(bundle.g_adv_loss));
}

TEST_CASE("cgan_losses: a 0.5-everywhere discriminator scores ln 4 per stream") {
  UNetGenerator g(small_gcfg(), 16, 16, 18);
  PatchDiscriminator d1(small_dcfg(), 4, 16, 16, 19, "d1");
  PatchDiscriminator d2(small_dcfg(), 4, 16, 16, 20, "d2");
  for (PatchDiscriminator* d : {&d1, &d2})
    for (nn::Param* p : d->params()) p->value.fill(0.0);  // logits 0 -> sigmoid 0.5

  std::mt19937_64 rng(21);
  const Tensor sar = testutil::random_tensor({2, 1, 16, 16}, rng);
  const Tensor opt = testutil::random_tensor({2, 3, 16, 16}, rng);
  const LossBundle bundle = cgan_losses(sar, sar, opt, g, d1, d2, small_dcfg());
  CHECK(bundle.d1_loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(bundle.d2_loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("gamma weights: zeroing a stream makes its discriminator irrelevant") {
  UNetGenerator g(small_gcfg(), 16, 16, 22);
  PatchDiscriminator d1(small_dcfg(), 4, 16, 16, 23, "d1");
  PatchDiscriminator d2(small_dcfg(), 4, 16, 16, 24, "d2");
  std::mt19937_64 rng(25);
  const Tensor sar = testutil::random_tensor({2, 1, 16, 16}, rng);
  const Tensor sim = testutil::random_tensor({2, 1, 16, 16}, rng);
  const Tensor opt = testutil::random_tensor({2, 3, 16, 16}, rng);

  DiscriminatorConfig cfg = small_dcfg();
  cfg.gamma1 = 1.0;
  cfg.gamma2 = 0.0;
  const LossBundle before = cgan_losses(sar, sim, opt, g, d1, d2, cfg);
  for (nn::Param* p : d2.params())
    for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 0.3;  // perturb D2
  const LossBundle after = cgan_losses(sar, sim, opt, g, d1, d2, cfg);
  CHECK(before.g_total == doctest::Approx(after.g_total).epsilon(1e-12));
  CHECK(before.g_adv_loss == doctest::Approx(after.g_adv_loss).epsilon(1e-12));

  cfg.gamma2 = 0.5;  // now the weights no longer sum to one
  CHECK_THROWS_AS(cgan_losses(sar, sim, opt, g, d1, d2, cfg), DataError);
}

TEST_CASE("two-stream objective degenerates to the single-discriminator form") {
  UNetGenerator g(small_gcfg(), 16, 16, 26);
  PatchDiscriminator d1(small_dcfg(), 4, 16, 16, 27, "d");
  PatchDiscriminator d2 = d1;  // identical weights
  std::mt19937_64 rng(28);
  const Tensor sar = testutil::random_tensor({2, 1, 16, 16}, rng);
  const Tensor opt = testutil::random_tensor({2, 3, 16, 16}, rng);

  DiscriminatorConfig cfg = small_dcfg();
  cfg.gamma1 = 1.0;
  cfg.gamma2 = 0.0;
  // simulated stream duplicates the real stream: Eq-5 objective emerges
  const LossBundle two = cgan_losses(sar, sar, opt, g, d1, d2, cfg);
  const Tensor fake = g.forward(sar, false);
  double adv = 0;
  {
    Tensor xz({2, 4, 16, 16});
    for (int i = 0; i < 2; ++i) {
      std::copy(sar.data() + i * 256, sar.data() + (i + 1) * 256, xz.data() + i * 4 * 256);
      std::copy(fake.data() + i * 3 * 256, fake.data() + (i + 1) * 3 * 256,
                xz.data() + i * 4 * 256 + 256);
    }
    const Tensor logits = d1.forward_logits(xz, false);
    for (int64_t i = 0; i < logits.numel(); ++i)
      adv += std::log1p(std::exp(-logits[i])) + (logits[i] < 0 ? -logits[i] : 0.0);
    // stable softplus(-z)
    adv = 0;
    for (int64_t i = 0; i < logits.numel(); ++i) {
      const double z = logits[i];
      adv += z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    }
    adv /= static_cast<double>(logits.numel());
  }
  double l1 = 0;
  for (int64_t i = 0; i < fake.numel(); ++i) l1 += std::abs(fake[i] - opt[i]);
  l1 /= static_cast<double>(fake.numel());
  CHECK(two.g_total == doctest::Approx(adv + cfg.lambda_l1 * l1).epsilon(1e-9));
}

TEST_CASE("simulated pairs: zero optical gives zero SAR, single band out") {
  std::vector<data::OpticalImage> optical = {data::OpticalImage(8, 8)};
  const auto sars = simulate_training_pairs(optical, 1, 5);
  REQUIRE(sars.size() == 1);
  CHECK(sars[0].bands() == 1);
  for (int64_t i = 0; i < sars[0].values.numel(); ++i) CHECK(sars[0].values[i] == 0.0);
}

TEST_CASE("training: losses stay finite and the bundle decomposition is exact") {
  GeneratorConfig gcfg;
  gcfg.depth = 2;
  gcfg.base_filters = 6;
  UNetGenerator g(gcfg, 16, 16, 30);
  DiscriminatorConfig dcfg = small_dcfg();
  PatchDiscriminator d1(dcfg, 4, 16, 16, 31, "d1");
  PatchDiscriminator d2(dcfg, 4, 16, 16, 32, "d2");

  std::mt19937_64 rng(33);
  std::vector<Pair> pairs;
  for (int i = 0; i < 2; ++i) {
    Pair p;
    p.optical = testutil::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    p.sar = testutil::random_tensor({1, 16, 16}, rng, 0.0, 1.0);
    pairs.push_back(std::move(p));
  }
  TrainConfig tcfg;
  tcfg.steps = 25;
  tcfg.batch_size = 2;
  tcfg.seed = 3;
  const TrainResult res = train_cgan(g, d1, d2, pairs, dcfg, tcfg);
  REQUIRE(res.history.size() == 25);
  for (const StepRow& row : res.history) {
    CHECK(std::isfinite(row.losses.g_total));
    CHECK(std::isfinite(row.losses.d1_loss));
    CHECK(row.losses.g_total ==
          row.losses.g_adv_loss + dcfg.lambda_l1 * row.losses.g_l1_loss);
  }
}

TEST_CASE("pure-L1 ablation converges monotonically after smoothing") {
  GeneratorConfig gcfg;
  gcfg.depth = 2;
  gcfg.base_filters = 6;
  gcfg.dropout = 0.0;
  UNetGenerator g(gcfg, 16, 16, 34);
  DiscriminatorConfig dcfg = small_dcfg();
  PatchDiscriminator d1(dcfg, 4, 16, 16, 35, "d1");
  PatchDiscriminator d2(dcfg, 4, 16, 16, 36, "d2");

  std::mt19937_64 rng(37);
  std::vector<Pair> pairs;
  for (int i = 0; i < 2; ++i) {
    Pair p;
    p.optical = testutil::random_tensor({3, 16, 16}, rng, 0.2, 0.8);
    p.sar = testutil::random_tensor({1, 16, 16}, rng, 0.0, 1.0);
    pairs.push_back(std::move(p));
  }
  TrainConfig tcfg;
  tcfg.steps = 150;
  tcfg.batch_size = 2;
  tcfg.adversarial = false;
  tcfg.seed = 4;
  const TrainResult res = train_cgan(g, d1, d2, pairs, dcfg, tcfg);
  const auto window = [&](int from, int to) {
    double acc = 0;
    for (int i = from; i < to; ++i) acc += res.history[static_cast<size_t>(i)].losses.g_l1_loss;
    return acc / (to - from);
  };
  const double early = window(0, 50), mid = window(50, 100), late = window(100, 150);
  CHECK(mid < early);
  CHECK(late < mid);
  for (const StepRow& row : res.history) CHECK(row.losses.g_adv_loss == 0.0);
}

TEST_CASE("generator checkpoints round-trip bitwise") {
  UNetGenerator g(small_gcfg(), 16, 16, 38);
  std::mt19937_64 rng(39);
  const Tensor x = testutil::random_tensor({1, 1, 16, 16}, rng);
  const Tensor before = g.forward(x, false);
  const auto path = std::filesystem::temp_directory_path() / "plfm_test_cgan" / "g.bin";
  std::filesystem::remove_all(path.parent_path());
  nn::save_archive(path, g.to_archive());
  UNetGenerator loaded = UNetGenerator::from_archive(nn::load_archive(path));
  CHECK(testutil::bitwise_equal(before, loaded.forward(x, false)));
}
