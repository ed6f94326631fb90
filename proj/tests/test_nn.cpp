#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "plfm/nn.hpp"
#include "plfm/rng.hpp"
#include "test_util.hpp"

using namespace plfm;
using namespace plfm::nn;

namespace {

/// Fixed random projection so the scalar loss exercises every output.
double proj_loss(const Tensor& y, const Tensor& r) {
  double acc = 0;
  for (int64_t i = 0; i < y.numel(); ++i) acc += y[i] * r[i];
  return acc;
}

template <typename Forward>
void check_tensor_grad(Tensor& target, const Tensor& analytic, Forward&& fwd, double tol = 1e-4) {
  std::mt19937_64 pick(123);
  const int64_t n = target.numel();
  const int64_t samples = std::min<int64_t>(n, 40);
  for (int64_t s = 0; s < samples; ++s) {
    const int64_t idx = static_cast<int64_t>(pick() % static_cast<uint64_t>(n));
    const double fd = testutil::fd_grad(target, idx, fwd);
    CHECK(testutil::rel_err(analytic[idx], fd, 1e-6) < tol);
  }
}

}  // namespace

TEST_CASE("conv2d forward matches a direct loop") {
  std::mt19937_64 rng(1);
  const Tensor x = testutil::random_tensor({2, 3, 5, 6}, rng);
  const Tensor w = testutil::random_tensor({4, 3, 3, 3}, rng);
  Tensor b = testutil::random_tensor({4}, rng);
  const Tensor y = conv2d(x, w, &b, 1, 1);
  REQUIRE(y.shape() == std::vector<int>({2, 4, 5, 6}));
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 4; ++oc)
      for (int oy = 0; oy < 5; ++oy)
        for (int ox = 0; ox < 6; ++ox) {
          double acc = b[oc];
          for (int ic = 0; ic < 3; ++ic)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy - 1 + ky, ix = ox - 1 + kx;
                if (iy >= 0 && iy < 5 && ix >= 0 && ix < 6)
                  acc += x.at(n, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
          CHECK(y.at(n, oc, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("Conv2d gradients match finite differences (stride 1 and 2)") {
  for (int stride : {1, 2}) {
    std::mt19937_64 rng(10 + stride);
    Conv2d conv(3, 4, 3, stride, 1, "t");
    conv.init(rng);
    Tensor x = testutil::random_tensor({2, 3, 6, 6}, rng);
    const Tensor r = testutil::random_tensor(
        {2, 4, conv_out_size(6, 3, stride, 1), conv_out_size(6, 3, stride, 1)}, rng);

    conv.w.zero_grad();
    conv.b.zero_grad();
    const Tensor y = conv.forward(x, true);
    Tensor gx = conv.backward(r);

    const auto loss_x = [&]() { return proj_loss(conv2d(x, conv.w.value, &conv.b.value, stride, 1), r); };
    check_tensor_grad(x, gx, loss_x);
    check_tensor_grad(conv.w.value, conv.w.grad, loss_x);
    check_tensor_grad(conv.b.value, conv.b.grad, loss_x);
  }
}

TEST_CASE("ConvTranspose2d gradients match finite differences") {
  std::mt19937_64 rng(21);
  ConvTranspose2d deconv(4, 3, 4, 2, 1, "t");
  deconv.init(rng);
  Tensor x = testutil::random_tensor({2, 4, 4, 4}, rng);
  const Tensor probe = testutil::random_tensor({2, 3, 8, 8}, rng);

  deconv.w.zero_grad();
  deconv.b.zero_grad();
  const Tensor y = deconv.forward(x, true);
  REQUIRE(y.shape() == std::vector<int>({2, 3, 8, 8}));
  Tensor gx = deconv.backward(probe);

  const auto loss = [&]() {
    ConvTranspose2d tmp = deconv;
    return proj_loss(tmp.forward(x, false), probe);
  };
  check_tensor_grad(x, gx, loss);
  check_tensor_grad(deconv.w.value, deconv.w.grad, loss);
  check_tensor_grad(deconv.b.value, deconv.b.grad, loss);
}

TEST_CASE("BatchNorm2d gradients match finite differences in train mode") {
  std::mt19937_64 rng(31);
  Tensor x = testutil::random_tensor({3, 2, 4, 4}, rng);
  const Tensor probe = testutil::random_tensor({3, 2, 4, 4}, rng);

  BatchNorm2d bn(2, "t");
  bn.gamma.value[0] = 1.3;
  bn.gamma.value[1] = 0.8;
  bn.beta.value[0] = -0.2;

  const auto loss = [&]() {
    BatchNorm2d tmp = bn;
    return proj_loss(tmp.forward(x, true), probe);
  };
  bn.gamma.zero_grad();
  bn.beta.zero_grad();
  BatchNorm2d work = bn;
  work.forward(x, true);
  const Tensor gx = work.backward(probe);
  check_tensor_grad(x, gx, loss);
  check_tensor_grad(bn.gamma.value, work.gamma.grad, loss);
  check_tensor_grad(bn.beta.value, work.beta.grad, loss);
}

TEST_CASE("BatchNorm2d eval mode uses running statistics") {
  std::mt19937_64 rng(41);
  BatchNorm2d bn(2, "t");
  const Tensor x = testutil::random_tensor({4, 2, 3, 3}, rng);
  for (int i = 0; i < 50; ++i) bn.forward(x, true);
  const Tensor train_out = bn.forward(x, true);
  const Tensor eval_out = bn.forward(x, false);
  CHECK(testutil::max_abs_diff(train_out, eval_out) < 1e-2);
}

TEST_CASE("activation backward passes match finite differences") {
  std::mt19937_64 rng(51);
  Tensor x = testutil::random_tensor({2, 3, 4, 4}, rng);
  const Tensor probe = testutil::random_tensor({2, 3, 4, 4}, rng);

  {
    Sigmoid act;
    act.forward(x);
    const Tensor gx = act.backward(probe);
    const auto loss = [&]() { return proj_loss(sigmoid(x), probe); };
    check_tensor_grad(x, gx, loss);
  }
  {
    Tanh act;
    act.forward(x);
    const Tensor gx = act.backward(probe);
    const auto loss = [&]() { return proj_loss(tanh_t(x), probe); };
    check_tensor_grad(x, gx, loss);
  }
  {
    LeakyReLU act(0.2);
    act.forward(x);
    const Tensor gx = act.backward(probe);
    for (int64_t i = 0; i < x.numel(); ++i)
      CHECK(gx[i] == doctest::Approx(x[i] > 0 ? probe[i] : 0.2 * probe[i]));
  }
}

TEST_CASE("dropout: train scales kept units, eval is identity") {
  std::mt19937_64 rng(61);
  auto drop_rng = make_rng(0, "droptest");
  Dropout drop(0.5);
  Tensor x = Tensor::full({1, 1, 10, 10}, 1.0);
  const Tensor y = drop.forward(x, true, drop_rng);
  int kept = 0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK((y[i] == 0.0 || y[i] == doctest::Approx(2.0)));
    kept += y[i] != 0.0;
  }
  CHECK(kept > 20);
  CHECK(kept < 80);
  const Tensor eval_y = drop.forward(x, false, drop_rng);
  CHECK(testutil::bitwise_equal(eval_y, x));
}

TEST_CASE("max pool and bilinear upsample gradients") {
  std::mt19937_64 rng(71);
  Tensor x = testutil::random_tensor({1, 2, 6, 6}, rng);
  {
    MaxPool2 pool;
    const Tensor probe = testutil::random_tensor({1, 2, 3, 3}, rng);
    pool.forward(x);
    const Tensor gx = pool.backward(probe);
    const auto loss = [&]() {
      MaxPool2 tmp;
      return proj_loss(tmp.forward(x), probe);
    };
    check_tensor_grad(x, gx, loss);
  }
  {
    const Tensor probe = testutil::random_tensor({1, 2, 12, 12}, rng);
    const Tensor gx = upsample_bilinear_grad(probe, 6, 6);
    const auto loss = [&]() { return proj_loss(upsample_bilinear(x, 12, 12), probe); };
    check_tensor_grad(x, gx, loss);
  }
}

TEST_CASE("adam drives a quadratic to its minimum") {
  Param p({4}, "w");
  p.value.fill(5.0);
  Adam adam({&p}, 0.1);
  for (int it = 0; it < 500; ++it) {
    adam.zero_grad();
    for (int i = 0; i < 4; ++i) p.grad[i] = 2.0 * (p.value[i] - 1.5);
    adam.step();
  }
  for (int i = 0; i < 4; ++i) CHECK(p.value[i] == doctest::Approx(1.5).epsilon(1e-3));
}

TEST_CASE("archive round-trips tensors and metadata") {
  const auto path = std::filesystem::temp_directory_path() / "plfm_test_archive" / "model.bin";
  std::filesystem::remove_all(path.parent_path());
  std::mt19937_64 rng(81);
  Archive a;
  a.meta["kind"] = "test";
  a.meta["note"] = "hello world";
  a.tensors["alpha"] = testutil::random_tensor({2, 3}, rng);
  a.tensors["beta"] = testutil::random_tensor({4}, rng);
  save_archive(path, a);
  const Archive b = load_archive(path);
  CHECK(b.meta.at("kind") == "test");
  CHECK(b.meta.at("note") == "hello world");
  CHECK(testutil::bitwise_equal(a.tensors.at("alpha"), b.tensors.at("alpha")));
  CHECK(testutil::bitwise_equal(a.tensors.at("beta"), b.tensors.at("beta")));
}
