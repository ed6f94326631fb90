#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "plfm/errors.hpp"
#include "plfm/image.hpp"
#include "test_util.hpp"

using namespace plfm;
using namespace plfm::data;

TEST_CASE("validate_image accepts the all-zero unit image") {
  OpticalImage img(4, 4);
  CHECK(validate_image(img).ok());
}

TEST_CASE("validate_image flags out-of-range values") {
  OpticalImage img(4, 4);
  img.values.at(1, 2, 0) = 1.5;
  const auto rep = validate_image(img);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].find("range") != std::string::npos);
}

TEST_CASE("validate_image flags non-RGB band counts") {
  OpticalImage img;
  img.values = Tensor({4, 4, 2});
  const auto rep = validate_image(img);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].find("band") != std::string::npos);
}

TEST_CASE("SAR invariants: single polarization, nonnegative amplitudes") {
  SARImage sar(4, 4);
  CHECK(validate_image(sar).ok());
  sar.values.at(0, 0, 0) = -0.1;
  CHECK_FALSE(validate_image(sar).ok());

  SARImage two_pol;
  two_pol.values = Tensor({4, 4, 2});
  CHECK_FALSE(validate_image(two_pol).ok());
}

TEST_CASE("normalize maps range endpoints") {
  OpticalImage img(1, 1);
  img.range = Range::Byte;
  img.values.fill(255.0);
  CHECK(normalize(img, Range::Unit).values[0] == doctest::Approx(1.0));

  OpticalImage half(1, 1);
  half.values.fill(0.5);
  CHECK(normalize(half, Range::Symmetric).values[0] == doctest::Approx(0.0));

  OpticalImage quarter(1, 1);
  quarter.values.fill(0.25);
  CHECK(normalize(quarter, Range::Byte).values[0] == doctest::Approx(63.75));
}

TEST_CASE("normalize round-trips within 1e-6 between all range pairs") {
  std::mt19937_64 rng(7);
  const Range tags[] = {Range::Unit, Range::Symmetric, Range::Byte};
  for (Range from : tags)
    for (Range to : tags) {
      auto img = testutil::random_optical(6, 5, rng);
      img.range = Range::Unit;
      auto a = normalize(img, from);
      auto b = normalize(normalize(a, to), from);
      for (int64_t i = 0; i < a.values.numel(); ++i)
        CHECK(std::abs(a.values[i] - b.values[i]) < 1e-6);
    }
}

TEST_CASE("unknown range tag is rejected") {
  CHECK_THROWS_AS(parse_range("percent"), DataError);
}

TEST_CASE("concat_embeddings stacks translation channels first") {
  OpticalImage z(2, 2), y(2, 2);
  z.values.fill(1.0);
  const FeatureMap f = concat_embeddings(z, y);
  CHECK(f.depth() == 6);
  for (int c = 0; c < 3; ++c) {
    CHECK(f.values.at(0, 0, c) == 1.0);
    CHECK(f.values.at(0, 0, c + 3) == 0.0);
  }
}

TEST_CASE("channel_pair returns the per-color slices") {
  OpticalImage z(2, 2), y(2, 2);
  z.values.fill(1.0);
  const FeatureMap f = concat_embeddings(z, y);
  const Tensor pair = channel_pair(f, 2);
  CHECK(pair.dim(2) == 2);
  CHECK(pair.at(0, 0, 0) == 1.0);
  CHECK(pair.at(0, 0, 1) == 0.0);
  CHECK_THROWS_AS(channel_pair(f, 4), DataError);
  CHECK_THROWS_AS(channel_pair(f, 0), DataError);
}

TEST_CASE("concat then slice reproduces the inputs exactly") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = testutil::random_optical(5, 7, rng);
    const auto y = testutil::random_optical(5, 7, rng);
    const FeatureMap f = concat_embeddings(z, y);
    for (int k = 1; k <= 3; ++k) {
      const Tensor pair = channel_pair(f, k);
      for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 7; ++xx) {
          CHECK(pair.at(yy, xx, 0) == z.values.at(yy, xx, k - 1));
          CHECK(pair.at(yy, xx, 1) == y.values.at(yy, xx, k - 1));
        }
    }
  }
}

TEST_CASE("concat rejects mismatched inputs") {
  OpticalImage z(2, 2), y(3, 2);
  CHECK_THROWS_AS(concat_embeddings(z, y), DataError);
  OpticalImage y2(2, 2);
  y2.range = Range::Symmetric;
  CHECK_THROWS_AS(concat_embeddings(z, y2), DataError);
}

TEST_CASE("sequence validation checks order and shape agreement") {
  std::mt19937_64 rng(3);
  TemporalSequence seq;
  for (int t = 0; t < 3; ++t) {
    seq.frames.push_back(testutil::random_optical(4, 4, rng));
    seq.timestamps.push_back(t);
  }
  CHECK(validate_sequence(seq).ok());
  seq.timestamps[2] = 0.5;
  CHECK_FALSE(validate_sequence(seq).ok());
}

TEST_CASE("range preservation: normalized outputs validate under their new tag") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto img = testutil::random_optical(6, 6, rng);
    for (Range target : {Range::Unit, Range::Symmetric, Range::Byte})
      CHECK(validate_image(normalize(img, target)).ok());
  }
}

TEST_CASE("class volume invariant: unit simplex per pixel") {
  ClassVolume vol;
  vol.probs = Tensor({2, 2, 4});
  vol.probs.fill(0.25);
  CHECK(validate_volume(vol).ok());
  vol.probs.at(0, 0, 0) = 0.5;
  CHECK_FALSE(validate_volume(vol).ok());
}
