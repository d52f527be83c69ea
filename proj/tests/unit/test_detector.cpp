#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "filterattack/detector.hpp"
#include "filterattack/errors.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace filterattack;

namespace {

// One-hot(3) on the exact input, one-hot(5) on anything else.
class FlipOnChange final : public Classifier {
 public:
  explicit FlipOnChange(Image original) : original_(std::move(original)) {}
  PredictionVector predict(const Image& img) const override {
    return testing::one_hot(img == original_ ? 3 : 5);
  }

 private:
  Image original_;
};

Image two_regions(int h, int w) {
  std::vector<float> v;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float c = x < w / 2 ? 0.2f : 0.8f;
      v.insert(v.end(), {c, c, c});
    }
  }
  return Image(h, w, std::move(v));
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(SqueezerConfig{}.validate());
  SqueezerConfig c;
  c.bit_depth = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.bit_depth = 9;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.median_window = 1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.nlm_search = 12;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.nlm_patch = 15;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.nlm_strength = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.nlm_sigma = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("one bit squeeze rounds to the nearest extreme") {
  const Image img(1, 2, {0.4f, 0.6f, 0.0f, 1.0f, 0.49f, 0.51f});
  const Image out = squeeze_bit_depth(img, 1);
  CHECK(out.data()[0] == 0.0f);
  CHECK(out.data()[1] == 1.0f);
  CHECK(out.data()[4] == 0.0f);
  CHECK(out.data()[5] == 1.0f);
  CHECK_THROWS_AS(squeeze_bit_depth(img, 0), ArgumentError);
  CHECK_THROWS_AS(squeeze_bit_depth(img, 9), ArgumentError);
}

TEST_CASE("five bit squeeze lands on the 31-level grid") {
  Rng rng(1);
  const Image img = testing::random_image(rng);
  const Image once = squeeze_bit_depth(img, 5);
  for (float v : once.data()) {
    const double k = std::round(v * 31.0);
    REQUIRE(v == static_cast<float>(k / 31.0));
  }
  CHECK(squeeze_bit_depth(once, 5) == once);
  CHECK(squeeze_bit_depth(img, 8) == squeeze_bit_depth(squeeze_bit_depth(img, 8), 8));
}

TEST_CASE("median of a constant image") {
  const Image img = Image::filled(6, 5, 0.37f);
  CHECK(squeeze_median(img, 2) == img);
  CHECK(squeeze_median(img, 3) == img);
}

TEST_CASE("median single white pixel matches sorting") {
  std::vector<float> v(5 * 5 * 3, 0.0f);
  for (int c = 0; c < 3; ++c) v[(2 * 5 + 2) * 3 + c] = 1.0f;
  const Image img(5, 5, v);
  const Image out = squeeze_median(img, 2);
  CHECK(out == oracle::median(img, 2));
  // Lower middle of four values with a single 1 is 0.
  for (float x : out.data()) CHECK(x == 0.0f);
}

TEST_CASE("median matches brute force for several windows") {
  Rng rng(2);
  for (int window : {2, 3, 4, 5}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Image img = testing::random_image(rng, 5 + static_cast<int>(rng.index(6)),
                                              5 + static_cast<int>(rng.index(6)));
      REQUIRE(squeeze_median(img, window) == oracle::median(img, window));
    }
  }
}

TEST_CASE("median never exceeds the input range") {
  Rng rng(3);
  std::vector<float> v(12 * 12 * 3, 0.1f);
  for (int i = 0; i < 30; ++i) v[rng.index(v.size())] = 0.9f;
  const Image img(12, 12, v);
  const Image out = squeeze_median(img, 2);
  CHECK(*std::max_element(out.data().begin(), out.data().end()) <= 0.9f);
  CHECK(*std::min_element(out.data().begin(), out.data().end()) >= 0.1f);
}

TEST_CASE("median errors") {
  CHECK_THROWS_AS(squeeze_median(Image::filled(3, 3, 0.5f), 1), ArgumentError);
  CHECK_THROWS_AS(squeeze_median(Image::filled(3, 3, 0.5f), 4), ArgumentError);
}

TEST_CASE("nlm of a constant image") {
  const Image img = Image::filled(32, 32, 0.6f);
  const Image out = squeeze_nlm(img, {});
  for (float v : out.data()) CHECK(std::abs(v - 0.6f) < 1e-6f);
}

TEST_CASE("nlm keeps flat region interiors") {
  const Image img = two_regions(32, 32);
  const Image out = squeeze_nlm(img, {});
  for (int y = 0; y < 32; ++y) {
    for (int x : {2, 5, 10, 21, 26, 29}) {
      CHECK(std::abs(out.at(y, x, 0) - img.at(y, x, 0)) < 1e-3f);
    }
  }
}

TEST_CASE("nlm matches the direct formula") {
  Rng rng(4);
  SqueezerConfig cfg;
  for (int trial = 0; trial < 4; ++trial) {
    cfg.nlm_search = trial % 2 ? 5 : 7;
    cfg.nlm_patch = trial < 2 ? 3 : 1;
    cfg.nlm_strength = trial == 3 ? 40.0 : 20.0;
    cfg.nlm_sigma = trial == 1 ? 5.0 : 0.0;
    const Image img = trial % 2 ? testing::natural_image(rng, 11, 9) : testing::random_image(rng, 9, 12);
    const Image got = squeeze_nlm(img, cfg);
    const Image ref = oracle::nlm(img, cfg);
    for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(std::abs(got.data()[i] - ref.data()[i]) < 1e-4f);
  }
}

TEST_CASE("nlm default parameters on a photograph-like image") {
  Rng rng(5);
  const Image img = testing::natural_image(rng);
  const Image got = squeeze_nlm(img, {});
  const Image ref = oracle::nlm(img, {});
  for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(std::abs(got.data()[i] - ref.data()[i]) < 1e-4f);
  for (float v : got.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("nlm rejects images smaller than the search window") {
  CHECK_THROWS_AS(squeeze_nlm(Image::filled(12, 32, 0.5f), {}), ArgumentError);
}

TEST_CASE("constant predictor is never flagged") {
  const testing::ConstantClassifier constant(testing::uniform_prediction());
  Rng rng(6);
  for (int i = 0; i < 5; ++i) {
    const auto v = detect(constant, testing::random_image(rng));
    CHECK(v.score == 0.0);
    CHECK_FALSE(v.flagged);
    CHECK(v.threshold == kDefaultDetectionThreshold);
  }
}

TEST_CASE("one-hot flip scores two") {
  Rng rng(7);
  const Image img = testing::random_image(rng);
  const FlipOnChange clf(img);
  const auto v = detect(clf, img);
  CHECK(v.score == 2.0);
  CHECK(v.flagged);
  CHECK_FALSE(detect(clf, img, {}, 2.0).flagged);
}

TEST_CASE("score is the max of the three distances") {
  const CnnModel m = CnnModel::fixture(4);
  const SqueezerConfig cfg;
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const Image img = i % 2 ? testing::random_image(rng) : testing::natural_image(rng);
    const auto p = m.predict(img);
    const double expect = std::max({oracle::l1(p, m.predict(squeeze_bit_depth(img, 5))),
                                    oracle::l1(p, m.predict(oracle::median(img, 2))),
                                    oracle::l1(p, m.predict(squeeze_nlm(img, cfg)))});
    const auto v = detect(m, img, cfg);
    CHECK(v.score == doctest::Approx(expect).epsilon(1e-12));
    CHECK((v.score >= 0.0 && v.score <= 2.0));
    CHECK(v.flagged == (v.score > kDefaultDetectionThreshold));
    CHECK(detect(m, img, p, cfg, kDefaultDetectionThreshold).score == v.score);
  }
}

TEST_CASE("detection is monotone in the threshold and reproducible") {
  const CnnModel m = CnnModel::fixture(5);
  const FeatureSqueezeDetector det(m);
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const Image img = testing::random_image(rng);
    const auto v = det.verdict(img);
    CHECK(det.verdict(img).score == v.score);
    bool prev = true;
    for (double t : {-1.0, 0.0, 0.01, 0.1, 0.5, 1.0, 1.7547, 2.0}) {
      const bool f = detect(m, img, {}, t).flagged;
      CHECK((prev || !f));
      prev = f;
    }
    CHECK(detect(m, img, {}, -1.0).flagged);
    CHECK_FALSE(detect(m, img, {}, 2.0).flagged);
  }
}

TEST_CASE("detector binds its configuration") {
  const CnnModel m = CnnModel::zeros();
  SqueezerConfig cfg;
  cfg.bit_depth = 3;
  const FeatureSqueezeDetector det(m, cfg, 0.5);
  CHECK(det.config().bit_depth == 3);
  CHECK(det.threshold() == 0.5);
  CHECK_FALSE(det(Image::filled(32, 32, 0.2f)));
  cfg.bit_depth = 0;
  CHECK_THROWS_AS(FeatureSqueezeDetector(m, cfg), ArgumentError);
}
