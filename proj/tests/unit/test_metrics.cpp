#include <doctest.h>

#include "filterattack/errors.hpp"
#include "filterattack/filters.hpp"
#include "filterattack/metrics.hpp"
#include "helpers.hpp"

using namespace filterattack;

namespace {

struct Pairs {
  std::vector<Image> originals;
  std::vector<Image> adversarials;
};

Pairs make_pairs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Pairs p;
  const FilterChain chain = parse_chain("Clarendon:1.5:1,Juno:1.5:1,Gingham:1.5:1");
  for (std::size_t i = 0; i < n; ++i) {
    p.originals.push_back(i % 3 ? testing::natural_image(rng) : testing::random_image(rng));
    p.adversarials.push_back(apply_chain(p.originals.back(), chain));
  }
  return p;
}

}  // namespace

TEST_CASE("identical pairs have no successes") {
  const CnnModel m = CnnModel::fixture(1);
  const auto p = make_pairs(6, 1);
  CHECK(attack_success_rate(m, p.originals, p.originals) == 0.0);
  const testing::ConstantClassifier c(testing::one_hot(2));
  CHECK(attack_success_rate(c, p.originals, p.adversarials) == 0.0);
}

TEST_CASE("rate argument errors") {
  const CnnModel m = CnnModel::zeros();
  const auto p = make_pairs(3, 2);
  const std::vector<Image> two(p.originals.begin(), p.originals.begin() + 2);
  const std::vector<Image> none;
  const DetectorFn never = [](const Image&) { return false; };
  CHECK_THROWS_AS(attack_success_rate(m, p.originals, two), ArgumentError);
  CHECK_THROWS_AS(attack_success_rate(m, none, none), ArgumentError);
  CHECK_THROWS_AS(detection_rate(never, none), ArgumentError);
  CHECK_THROWS_AS(fsdr(m, never, p.originals, two), ArgumentError);
}

TEST_CASE("detection rate at the extreme thresholds") {
  const CnnModel m = CnnModel::fixture(2);
  const auto p = make_pairs(5, 3);
  const FeatureSqueezeDetector never(m, {}, 2.0);
  const FeatureSqueezeDetector always(m, {}, -1.0);
  CHECK(detection_rate(never, p.adversarials) == 0.0);
  CHECK(detection_rate(always, p.adversarials) == 1.0);
}

TEST_CASE("fsdr conventions") {
  const CnnModel m = CnnModel::fixture(3);
  const auto p = make_pairs(4, 4);
  const DetectorFn always = [](const Image&) { return true; };
  const DetectorFn never = [](const Image&) { return false; };
  CHECK(fsdr(m, always, p.originals, p.originals) == std::pair<double, std::size_t>{0.0, 0});

  // White images are class 1, everything else class 0.
  struct Shift final : Classifier {
    PredictionVector predict(const Image& img) const override {
      return testing::one_hot(img.at(0, 0, 1) > 0.999f ? 1 : 0);
    }
  };
  const std::vector<Image> dark(3, Image::filled(2, 2, 0.2f));
  const std::vector<Image> light(3, Image::filled(2, 2, 1.0f));
  const Shift shift;
  CHECK(attack_success_rate(shift, dark, light) == 1.0);
  CHECK(fsdr(shift, never, dark, light) == std::pair<double, std::size_t>{0.0, 3});
  CHECK(fsdr(shift, always, dark, light) == std::pair<double, std::size_t>{1.0, 3});
}

TEST_CASE("flags on failed attacks only leave fsdr at zero") {
  struct Shift final : Classifier {
    PredictionVector predict(const Image& img) const override {
      return testing::one_hot(img.at(0, 0, 0) > 0.9f ? 1 : 0);
    }
  };
  // Pairs 0 and 1 succeed; 2 and 3 fail and are the only ones flagged.
  const std::vector<Image> orig(4, Image::filled(1, 1, 0.1f));
  const std::vector<Image> adv{Image::filled(1, 1, 1.0f), Image::filled(1, 1, 0.95f),
                               Image::filled(1, 1, 0.3f), Image::filled(1, 1, 0.4f)};
  const DetectorFn flag_dim = [](const Image& img) { return img.at(0, 0, 0) < 0.5f; };
  const Shift shift;
  CHECK(detection_rate(flag_dim, adv) == 0.5);
  CHECK(attack_success_rate(shift, orig, adv) == 0.5);
  CHECK(fsdr(shift, flag_dim, orig, adv) == std::pair<double, std::size_t>{0.0, 2});
}

TEST_CASE("rates equal independent recounts") {
  const CnnModel m = CnnModel::fixture(4);
  const FeatureSqueezeDetector det(m, {}, 0.05);
  const auto p = make_pairs(24, 5);
  std::size_t changed = 0, flagged = 0, flagged_success = 0;
  for (std::size_t i = 0; i < p.originals.size(); ++i) {
    const bool success = predict_label(m, p.originals[i]) != predict_label(m, p.adversarials[i]);
    const bool f = det(p.adversarials[i]);
    changed += success;
    flagged += f;
    flagged_success += success && f;
  }
  const double n = static_cast<double>(p.originals.size());
  CHECK(attack_success_rate(m, p.originals, p.adversarials) == changed / n);
  CHECK(detection_rate(det, p.adversarials) == flagged / n);
  const auto [rate, count] = fsdr(m, det, p.originals, p.adversarials);
  CHECK(count == changed);
  CHECK(rate == (changed ? static_cast<double>(flagged_success) / changed : 0.0));
  for (int threads : {1, 3}) {
    const EvalReport r = evaluate_pairs(det, p.originals, p.adversarials, threads);
    CHECK(r.asr == changed / n);
    CHECK(r.dr == flagged / n);
    CHECK(r.fsdr == rate);
    CHECK(r.n_images == p.originals.size());
    CHECK(r.n_successful == count);
  }
}

TEST_CASE("report csv") {
  EvalReport r{0.5, 0.25, 0.125, 8, 4};
  CHECK(std::string(kEvalReportCsvHeader) == "optimizer,phase,n,asr,dr,fsdr,n_successful");
  CHECK(to_csv_row(r, "ES", "train") == "ES,train,8,0.500000,0.250000,0.125000,4");
}
