#include "filterattack/metrics.hpp"

#include <cstdio>
#include <vector>

#include "filterattack/errors.hpp"
#include "filterattack/parallel.hpp"

namespace filterattack {

namespace {

void check_pairs(std::span<const Image> originals, std::span<const Image> adversarials) {
  if (originals.size() != adversarials.size()) {
    throw ArgumentError("original and adversarial lists differ in length");
  }
}

double ratio(std::size_t count, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
}

}  // namespace

std::string to_csv_row(const EvalReport& report, std::string_view optimizer, std::string_view phase) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f,%.6f,%zu", report.n_images, report.asr, report.dr,
                report.fsdr, report.n_successful);
  return std::string(optimizer) + "," + std::string(phase) + buf;
}

double attack_success_rate(const Classifier& classifier, std::span<const Image> originals,
                           std::span<const Image> adversarials) {
  check_pairs(originals, adversarials);
  if (originals.empty()) throw ArgumentError("attack_success_rate: empty image list");
  std::size_t changed = 0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (predict_label(classifier, originals[i]) != predict_label(classifier, adversarials[i])) ++changed;
  }
  return ratio(changed, originals.size());
}

double detection_rate(const DetectorFn& detector, std::span<const Image> adversarials) {
  if (adversarials.empty()) throw ArgumentError("detection_rate: empty image list");
  std::size_t flagged = 0;
  for (const auto& img : adversarials) {
    if (detector(img)) ++flagged;
  }
  return ratio(flagged, adversarials.size());
}

std::pair<double, std::size_t> fsdr(const Classifier& classifier, const DetectorFn& detector,
                                    std::span<const Image> originals,
                                    std::span<const Image> adversarials) {
  check_pairs(originals, adversarials);
  std::size_t successful = 0;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (predict_label(classifier, originals[i]) == predict_label(classifier, adversarials[i])) continue;
    ++successful;
    if (detector(adversarials[i])) ++flagged;
  }
  return {ratio(flagged, successful), successful};
}

EvalReport evaluate_pairs(const FeatureSqueezeDetector& detector, std::span<const Image> originals,
                          std::span<const Image> adversarials, int threads) {
  check_pairs(originals, adversarials);
  if (originals.empty()) throw ArgumentError("evaluate_pairs: empty image list");
  const Classifier& classifier = detector.classifier();
  const std::size_t n = originals.size();
  std::vector<char> success(n), flagged(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const PredictionVector adv = classifier.predict(adversarials[i]);
    success[i] = predict_label(classifier, originals[i]) != argmax(adv);
    flagged[i] = detector.verdict(adversarials[i], adv).flagged;
  });
  std::size_t n_success = 0, n_flagged = 0, n_flagged_success = 0;
  for (std::size_t i = 0; i < n; ++i) {
    n_success += success[i];
    n_flagged += flagged[i];
    n_flagged_success += success[i] && flagged[i];
  }
  return {ratio(n_success, n), ratio(n_flagged, n), ratio(n_flagged_success, n_success), n, n_success};
}

}  // namespace filterattack
