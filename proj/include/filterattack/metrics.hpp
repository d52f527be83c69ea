#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "filterattack/classifier.hpp"
#include "filterattack/detector.hpp"
#include "filterattack/image.hpp"

namespace filterattack {

// Returns true when the image is flagged as adversarial.
using DetectorFn = std::function<bool(const Image&)>;

struct EvalReport {
  double asr = 0.0;  // over all images
  double dr = 0.0;   // over all perturbed images
  double fsdr = 0.0; // over the successful subset only; 0 when it is empty
  std::size_t n_images = 0;
  std::size_t n_successful = 0;
};

inline constexpr std::string_view kEvalReportCsvHeader = "optimizer,phase,n,asr,dr,fsdr,n_successful";

std::string to_csv_row(const EvalReport& report, std::string_view optimizer, std::string_view phase);

// Fraction of pairs whose predicted labels differ.
double attack_success_rate(const Classifier& classifier, std::span<const Image> originals,
                           std::span<const Image> adversarials);

// Fraction of images the detector flags.
double detection_rate(const DetectorFn& detector, std::span<const Image> adversarials);

// Flagged fraction among successful adversarials and the size of that subset;
// (0.0, 0) when no attack succeeded.
std::pair<double, std::size_t> fsdr(const Classifier& classifier, const DetectorFn& detector,
                                    std::span<const Image> originals,
                                    std::span<const Image> adversarials);

// All three rates in one pass with one prediction per image. Per-image work
// runs on up to `threads` threads; counts are integers so the result does
// not depend on the split.
EvalReport evaluate_pairs(const FeatureSqueezeDetector& detector, std::span<const Image> originals,
                          std::span<const Image> adversarials, int threads = 1);

}  // namespace filterattack
