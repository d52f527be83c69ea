#pragma once

#include "filterattack/classifier.hpp"
#include "filterattack/image.hpp"

namespace filterattack {

// Score threshold above which an input is reported as adversarial.
inline constexpr double kDefaultDetectionThreshold = 1.7547;

struct SqueezerConfig {
  int bit_depth = 5;
  int median_window = 2;
  int nlm_search = 13;  // search window side
  int nlm_patch = 3;    // patch side
  double nlm_strength = 2.0;  // filter strength h on the 0..255 scale
  double nlm_sigma = 0.0;     // noise sigma on the 0..255 scale

  // Throws ArgumentError when a field is out of range.
  void validate() const;
};

struct DetectorVerdict {
  double score = 0.0;
  bool flagged = false;
  double threshold = kDefaultDetectionThreshold;
};

// round(v * (2^bits - 1)) / (2^bits - 1) per value; bits in [1, 8].
Image squeeze_bit_depth(const Image& image, int bits);

// Per-channel sliding median over a window x window neighbourhood covering
// offsets [-window/2, window - 1 - window/2]. Even counts take the lower of the
// two middle values; borders use symmetric reflection.
Image squeeze_median(const Image& image, int window);

// Colour non-local means. Every pixel becomes the weighted average of the
// pixels in its search window, weighted by
//   exp(-max(d^2 - 2 sigma^2, 0) / h^2)
// where d^2 is the mean squared RGB difference between the two patches.
Image squeeze_nlm(const Image& image, const SqueezerConfig& cfg);

// Joint feature-squeezing test: score is the largest L1 distance between the
// prediction on the input and the predictions on its three squeezed versions.
DetectorVerdict detect(const Classifier& classifier, const Image& image,
                       const SqueezerConfig& cfg = {},
                       double threshold = kDefaultDetectionThreshold);

// Same, reusing an already computed prediction for the unsqueezed input.
DetectorVerdict detect(const Classifier& classifier, const Image& image,
                       const PredictionVector& prediction, const SqueezerConfig& cfg,
                       double threshold);

// Binds a classifier, squeezer configuration and threshold.
class FeatureSqueezeDetector {
 public:
  FeatureSqueezeDetector(const Classifier& classifier, SqueezerConfig cfg = {},
                         double threshold = kDefaultDetectionThreshold);

  DetectorVerdict verdict(const Image& image) const {
    return detect(classifier_, image, cfg_, threshold_);
  }
  DetectorVerdict verdict(const Image& image, const PredictionVector& prediction) const {
    return detect(classifier_, image, prediction, cfg_, threshold_);
  }
  bool operator()(const Image& image) const { return verdict(image).flagged; }

  const Classifier& classifier() const { return classifier_; }
  const SqueezerConfig& config() const { return cfg_; }
  double threshold() const { return threshold_; }

 private:
  const Classifier& classifier_;
  SqueezerConfig cfg_;
  double threshold_;
};

}  // namespace filterattack
