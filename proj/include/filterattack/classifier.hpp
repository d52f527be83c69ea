#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "filterattack/image.hpp"

namespace filterattack {

// Softmax output over the 10 classes.
struct PredictionVector {
  std::array<double, kNumClasses> probs{};

  friend bool operator==(const PredictionVector&, const PredictionVector&) = default;
};

// argmax with ties going to the lowest index.
int argmax(const PredictionVector& p);

// L1 distance between two prediction vectors, in [0, 2].
double l1_distance(const PredictionVector& a, const PredictionVector& b);

// Black-box target model: only predictions are observable. Implementations
// must be deterministic and safe to call concurrently.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual PredictionVector predict(const Image& image) const = 0;
};

int predict_label(const Classifier& classifier, const Image& image);

// Forwards to another classifier and counts the queries.
class CountingClassifier final : public Classifier {
 public:
  explicit CountingClassifier(const Classifier& inner) : inner_(inner) {}

  PredictionVector predict(const Image& image) const override {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return inner_.predict(image);
  }

  std::uint64_t queries() const { return queries_.load(std::memory_order_relaxed); }

 private:
  const Classifier& inner_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

namespace nn {

// Activations are H x W x C, channel-interleaved like Image.
struct Tensor3 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  float at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// 3x3 convolution, zero padding 1, stride 1. Weights are laid out
// [out][ky][kx][in].
struct ConvLayer {
  int out_channels = 0;
  int in_channels = 0;
  std::vector<float> weights;
  std::vector<float> bias;
};

// Weights laid out [out][in].
struct DenseLayer {
  int out_features = 0;
  int in_features = 0;
  std::vector<float> weights;
  std::vector<float> bias;
};

Tensor3 conv3x3_same(const Tensor3& input, const ConvLayer& layer, bool relu);
Tensor3 maxpool2x2(const Tensor3& input);
std::vector<float> dense(std::span<const float> input, const DenseLayer& layer, bool relu);
PredictionVector softmax(std::span<const float> logits);

}  // namespace nn

// Channel widths of the fixed layer stack
//   conv-conv-pool-conv-conv-pool-dense-dense-dense(10)+softmax.
struct Architecture {
  std::array<int, 4> conv_widths{64, 64, 128, 128};
  std::array<int, 2> dense_widths{256, 256};

  // Full-size network of the reference setup.
  static Architecture standard() { return {}; }
  // Same topology at a fraction of the cost for tests and smoke runs.
  static Architecture compact() { return {{4, 4, 8, 8}, {16, 16}}; }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum class Preprocessing : std::uint32_t { None = 0, PerChannelMeanStd = 1 };

class CnnModel final : public Classifier {
 public:
  static constexpr int kInputSide = 32;

  // Shape-checks every layer against the fixed topology; throws
  // ModelFormatError on any inconsistency.
  CnnModel(std::array<nn::ConvLayer, 4> convs, std::array<nn::DenseLayer, 3> denses,
           Preprocessing preprocessing = Preprocessing::None,
           std::array<float, 3> mean = {0, 0, 0}, std::array<float, 3> stddev = {1, 1, 1});

  static CnnModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // He-scaled pseudo-random weights from a seed.
  static CnnModel fixture(std::uint64_t seed, const Architecture& arch = Architecture::compact());
  static CnnModel zeros(const Architecture& arch = Architecture::compact());

  PredictionVector predict(const Image& image) const override;
  std::vector<float> logits(const Image& image) const;

  const std::array<nn::ConvLayer, 4>& convs() const { return convs_; }
  const std::array<nn::DenseLayer, 3>& denses() const { return denses_; }
  Preprocessing preprocessing() const { return preprocessing_; }
  const std::array<float, 3>& mean() const { return mean_; }
  const std::array<float, 3>& stddev() const { return stddev_; }
  Architecture architecture() const;

  // FNV-1a over the serialized tensor payload; recorded at load.
  std::uint64_t checksum() const { return checksum_; }

 private:
  std::array<nn::ConvLayer, 4> convs_;
  std::array<nn::DenseLayer, 3> denses_;
  Preprocessing preprocessing_;
  std::array<float, 3> mean_;
  std::array<float, 3> stddev_;
  std::uint64_t checksum_ = 0;
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);

}  // namespace filterattack
