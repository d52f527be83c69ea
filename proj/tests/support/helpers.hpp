#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "filterattack/classifier.hpp"
#include "filterattack/image.hpp"
#include "filterattack/random.hpp"

namespace testing {

using filterattack::Image;

inline Image random_image(filterattack::Rng& rng, int h = 32, int w = 32) {
  std::vector<float> v(static_cast<std::size_t>(h) * w * 3);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Image(h, w, std::move(v));
}

// Smooth gradient plus mild noise; behaves more like a photograph than
// uniform noise does.
inline Image natural_image(filterattack::Rng& rng, int h = 32, int w = 32) {
  const double base[3] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
  const double gy = rng.uniform(-0.3, 0.3);
  const double gx = rng.uniform(-0.3, 0.3);
  std::vector<float> v;
  v.reserve(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double p = base[c] + gy * (y / double(h) - 0.5) + gx * (x / double(w) - 0.5) +
                   0.05 * (rng.uniform() - 0.5);
        v.push_back(static_cast<float>(std::min(1.0, std::max(0.0, p))));
      }
    }
  }
  return Image(h, w, std::move(v));
}

inline filterattack::LabeledDataset random_dataset(std::size_t n, std::uint64_t seed) {
  filterattack::Rng rng(seed);
  filterattack::LabeledDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.push_back(natural_image(rng));
    ds.labels.push_back(static_cast<int>(rng.index(10)));
  }
  return ds;
}

// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("filterattack_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Returns a fixed vector regardless of input.
class ConstantClassifier final : public filterattack::Classifier {
 public:
  explicit ConstantClassifier(filterattack::PredictionVector p) : p_(p) {}
  filterattack::PredictionVector predict(const Image&) const override { return p_; }

 private:
  filterattack::PredictionVector p_;
};

inline filterattack::PredictionVector one_hot(int k) {
  filterattack::PredictionVector p;
  p.probs[k] = 1.0;
  return p;
}

inline filterattack::PredictionVector uniform_prediction() {
  filterattack::PredictionVector p;
  p.probs.fill(0.1);
  return p;
}

}  // namespace testing
