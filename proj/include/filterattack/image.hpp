#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace filterattack {

// H x W x 3 RGB image, row-major, channel-interleaved, every value in [0, 1].
// Values are fixed at construction.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  // Throws ArgumentError on a size mismatch or any value outside [0, 1].
  Image(int height, int width, std::vector<float> data);

  static Image filled(int height, int width, float value);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  float at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

inline constexpr int kNumClasses = 10;
inline constexpr int kCifarSide = 32;
inline constexpr std::size_t kCifarPixelBytes = 3 * 32 * 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixelBytes;

inline constexpr std::array<std::string_view, kNumClasses> kCifarClassNames = {
    "airplane", "automobile", "bird", "cat", "deer",
    "dog",      "frog",       "horse", "ship", "truck"};

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> class_names{kCifarClassNames.begin(), kCifarClassNames.end()};

  std::size_t size() const { return images.size(); }
};

// Reads a CIFAR-10 binary batch (records of 1 label byte + R, G, B planes of
// 1024 bytes each). Planar bytes become interleaved floats in [0, 1].
LabeledDataset load_cifar10_batch(const std::filesystem::path& path);

// Inverse of load_cifar10_batch; images must be 32x32. Pixels are quantized
// with round-half-up.
void write_cifar10_batch(const LabeledDataset& dataset, const std::filesystem::path& path);

// First n_train records vs the remainder, file order preserved.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset,
                                                        std::size_t n_train);

// Byte quantization used by every exporter: round(v * 255) with halves up.
unsigned char to_byte(float value);

// Binary PPM (P6, maxval 255).
void write_image(const Image& image, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

}  // namespace filterattack
