#include "filterattack/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "filterattack/errors.hpp"

namespace filterattack {

Image::Image(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height <= 0 || width <= 0) throw ArgumentError("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw ArgumentError("image data length does not match " + std::to_string(height) + "x" +
                        std::to_string(width) + "x3");
  }
  for (float v : data_) {
    // Negated comparison also rejects NaN.
    if (!(v >= 0.0f && v <= 1.0f)) throw ArgumentError("image value outside [0, 1]");
  }
}

Image Image::filled(int height, int width, float value) {
  return Image(height, width,
               std::vector<float>(static_cast<std::size_t>(height) * width * kChannels, value));
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

LabeledDataset load_cifar10_batch(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw DatasetError(path.string() + ": size " + std::to_string(bytes.size()) +
                       " is not a positive multiple of 3073");
  }
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  constexpr std::size_t plane = kCifarSide * kCifarSide;

  LabeledDataset ds;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= kNumClasses) {
      throw DatasetError(path.string() + ": record " + std::to_string(r) + " has label " +
                         std::to_string(rec[0]));
    }
    std::vector<float> pixels(kCifarPixelBytes);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        pixels[p * 3 + c] = static_cast<float>(rec[1 + c * plane + p]) / 255.0f;
      }
    }
    ds.images.emplace_back(kCifarSide, kCifarSide, std::move(pixels));
    ds.labels.push_back(rec[0]);
  }
  return ds;
}

void write_cifar10_batch(const LabeledDataset& dataset, const std::filesystem::path& path) {
  if (dataset.images.size() != dataset.labels.size()) {
    throw ArgumentError("dataset has mismatched image and label counts");
  }
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  std::string bytes;
  bytes.reserve(dataset.size() * kCifarRecordBytes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Image& img = dataset.images[i];
    if (img.height() != kCifarSide || img.width() != kCifarSide) {
      throw ArgumentError("CIFAR-10 records must be 32x32");
    }
    if (dataset.labels[i] < 0 || dataset.labels[i] >= kNumClasses) {
      throw ArgumentError("label out of range");
    }
    bytes.push_back(static_cast<char>(dataset.labels[i]));
    const auto px = img.data();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) bytes.push_back(static_cast<char>(to_byte(px[p * 3 + c])));
    }
  }
  write_all(path, bytes);
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset,
                                                        std::size_t n_train) {
  if (n_train == 0 || n_train >= dataset.size()) {
    throw ArgumentError("split size " + std::to_string(n_train) + " must lie in (0, " +
                        std::to_string(dataset.size()) + ")");
  }
  LabeledDataset train, test;
  train.class_names = test.class_names = dataset.class_names;
  const auto cut = static_cast<std::ptrdiff_t>(n_train);
  train.images.assign(dataset.images.begin(), dataset.images.begin() + cut);
  train.labels.assign(dataset.labels.begin(), dataset.labels.begin() + cut);
  test.images.assign(dataset.images.begin() + cut, dataset.images.end());
  test.labels.assign(dataset.labels.begin() + cut, dataset.labels.end());
  return {std::move(train), std::move(test)};
}

unsigned char to_byte(float value) {
  return static_cast<unsigned char>(std::floor(static_cast<double>(value) * 255.0 + 0.5));
}

void write_image(const Image& image, const std::filesystem::path& path) {
  if (image.empty()) throw ArgumentError("cannot export an empty image");
  std::string bytes = "P6\n" + std::to_string(image.width()) + " " +
                      std::to_string(image.height()) + "\n255\n";
  bytes.reserve(bytes.size() + image.size());
  for (float v : image.data()) bytes.push_back(static_cast<char>(to_byte(v)));
  write_all(path, bytes);
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::size_t pos = 0;
  // Header tokens are separated by whitespace; '#' starts a comment line.
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  if (next_token() != "P6") throw ParseError(path.string() + ": not a binary PPM (P6)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": malformed PPM header");
  }
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw ParseError(path.string() + ": unsupported PPM geometry or maxval");
  }
  ++pos;  // single whitespace byte after maxval
  const std::size_t n = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() < pos + n) throw IoError(path.string() + ": truncated PPM payload");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return Image(height, width, std::move(data));
}

}  // namespace filterattack
