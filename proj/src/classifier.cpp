#include "filterattack/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

#include "filterattack/errors.hpp"
#include "filterattack/random.hpp"

namespace filterattack {

int argmax(const PredictionVector& p) {
  int best = 0;
  for (int i = 1; i < kNumClasses; ++i) {
    if (p.probs[i] > p.probs[best]) best = i;
  }
  return best;
}

double l1_distance(const PredictionVector& a, const PredictionVector& b) {
  double d = 0.0;
  for (int i = 0; i < kNumClasses; ++i) d += std::abs(a.probs[i] - b.probs[i]);
  return d;
}

int predict_label(const Classifier& classifier, const Image& image) {
  return argmax(classifier.predict(image));
}

namespace nn {

namespace {

// Eight adjacent outputs of four channels. `src` points at the top-left tap
// of the first output in channel plane 0.
void conv_span8(const float* src, std::size_t plane, int pw, int cin, const float* weights,
                const float* bias, float (&acc)[4][8]) {
#if defined(__SSE2__)
  __m128 a[4][2];
  for (int b = 0; b < 4; ++b) a[b][0] = a[b][1] = _mm_set1_ps(bias[b]);
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int c = 0; c < cin; ++c) {
        const float* row = src + c * plane + ky * pw + kx;
        const float* wt = weights + ((ky * 3 + kx) * cin + c) * 4;
        const __m128 v0 = _mm_loadu_ps(row);
        const __m128 v1 = _mm_loadu_ps(row + 4);
        for (int b = 0; b < 4; ++b) {
          const __m128 wv = _mm_set1_ps(wt[b]);
          a[b][0] = _mm_add_ps(a[b][0], _mm_mul_ps(wv, v0));
          a[b][1] = _mm_add_ps(a[b][1], _mm_mul_ps(wv, v1));
        }
      }
    }
  }
  for (int b = 0; b < 4; ++b) {
    _mm_storeu_ps(acc[b], a[b][0]);
    _mm_storeu_ps(acc[b] + 4, a[b][1]);
  }
#else
  for (int b = 0; b < 4; ++b) {
    for (int j = 0; j < 8; ++j) acc[b][j] = bias[b];
  }
  for (int ky = 0; ky < 3; ++ky) {
    for (int kx = 0; kx < 3; ++kx) {
      for (int c = 0; c < cin; ++c) {
        const float* row = src + c * plane + ky * pw + kx;
        const float* wt = weights + ((ky * 3 + kx) * cin + c) * 4;
        for (int b = 0; b < 4; ++b) {
          for (int j = 0; j < 8; ++j) acc[b][j] += wt[b] * row[j];
        }
      }
    }
  }
#endif
}

}  // namespace

Tensor3 conv3x3_same(const Tensor3& input, const ConvLayer& layer, bool relu) {
  if (input.channels != layer.in_channels) {
    throw ArgumentError("conv3x3_same: input has " + std::to_string(input.channels) +
                        " channels, layer expects " + std::to_string(layer.in_channels));
  }
  const int h = input.height;
  const int w = input.width;
  const int cin = input.channels;
  const int cout = layer.out_channels;
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t padded_plane = static_cast<std::size_t>(h + 2) * pw;

  // Zero-padded planar copy of the input.
  std::vector<float> padded(padded_plane * cin, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float* src = &input.values[(static_cast<std::size_t>(y) * w + x) * cin];
      for (int c = 0; c < cin; ++c) padded[c * padded_plane + (y + 1) * pw + (x + 1)] = src[c];
    }
  }

  // Weights regrouped as [block][ky][kx][c][4] so one load feeds four output
  // channels; missing channels of a partial block are zero.
  constexpr int kBlock = 4;
  constexpr int kSpan = 8;
  const int taps = 9 * cin;
  const int blocks = (cout + kBlock - 1) / kBlock;
  std::vector<float> packed(static_cast<std::size_t>(blocks) * taps * kBlock, 0.0f);
  std::vector<float> bias(static_cast<std::size_t>(blocks) * kBlock, 0.0f);
  for (int o = 0; o < cout; ++o) {
    bias[o] = layer.bias[o];
    for (int t = 0; t < taps; ++t) {
      packed[(static_cast<std::size_t>(o / kBlock) * taps + t) * kBlock + o % kBlock] =
          layer.weights[static_cast<std::size_t>(o) * taps + t];
    }
  }

  // Every output starts from its bias and adds the taps in (ky, kx, c) order.
  Tensor3 out{h, w, cout, std::vector<float>(plane * cout)};
  for (int ob = 0; ob < blocks; ++ob) {
    const float* wb = &packed[static_cast<std::size_t>(ob) * taps * kBlock];
    const float* bb = &bias[static_cast<std::size_t>(ob) * kBlock];
    const int nb = std::min(kBlock, cout - ob * kBlock);
    for (int y = 0; y < h; ++y) {
      for (int x0 = 0; x0 < w; x0 += kSpan) {
        const int span = std::min(kSpan, w - x0);
        float acc[kBlock][kSpan];
        if (span == kSpan) {
          conv_span8(&padded[(y * pw) + x0], padded_plane, pw, cin, wb, bb, acc);
        } else {
          for (int b = 0; b < kBlock; ++b) {
            for (int j = 0; j < span; ++j) acc[b][j] = bb[b];
          }
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              for (int c = 0; c < cin; ++c) {
                const float* row = &padded[c * padded_plane + (y + ky) * pw + x0 + kx];
                const float* wt = &wb[((ky * 3 + kx) * cin + c) * kBlock];
                for (int b = 0; b < kBlock; ++b) {
                  for (int j = 0; j < span; ++j) acc[b][j] += wt[b] * row[j];
                }
              }
            }
          }
        }
        for (int j = 0; j < span; ++j) {
          float* dst = &out.values[(static_cast<std::size_t>(y) * w + x0 + j) * cout + ob * kBlock];
          for (int b = 0; b < nb; ++b) dst[b] = relu ? std::max(acc[b][j], 0.0f) : acc[b][j];
        }
      }
    }
  }
  return out;
}

Tensor3 maxpool2x2(const Tensor3& input) {
  const int h = input.height / 2;
  const int w = input.width / 2;
  const int c = input.channels;
  Tensor3 out{h, w, c, std::vector<float>(static_cast<std::size_t>(h) * w * c)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        float m = input.at(2 * y, 2 * x, ch);
        m = std::max(m, input.at(2 * y, 2 * x + 1, ch));
        m = std::max(m, input.at(2 * y + 1, 2 * x, ch));
        m = std::max(m, input.at(2 * y + 1, 2 * x + 1, ch));
        out.values[(static_cast<std::size_t>(y) * w + x) * c + ch] = m;
      }
    }
  }
  return out;
}

std::vector<float> dense(std::span<const float> input, const DenseLayer& layer, bool relu) {
  if (static_cast<int>(input.size()) != layer.in_features) {
    throw ArgumentError("dense: input length mismatch");
  }
  std::vector<float> out(static_cast<std::size_t>(layer.out_features));
  const std::size_t n = input.size();
  for (int o = 0; o < layer.out_features; ++o) {
    const float* row = &layer.weights[o * n];
    float v = layer.bias[o];
    for (std::size_t i = 0; i < n; ++i) v += row[i] * input[i];
    out[o] = relu ? std::max(v, 0.0f) : v;
  }
  return out;
}

PredictionVector softmax(std::span<const float> logits) {
  if (logits.size() != kNumClasses) throw ArgumentError("softmax expects 10 logits");
  PredictionVector p;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (int i = 0; i < kNumClasses; ++i) {
    p.probs[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += p.probs[i];
  }
  for (double& v : p.probs) v /= total;
  return p;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Weights file
//
//   magic     8 bytes  "FACNNv1\0"
//   u32       layer count (always 9)
//   u32       preprocessing flag (0 none, 1 per-channel mean/std)
//   f32 x 6   mean[3], std[3]
//   per layer u32 kind, u32 dims[4]
//               1 conv3x3+relu  (out, 3, 3, in)
//               2 maxpool       (2, 2, 0, 0)
//               3 dense+relu    (out, in, 0, 0)
//               4 dense+softmax (out, in, 0, 0)
//   payload   per conv/dense layer in order: weights then bias, f32
//   u64       FNV-1a of the payload bytes
//
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'A', 'C', 'N', 'N', 'v', '1', '\0'};
constexpr std::uint32_t kLayerCount = 9;

enum class LayerKind : std::uint32_t { Conv = 1, Pool = 2, DenseRelu = 3, DenseSoftmax = 4 };

constexpr std::array<LayerKind, kLayerCount> kTopology = {
    LayerKind::Conv, LayerKind::Conv, LayerKind::Pool, LayerKind::Conv,     LayerKind::Conv,
    LayerKind::Pool, LayerKind::DenseRelu, LayerKind::DenseRelu, LayerKind::DenseSoftmax};

struct Writer {
  std::string bytes;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, sizeof v);
    u32(v);
  }
};

struct Reader {
  std::span<const unsigned char> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw IoError("weights file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, sizeof f);
    return f;
  }
  void floats(std::vector<float>& out, std::size_t n) {
    need(4 * n);
    out.resize(n);
    for (auto& f : out) f = f32();
  }
};

std::string payload_bytes(const std::array<nn::ConvLayer, 4>& convs,
                          const std::array<nn::DenseLayer, 3>& denses) {
  Writer w;
  for (const auto& c : convs) {
    for (float f : c.weights) w.f32(f);
    for (float f : c.bias) w.f32(f);
  }
  for (const auto& d : denses) {
    for (float f : d.weights) w.f32(f);
    for (float f : d.bias) w.f32(f);
  }
  return w.bytes;
}

std::uint64_t payload_checksum(const std::string& payload) {
  return fnv1a64({reinterpret_cast<const unsigned char*>(payload.data()), payload.size()});
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CnnModel::CnnModel(std::array<nn::ConvLayer, 4> convs, std::array<nn::DenseLayer, 3> denses,
                   Preprocessing preprocessing, std::array<float, 3> mean,
                   std::array<float, 3> stddev)
    : convs_(std::move(convs)),
      denses_(std::move(denses)),
      preprocessing_(preprocessing),
      mean_(mean),
      stddev_(stddev) {
  int channels = Image::kChannels;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto& c = convs_[i];
    const std::string name = "conv" + std::to_string(i + 1);
    if (c.out_channels <= 0) throw ModelFormatError(name + ": non-positive output width");
    if (c.in_channels != channels) {
      throw ModelFormatError(name + ": expects " + std::to_string(c.in_channels) +
                             " input channels, previous layer yields " + std::to_string(channels));
    }
    if (c.weights.size() != static_cast<std::size_t>(c.out_channels) * 9 * c.in_channels ||
        c.bias.size() != static_cast<std::size_t>(c.out_channels)) {
      throw ModelFormatError(name + ": tensor sizes disagree with declared shape");
    }
    channels = c.out_channels;
  }
  int features = (kInputSide / 4) * (kInputSide / 4) * channels;
  for (std::size_t i = 0; i < denses_.size(); ++i) {
    const auto& d = denses_[i];
    const std::string name = "dense" + std::to_string(i + 1);
    if (d.out_features <= 0) throw ModelFormatError(name + ": non-positive width");
    if (d.in_features != features) {
      throw ModelFormatError(name + ": expects " + std::to_string(d.in_features) +
                             " inputs, previous layer yields " + std::to_string(features));
    }
    if (d.weights.size() != static_cast<std::size_t>(d.out_features) * d.in_features ||
        d.bias.size() != static_cast<std::size_t>(d.out_features)) {
      throw ModelFormatError(name + ": tensor sizes disagree with declared shape");
    }
    features = d.out_features;
  }
  if (features != kNumClasses) throw ModelFormatError("output layer must have 10 units");
  if (preprocessing_ != Preprocessing::None && preprocessing_ != Preprocessing::PerChannelMeanStd) {
    throw ModelFormatError("unknown preprocessing flag");
  }
  if (preprocessing_ == Preprocessing::PerChannelMeanStd) {
    for (float s : stddev_) {
      if (!(s > 0.0f)) throw ModelFormatError("preprocessing std must be positive");
    }
  }
  checksum_ = payload_checksum(payload_bytes(convs_, denses_));
}

Architecture CnnModel::architecture() const {
  Architecture a;
  for (int i = 0; i < 4; ++i) a.conv_widths[i] = convs_[i].out_channels;
  for (int i = 0; i < 2; ++i) a.dense_widths[i] = denses_[i].out_features;
  return a;
}

CnnModel CnnModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  Reader r{bytes};
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ModelFormatError(path.string() + ": bad magic");
  }
  r.pos = sizeof kMagic;
  if (r.u32() != kLayerCount) throw ModelFormatError("weights file must declare 9 layers");
  const std::uint32_t flag = r.u32();
  if (flag > 1) throw ModelFormatError("unknown preprocessing flag");
  std::array<float, 3> mean{}, stddev{};
  for (auto& m : mean) m = r.f32();
  for (auto& s : stddev) s = r.f32();

  std::array<nn::ConvLayer, 4> convs;
  std::array<nn::DenseLayer, 3> denses;
  std::size_t ci = 0, di = 0;
  for (std::uint32_t i = 0; i < kLayerCount; ++i) {
    const auto kind = static_cast<LayerKind>(r.u32());
    std::array<std::uint32_t, 4> dims{};
    for (auto& d : dims) d = r.u32();
    if (kind != kTopology[i]) {
      throw ModelFormatError("layer " + std::to_string(i) + " has unexpected kind");
    }
    switch (kind) {
      case LayerKind::Conv:
        if (dims[1] != 3 || dims[2] != 3) throw ModelFormatError("convolutions must be 3x3");
        convs[ci].out_channels = static_cast<int>(dims[0]);
        convs[ci].in_channels = static_cast<int>(dims[3]);
        ++ci;
        break;
      case LayerKind::Pool:
        if (dims != std::array<std::uint32_t, 4>{2, 2, 0, 0}) {
          throw ModelFormatError("pooling must be 2x2");
        }
        break;
      case LayerKind::DenseRelu:
      case LayerKind::DenseSoftmax:
        if (dims[2] != 0 || dims[3] != 0) throw ModelFormatError("dense layers are 2-D");
        denses[di].out_features = static_cast<int>(dims[0]);
        denses[di].in_features = static_cast<int>(dims[1]);
        ++di;
        break;
    }
  }
  // Shapes are validated before any tensor is read so a bad header never
  // triggers a huge allocation.
  {
    int channels = Image::kChannels;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      if (convs[i].in_channels != channels || convs[i].out_channels <= 0) {
        throw ModelFormatError("conv" + std::to_string(i + 1) + ": shape " +
                               std::to_string(convs[i].out_channels) + "x3x3x" +
                               std::to_string(convs[i].in_channels) + " is inconsistent");
      }
      channels = convs[i].out_channels;
    }
    long features = (kInputSide / 4) * (kInputSide / 4) * static_cast<long>(channels);
    for (std::size_t i = 0; i < denses.size(); ++i) {
      if (denses[i].in_features != features || denses[i].out_features <= 0) {
        throw ModelFormatError("dense" + std::to_string(i + 1) + ": shape is inconsistent");
      }
      features = denses[i].out_features;
    }
    if (features != kNumClasses) throw ModelFormatError("output layer must have 10 units");
  }

  const std::size_t payload_start = r.pos;
  for (auto& c : convs) {
    r.floats(c.weights, static_cast<std::size_t>(c.out_channels) * 9 * c.in_channels);
    r.floats(c.bias, static_cast<std::size_t>(c.out_channels));
  }
  for (auto& d : denses) {
    r.floats(d.weights, static_cast<std::size_t>(d.out_features) * d.in_features);
    r.floats(d.bias, static_cast<std::size_t>(d.out_features));
  }
  const std::size_t payload_end = r.pos;
  const std::uint64_t stored = r.u64();
  if (r.pos != bytes.size()) throw ModelFormatError("trailing bytes after checksum");
  const std::uint64_t actual =
      fnv1a64(std::span(bytes).subspan(payload_start, payload_end - payload_start));
  if (stored != actual) throw ModelFormatError(path.string() + ": checksum mismatch");

  return CnnModel(std::move(convs), std::move(denses), static_cast<Preprocessing>(flag), mean,
                  stddev);
}

void CnnModel::save(const std::filesystem::path& path) const {
  Writer w;
  w.bytes.assign(kMagic, kMagic + sizeof kMagic);
  w.u32(kLayerCount);
  w.u32(static_cast<std::uint32_t>(preprocessing_));
  for (float m : mean_) w.f32(m);
  for (float s : stddev_) w.f32(s);
  std::size_t ci = 0, di = 0;
  for (LayerKind kind : kTopology) {
    w.u32(static_cast<std::uint32_t>(kind));
    switch (kind) {
      case LayerKind::Conv: {
        const auto& c = convs_[ci++];
        for (std::uint32_t d : {static_cast<std::uint32_t>(c.out_channels), 3u, 3u,
                                static_cast<std::uint32_t>(c.in_channels)}) {
          w.u32(d);
        }
        break;
      }
      case LayerKind::Pool:
        for (std::uint32_t d : {2u, 2u, 0u, 0u}) w.u32(d);
        break;
      case LayerKind::DenseRelu:
      case LayerKind::DenseSoftmax: {
        const auto& d = denses_[di++];
        for (std::uint32_t v : {static_cast<std::uint32_t>(d.out_features),
                                static_cast<std::uint32_t>(d.in_features), 0u, 0u}) {
          w.u32(v);
        }
        break;
      }
    }
  }
  const std::string payload = payload_bytes(convs_, denses_);
  w.bytes += payload;
  w.u64(payload_checksum(payload));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::array<nn::ConvLayer, 4> shaped_convs(const Architecture& arch) {
  std::array<nn::ConvLayer, 4> convs;
  int in = Image::kChannels;
  for (std::size_t i = 0; i < 4; ++i) {
    const int out = arch.conv_widths[i];
    convs[i] = {out, in, std::vector<float>(static_cast<std::size_t>(out) * 9 * in, 0.0f),
                std::vector<float>(static_cast<std::size_t>(out), 0.0f)};
    in = out;
  }
  return convs;
}

std::array<nn::DenseLayer, 3> shaped_denses(const Architecture& arch) {
  std::array<nn::DenseLayer, 3> denses;
  int in = (CnnModel::kInputSide / 4) * (CnnModel::kInputSide / 4) * arch.conv_widths[3];
  const std::array<int, 3> widths = {arch.dense_widths[0], arch.dense_widths[1], kNumClasses};
  for (std::size_t i = 0; i < 3; ++i) {
    denses[i] = {widths[i], in, std::vector<float>(static_cast<std::size_t>(widths[i]) * in, 0.0f),
                 std::vector<float>(static_cast<std::size_t>(widths[i]), 0.0f)};
    in = widths[i];
  }
  return denses;
}

}  // namespace

CnnModel CnnModel::zeros(const Architecture& arch) {
  return CnnModel(shaped_convs(arch), shaped_denses(arch));
}

CnnModel CnnModel::fixture(std::uint64_t seed, const Architecture& arch) {
  Rng rng(seed);
  auto convs = shaped_convs(arch);
  auto denses = shaped_denses(arch);
  for (auto& c : convs) {
    const double scale = std::sqrt(2.0 / (9.0 * c.in_channels));
    for (float& wgt : c.weights) wgt = static_cast<float>(scale * rng.normal());
    for (float& b : c.bias) b = static_cast<float>(0.05 * rng.normal());
  }
  for (auto& d : denses) {
    const double scale = std::sqrt(2.0 / d.in_features);
    for (float& wgt : d.weights) wgt = static_cast<float>(scale * rng.normal());
    for (float& b : d.bias) b = static_cast<float>(0.05 * rng.normal());
  }
  return CnnModel(std::move(convs), std::move(denses));
}

std::vector<float> CnnModel::logits(const Image& image) const {
  if (image.height() != kInputSide || image.width() != kInputSide) {
    throw ArgumentError("classifier input must be 32x32x3, got " +
                        std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  nn::Tensor3 t{kInputSide, kInputSide, Image::kChannels,
                std::vector<float>(image.data().begin(), image.data().end())};
  if (preprocessing_ == Preprocessing::PerChannelMeanStd) {
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      t.values[i] = (t.values[i] - mean_[i % 3]) / stddev_[i % 3];
    }
  }
  t = nn::conv3x3_same(t, convs_[0], true);
  t = nn::conv3x3_same(t, convs_[1], true);
  t = nn::maxpool2x2(t);
  t = nn::conv3x3_same(t, convs_[2], true);
  t = nn::conv3x3_same(t, convs_[3], true);
  t = nn::maxpool2x2(t);
  auto v = nn::dense(t.values, denses_[0], true);
  v = nn::dense(v, denses_[1], true);
  return nn::dense(v, denses_[2], false);
}

PredictionVector CnnModel::predict(const Image& image) const {
  return nn::softmax(logits(image));
}

}  // namespace filterattack
