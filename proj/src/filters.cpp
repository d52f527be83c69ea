#include "filterattack/filters.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "filterattack/errors.hpp"

namespace filterattack {

namespace {

constexpr std::array<std::string_view, kNumFilterKinds> kFilterNames = {
    "Clarendon", "Juno", "Reyes", "Gingham", "Lark"};

// Each filter is a fixed sequence of colour primitives. Every base parameter
// is pulled toward the primitive's identity value by alpha:
//   p = identity + alpha * (base - identity)
enum class Op { Brightness, Contrast, Saturation, Gain, Vignette };

struct Primitive {
  Op op;
  std::array<double, 3> base;
};

double identity_of(Op op) {
  switch (op) {
    case Op::Brightness:
    case Op::Vignette:
      return 0.0;
    case Op::Contrast:
    case Op::Saturation:
    case Op::Gain:
      return 1.0;
  }
  return 0.0;
}

std::vector<Primitive> recipe(FilterKind kind) {
  switch (kind) {
    case FilterKind::Clarendon:
      return {{Op::Contrast, {1.20}}, {Op::Saturation, {1.15}}, {Op::Gain, {0.98, 1.00, 1.04}}};
    case FilterKind::Juno:
      return {{Op::Contrast, {1.15}}, {Op::Gain, {1.10, 1.02, 0.95}}};
    case FilterKind::Reyes:
      return {{Op::Saturation, {0.75}}, {Op::Brightness, {0.08}}};
    case FilterKind::Gingham:
      return {{Op::Saturation, {0.80}}, {Op::Contrast, {0.90}}, {Op::Vignette, {-0.15}}};
    case FilterKind::Lark:
      return {{Op::Brightness, {0.10}}, {Op::Saturation, {0.85}}, {Op::Gain, {0.95, 1.05, 1.05}}};
  }
  throw ArgumentError("unknown filter kind");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double luma(const std::array<double, 3>& px) {
  return 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
}

void check_kind(FilterKind kind) {
  const int id = static_cast<int>(kind);
  if (id < 0 || id >= kNumFilterKinds) throw ArgumentError("filter id out of range");
}

}  // namespace

std::string_view filter_name(FilterKind kind) {
  check_kind(kind);
  return kFilterNames[static_cast<std::size_t>(kind)];
}

FilterKind parse_filter_kind(std::string_view name) {
  for (std::size_t i = 0; i < kFilterNames.size(); ++i) {
    if (kFilterNames[i] == name) return static_cast<FilterKind>(i);
  }
  throw ParseError("unknown filter '" + std::string(name) + "'");
}

double quantize_parameter(double value) { return std::round(value * 1e6) / 1e6; }

FilterGene FilterGene::make(FilterKind kind, double alpha, double strength) {
  check_kind(kind);
  if (!(alpha >= kAlphaMin && alpha <= kAlphaMax)) {
    throw ArgumentError("alpha " + std::to_string(alpha) + " outside [0.5, 1.5]");
  }
  if (!(strength >= kStrengthMin && strength <= kStrengthMax)) {
    throw ArgumentError("strength " + std::to_string(strength) + " outside [0, 1]");
  }
  return FilterGene{kind, quantize_parameter(alpha), quantize_parameter(strength)};
}

FilterChain::FilterChain(std::vector<FilterGene> genes) : genes_(std::move(genes)) {
  if (genes_.size() < kMinChainLength || genes_.size() > kMaxChainLength) {
    throw ArgumentError("filter chain length " + std::to_string(genes_.size()) +
                        " outside [3, 5]");
  }
  std::array<bool, kNumFilterKinds> seen{};
  for (auto& g : genes_) {
    g = FilterGene::make(g.kind, g.alpha, g.strength);
    auto& flag = seen[static_cast<std::size_t>(g.kind)];
    if (flag) throw ArgumentError("filter chain repeats " + std::string(filter_name(g.kind)));
    flag = true;
  }
}

bool FilterChain::contains(FilterKind kind) const {
  return std::any_of(genes_.begin(), genes_.end(),
                     [kind](const FilterGene& g) { return g.kind == kind; });
}

std::vector<double> FilterChain::parameters() const {
  std::vector<double> out;
  out.reserve(genes_.size() * 2);
  for (const auto& g : genes_) {
    out.push_back(g.alpha);
    out.push_back(g.strength);
  }
  return out;
}

FilterChain FilterChain::with_parameters(std::span<const double> params) const {
  if (params.size() != genes_.size() * 2) {
    throw ArgumentError("parameter vector length does not match chain");
  }
  std::vector<FilterGene> genes;
  genes.reserve(genes_.size());
  for (std::size_t i = 0; i < genes_.size(); ++i) {
    genes.push_back(FilterGene::make(genes_[i].kind, params[2 * i], params[2 * i + 1]));
  }
  return FilterChain(std::move(genes));
}

std::string FilterChain::serialize() const {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < genes_.size(); ++i) {
    if (i) out.push_back(',');
    std::snprintf(buf, sizeof buf, "%s:%.6f:%.6f", std::string(filter_name(genes_[i].kind)).c_str(),
                  genes_[i].alpha, genes_[i].strength);
    out += buf;
  }
  return out;
}

namespace {

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  return text;
}

}  // namespace

FilterChain parse_chain(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw ParseError("empty filter chain");

  auto parse_number = [](std::string_view field) {
    double v = 0.0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      throw ParseError("bad number '" + std::string(field) + "' in filter chain");
    }
    return v;
  };

  std::vector<FilterGene> genes;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view item = trim(text.substr(start, comma - start));
    const std::size_t c1 = item.find(':');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : item.find(':', c1 + 1);
    if (c2 == std::string_view::npos || item.find(':', c2 + 1) != std::string_view::npos) {
      throw ParseError("expected kind:alpha:strength, got '" + std::string(item) + "'");
    }
    const FilterKind kind = parse_filter_kind(item.substr(0, c1));
    const double alpha = parse_number(item.substr(c1 + 1, c2 - c1 - 1));
    const double strength = parse_number(item.substr(c2 + 1));
    genes.push_back(FilterGene::make(kind, alpha, strength));
    start = comma + 1;
  }
  return FilterChain(std::move(genes));
}

double parameter_lower_bound(std::size_t param_index) {
  return param_index % 2 == 0 ? kAlphaMin : kStrengthMin;
}

double parameter_upper_bound(std::size_t param_index) {
  return param_index % 2 == 0 ? kAlphaMax : kStrengthMax;
}

Image apply_filter(const Image& image, FilterKind kind, double alpha) {
  if (!(alpha >= kAlphaMin && alpha <= kAlphaMax)) {
    throw ArgumentError("alpha " + std::to_string(alpha) + " outside [0.5, 1.5]");
  }
  if (image.empty()) throw ArgumentError("cannot filter an empty image");

  auto steps = recipe(kind);
  for (auto& s : steps) {
    const double id = identity_of(s.op);
    for (double& p : s.base) p = id + alpha * (p - id);
  }

  const int h = image.height();
  const int w = image.width();
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  const auto src = image.data();
  std::vector<float> out(src.size());

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
      std::array<double, 3> px = {src[base], src[base + 1], src[base + 2]};
      for (const auto& s : steps) {
        switch (s.op) {
          case Op::Brightness:
            for (double& v : px) v = clamp01(v + s.base[0]);
            break;
          case Op::Contrast:
            for (double& v : px) v = clamp01((v - 0.5) * s.base[0] + 0.5);
            break;
          case Op::Saturation: {
            const double gray = luma(px);
            for (double& v : px) v = clamp01(gray + (v - gray) * s.base[0]);
            break;
          }
          case Op::Gain:
            for (int c = 0; c < 3; ++c) px[c] = clamp01(px[c] * s.base[c]);
            break;
          case Op::Vignette: {
            // Squared distance to the centre, 1 at the corners.
            const double dy = cy > 0 ? (y - cy) / cy : 0.0;
            const double dx = cx > 0 ? (x - cx) / cx : 0.0;
            const double d2 = 0.5 * (dx * dx + dy * dy);
            const double factor = 1.0 - s.base[0] * d2;
            for (double& v : px) v = clamp01(v * factor);
            break;
          }
        }
      }
      for (int c = 0; c < 3; ++c) out[base + c] = static_cast<float>(px[c]);
    }
  }
  return Image(h, w, std::move(out));
}

Image strength_blend(const Image& x, const Image& x_star, double s) {
  if (!x.same_shape(x_star)) throw ArgumentError("strength_blend: image shapes differ");
  if (!(s >= 0.0 && s <= 1.0)) throw ArgumentError("strength outside [0, 1]");
  const auto a = x.data();
  const auto b = x_star.data();
  std::vector<float> out(a.size());
  const double keep = 1.0 - s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = keep * static_cast<double>(a[i]) + s * static_cast<double>(b[i]);
    out[i] = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
  }
  return Image(x.height(), x.width(), std::move(out));
}

Image apply_genes(const Image& image, std::span<const FilterGene> genes) {
  Image current = image;
  for (const auto& g : genes) {
    if (g.strength == 0.0) continue;  // blend with s = 0 is the identity, bitwise
    current = strength_blend(current, apply_filter(current, g.kind, g.alpha), g.strength);
  }
  return current;
}

Image apply_chain(const Image& image, const FilterChain& chain) {
  return apply_genes(image, chain.genes());
}

FilterGene random_gene(FilterKind kind, Rng& rng) {
  const double alpha = rng.uniform(kAlphaMin, kAlphaMax);
  const double strength = rng.uniform(kStrengthMin, kStrengthMax);
  return FilterGene::make(kind, std::min(alpha, kAlphaMax), std::min(strength, kStrengthMax));
}

}  // namespace filterattack
