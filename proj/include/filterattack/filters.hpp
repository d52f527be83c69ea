#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "filterattack/image.hpp"
#include "filterattack/random.hpp"

namespace filterattack {

// Stable integer ids 0..4 are part of the genotype encoding.
enum class FilterKind : int { Clarendon = 0, Juno = 1, Reyes = 2, Gingham = 3, Lark = 4 };

inline constexpr int kNumFilterKinds = 5;
inline constexpr std::array<FilterKind, kNumFilterKinds> kAllFilterKinds = {
    FilterKind::Clarendon, FilterKind::Juno, FilterKind::Reyes, FilterKind::Gingham,
    FilterKind::Lark};

inline constexpr double kAlphaMin = 0.5;
inline constexpr double kAlphaMax = 1.5;
inline constexpr double kStrengthMin = 0.0;
inline constexpr double kStrengthMax = 1.0;

inline constexpr std::size_t kMinChainLength = 3;
inline constexpr std::size_t kMaxChainLength = kNumFilterKinds;

std::string_view filter_name(FilterKind kind);
// Case-sensitive; throws ParseError for unknown names.
FilterKind parse_filter_kind(std::string_view name);

// Parameters live on a 1e-6 grid so the 6-digit text form round-trips exactly.
double quantize_parameter(double value);

struct FilterGene {
  FilterKind kind = FilterKind::Clarendon;
  double alpha = 1.0;
  double strength = 1.0;

  // Validates bounds and snaps both parameters to the 1e-6 grid.
  static FilterGene make(FilterKind kind, double alpha, double strength);

  friend bool operator==(const FilterGene&, const FilterGene&) = default;
};

// Ordered, duplicate-free sequence of 3..5 genes.
class FilterChain {
 public:
  explicit FilterChain(std::vector<FilterGene> genes);

  std::span<const FilterGene> genes() const { return genes_; }
  std::size_t size() const { return genes_.size(); }
  const FilterGene& operator[](std::size_t i) const { return genes_[i]; }

  bool contains(FilterKind kind) const;

  // Flat parameter vector [alpha_0, strength_0, alpha_1, strength_1, ...].
  std::vector<double> parameters() const;
  // Same kinds, new parameters (validated and quantized).
  FilterChain with_parameters(std::span<const double> params) const;

  // "Juno:1.230000:0.800000,Lark:0.950000:0.410000,..."
  std::string serialize() const;

  friend bool operator==(const FilterChain&, const FilterChain&) = default;

 private:
  std::vector<FilterGene> genes_;
};

// Throws ParseError on malformed text and ArgumentError on invariant violations.
FilterChain parse_chain(std::string_view text);

// Lower/upper bound of each entry of FilterChain::parameters().
double parameter_lower_bound(std::size_t param_index);
double parameter_upper_bound(std::size_t param_index);

// The manipulated image for one filter at intensity alpha in [0.5, 1.5].
Image apply_filter(const Image& image, FilterKind kind, double alpha);

// (1 - s) * x + s * x_star per value.
Image strength_blend(const Image& x, const Image& x_star, double s);

// Left-to-right fold of blend(img, apply_filter(img, kind, alpha), strength).
// The span form accepts any gene sequence; the chain form is the genotype.
Image apply_genes(const Image& image, std::span<const FilterGene> genes);
Image apply_chain(const Image& image, const FilterChain& chain);

FilterGene random_gene(FilterKind kind, Rng& rng);

}  // namespace filterattack
