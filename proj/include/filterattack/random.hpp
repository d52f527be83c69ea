#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace filterattack {

// Seeded random stream. The std:: distributions are implementation-defined,
// so the draws are derived directly from the 64-bit engine output to keep
// runs bitwise reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  // Standard normal (Box-Muller, one value per call).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace filterattack
