#include <doctest.h>

#include <cmath>

#include "filterattack/random.hpp"

using filterattack::Rng;

TEST_CASE("rng streams repeat per seed") {
  Rng a(3), b(3), c(4);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK((x >= 0.0 && x < 1.0));
  }
  CHECK(Rng(3).uniform() != c.uniform());
}

TEST_CASE("rng index covers the range uniformly") {
  Rng rng(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.index(7)];
  for (int n : counts) CHECK(std::abs(n - 10000) < 500);
  CHECK(rng.index(1) == 0);
}

TEST_CASE("rng normal moments") {
  Rng rng(2);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.03);
}

TEST_CASE("rng first draws are pinned") {
  // The stream is part of the reproducibility contract: these values come
  // from the 64-bit Mersenne Twister seeded with 0.
  Rng rng(0);
  const std::uint64_t first = std::mt19937_64(0)();
  CHECK(rng.uniform() == static_cast<double>(first >> 11) * 0x1.0p-53);
}
