#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dflsim/rng.hpp"

using dflsim::Rng;
using dflsim::derive_seed;

TEST_CASE("same seed gives identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int equal = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++equal;
  CHECK(equal < 5);
}

TEST_CASE("uniform stays in [0, 1) and covers the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("normal has roughly unit variance") {
  Rng rng(11);
  double sum = 0.0, ss = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    ss += z * z;
  }
  const double mean = sum / n;
  const double var = ss / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("uniform_int respects the bound") {
  Rng rng(3);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 10000; ++i) ++counts[rng.uniform_int(10)];
  for (const int c : counts) CHECK(c > 800);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v(20);
  for (int i = 0; i < 20; ++i) v[static_cast<std::size_t>(i)] = i;
  auto w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::sort(v.begin(), v.end());
  for (int i = 0; i < 20; ++i) CHECK(v[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("derive_seed separates streams and indices") {
  CHECK(derive_seed(1, "data") == derive_seed(1, "data"));
  CHECK(derive_seed(1, "data") != derive_seed(1, "train"));
  CHECK(derive_seed(1, "data") != derive_seed(2, "data"));
  CHECK(derive_seed(1, "train", 0, 1) != derive_seed(1, "train", 1, 0));
}
