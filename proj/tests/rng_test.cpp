#include "gacsim/rng.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>
#include <vector>

namespace {

using gacsim::Rng;
using gacsim::Stream;
using gacsim::derive_seed;

TEST(DeriveSeed, DeterministicAndSensitiveToEveryInput) {
  const std::uint64_t base = derive_seed(42, Stream::rollout, 7);
  EXPECT_EQ(base, derive_seed(42, Stream::rollout, 7));
  EXPECT_NE(base, derive_seed(43, Stream::rollout, 7));
  EXPECT_NE(base, derive_seed(42, Stream::lag, 7));
  EXPECT_NE(base, derive_seed(42, Stream::rollout, 8));
}

TEST(DeriveSeed, StreamsDoNotCollideAcrossSteps) {
  // A step-indexed seed from one stream must not reproduce another stream's
  // seed at a shifted step; collect a grid and require all distinct.
  std::set<std::uint64_t> seen;
  const Stream streams[] = {Stream::rollout, Stream::lag, Stream::init,
                            Stream::noise, Stream::scratch};
  for (Stream s : streams)
    for (std::uint64_t step = 0; step < 100; ++step)
      seen.insert(derive_seed(1234, s, step));
  EXPECT_EQ(seen.size(), 500u);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, NextDoubleInUnitInterval) {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.next_double();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NextDoubleCarries53Bits) {
  // The low mantissa bits must be alive: multiples of 2^-53 that are odd in
  // the last place appear only if all 53 bits are used.
  Rng rng(11);
  bool saw_odd_ulp = false;
  for (int i = 0; i < 10000 && !saw_odd_ulp; ++i) {
    const double u = rng.next_double();
    const auto scaled = static_cast<std::uint64_t>(u * 0x1p53);
    if (scaled & 1ULL) saw_odd_ulp = true;
  }
  EXPECT_TRUE(saw_odd_ulp);
}

TEST(Rng, GaussianMomentsAreSane) {
  Rng rng(2024);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_gaussian();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Rng, GaussianSpareIsDeterministic) {
  // Box-Muller produces pairs; interleaving other draws must not perturb the
  // pair sequence of a dedicated engine.
  Rng a(5), b(5);
  std::vector<double> xs, ys;
  for (int i = 0; i < 64; ++i) xs.push_back(a.next_gaussian());
  for (int i = 0; i < 64; ++i) ys.push_back(b.next_gaussian());
  EXPECT_EQ(xs, ys);
}

TEST(Rng, NextIndexStaysInRange) {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t idx = rng.next_index(7);
    ASSERT_LT(idx, 7u);
  }
  for (int i = 0; i < 100; ++i) ASSERT_EQ(rng.next_index(1), 0u);
  EXPECT_THROW(rng.next_index(0), std::invalid_argument);
}

TEST(Rng, NextIndexCoversAllValues) {
  Rng rng(23);
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(rng.next_index(5));
  EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, CategoricalRejectsBadWeights) {
  Rng rng(3);
  EXPECT_THROW(rng.next_categorical(std::vector<double>{}),
               std::invalid_argument);
  EXPECT_THROW(rng.next_categorical(std::vector<double>{0.5, -0.1}),
               std::invalid_argument);
  EXPECT_THROW(rng.next_categorical(std::vector<double>{0.0, 0.0}),
               std::invalid_argument);
}

TEST(Rng, CategoricalNeverDrawsZeroWeight) {
  Rng rng(31);
  const std::vector<double> w{0.5, 0.0, 0.5};
  for (int i = 0; i < 20000; ++i) ASSERT_NE(rng.next_categorical(w), 1u);
}

TEST(Rng, CategoricalMatchesWeights) {
  // Chi-squared goodness of fit, 2 degrees of freedom; 13.816 is the 0.999
  // quantile, so a correct sampler fails one run in a thousand and the seed
  // is fixed.
  Rng rng(111);
  const std::vector<double> w{0.2, 0.3, 0.5};
  const int n = 30000;
  std::array<int, 3> counts{};
  for (int i = 0; i < n; ++i) ++counts[rng.next_categorical(w)];
  double chi_sq = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double expected = w[k] * n;
    const double d = counts[k] - expected;
    chi_sq += d * d / expected;
  }
  EXPECT_LT(chi_sq, 13.816);
}

TEST(Rng, CategoricalNormalizesOnTheFly) {
  // Unnormalized weights and their normalized form must draw identically
  // from the same engine state.
  Rng a(77), b(77);
  const std::vector<double> raw{2.0, 6.0, 2.0};
  const std::vector<double> normalized{0.2, 0.6, 0.2};
  for (int i = 0; i < 5000; ++i)
    ASSERT_EQ(a.next_categorical(raw), b.next_categorical(normalized));
}

TEST(Rng, GaussianVectorMatchesScalarDraws) {
  Rng a(13), b(13);
  const std::vector<double> v = a.gaussian_vector(10);
  for (std::size_t i = 0; i < v.size(); ++i)
    ASSERT_EQ(v[i], b.next_gaussian());
}

}  // namespace
