#include "gacsim/gradvec.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gacsim/rng.hpp"
#include "oracles.hpp"

namespace {

using gacsim::GradientVector;
using gacsim::Rng;
using gacsim::ShardLayout;
using gacsim::decompose;
using gacsim::anisotropic_rescale;
using gacsim::dot;
using gacsim::norm;
using gacsim::norm_sq;
using gacsim::sharded_reduce;

GradientVector random_vector(Rng& rng, std::size_t dim) {
  return GradientVector(rng.gaussian_vector(dim));
}

TEST(GradientVector, RejectsNonFiniteEntries) {
  EXPECT_THROW(GradientVector({1.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(GradientVector({std::numeric_limits<double>::infinity()}),
               std::invalid_argument);
}

TEST(GradientVector, ArithmeticOperators) {
  const GradientVector a({1.0, 2.0, 3.0});
  const GradientVector b({4.0, 5.0, 6.0});
  const GradientVector sum = a + b;
  const GradientVector diff = b - a;
  const GradientVector scaled = 2.0 * a;
  EXPECT_EQ(sum.values(), (std::vector<double>{5.0, 7.0, 9.0}));
  EXPECT_EQ(diff.values(), (std::vector<double>{3.0, 3.0, 3.0}));
  EXPECT_EQ(scaled.values(), (std::vector<double>{2.0, 4.0, 6.0}));
  EXPECT_THROW(a + GradientVector({1.0}), std::invalid_argument);
}

TEST(Dot, AccumulatesLeftToRight) {
  // With left-to-right accumulation, adding 1.0 to 1e16 is absorbed, then
  // the 1e16 cancels and the trailing 1.0 survives: the result is exactly 1.
  // A pairwise or compensated order would return 2 instead, so this value
  // pins the reduction order.
  const GradientVector a({1e16, 1.0, -1e16, 1.0});
  const GradientVector ones({1.0, 1.0, 1.0, 1.0});
  EXPECT_EQ(dot(a, ones), 1.0);
}

TEST(Dot, AgreesWithCompensatedOracle) {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 1 + rng.next_index(300);
    const GradientVector a = random_vector(rng, dim);
    const GradientVector b = random_vector(rng, dim);
    const long double want = oracles::compensated_dot(a.span(), b.span());
    const double got = dot(a, b);
    const double scale = std::max(1.0, static_cast<double>(std::fabs(want)));
    ASSERT_NEAR(got, static_cast<double>(want), 1e-12 * scale);
  }
}

TEST(ShardLayoutTest, EvenPartitionCoversEverything) {
  const ShardLayout layout = ShardLayout::even(10, 3);
  EXPECT_EQ(layout.rank_count(), 3u);
  EXPECT_EQ(layout.begin(0), 0u);
  EXPECT_EQ(layout.end(0), 4u);  // 10 = 4 + 3 + 3
  EXPECT_EQ(layout.begin(1), 4u);
  EXPECT_EQ(layout.end(1), 7u);
  EXPECT_EQ(layout.begin(2), 7u);
  EXPECT_EQ(layout.end(2), 10u);
  EXPECT_TRUE(layout.covers(10));
  EXPECT_FALSE(layout.covers(11));
}

TEST(ShardLayoutTest, RejectsDegenerateShapes) {
  EXPECT_THROW(ShardLayout::even(4, 0), std::invalid_argument);
  EXPECT_THROW(ShardLayout::even(4, 5), std::invalid_argument);
  EXPECT_THROW(ShardLayout({}), std::invalid_argument);
  EXPECT_THROW(ShardLayout({0}), std::invalid_argument);
  EXPECT_THROW(ShardLayout({3, 3}), std::invalid_argument);
  EXPECT_THROW(ShardLayout({5, 2}), std::invalid_argument);
}

TEST(ShardedReduce, SingleShardIsThePlainReduction) {
  Rng rng(500);
  const GradientVector a = random_vector(rng, 257);
  const GradientVector b = random_vector(rng, 257);
  const auto t = sharded_reduce(a, b, ShardLayout::single(257));
  EXPECT_EQ(t.dot_cross, dot(a, b));
  EXPECT_EQ(t.norm_sq_curr, norm_sq(a));
  EXPECT_EQ(t.norm_sq_prev, norm_sq(b));
}

TEST(ShardedReduce, ShardCountLeavesTripleNearlyInvariant) {
  // Different shard counts regroup the summation, so exact equality is not
  // promised across counts; agreement to relative 1e-12 is.
  Rng rng(501);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 2 + rng.next_index(500);
    const GradientVector a = random_vector(rng, dim);
    const GradientVector b = random_vector(rng, dim);
    const auto single = sharded_reduce(a, b, ShardLayout::single(dim));
    const std::size_t ranks = 1 + rng.next_index(std::min<std::size_t>(dim, 16));
    const auto sharded = sharded_reduce(a, b, ShardLayout::even(dim, ranks));
    const double scale = std::max(1.0, std::abs(single.dot_cross));
    ASSERT_NEAR(sharded.dot_cross, single.dot_cross, 1e-12 * scale);
    ASSERT_NEAR(sharded.norm_sq_curr, single.norm_sq_curr,
                1e-12 * std::max(1.0, single.norm_sq_curr));
    ASSERT_NEAR(sharded.norm_sq_prev, single.norm_sq_prev,
                1e-12 * std::max(1.0, single.norm_sq_prev));
  }
}

TEST(ShardedReduce, MismatchedShapesThrow) {
  const GradientVector a({1.0, 2.0});
  const GradientVector b({1.0});
  EXPECT_THROW(sharded_reduce(a, b, ShardLayout::single(2)),
               std::invalid_argument);
  EXPECT_THROW(sharded_reduce(a, a, ShardLayout::single(3)),
               std::invalid_argument);
}

TEST(Decompose, PartsRecombineAndSeparate) {
  Rng rng(502);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 2 + rng.next_index(64);
    const GradientVector g = random_vector(rng, dim);
    const GradientVector ref = random_vector(rng, dim);
    const auto d = decompose(g, ref);
    for (std::size_t i = 0; i < dim; ++i)
      ASSERT_NEAR(d.parallel[i] + d.orthogonal[i], g[i], 1e-15 * std::max(1.0, std::abs(g[i])));
    // The orthogonal part must be orthogonal to the reference and the
    // parallel part must be a pure multiple of it.
    ASSERT_NEAR(dot(d.orthogonal, ref), 0.0, 1e-12 * norm(g) * norm(ref));
    const double coeff = dot(g, ref) / norm_sq(ref);
    for (std::size_t i = 0; i < dim; ++i)
      ASSERT_NEAR(d.parallel[i], coeff * ref[i], 1e-12);
  }
}

TEST(Decompose, ZeroReferenceIsRefused) {
  const GradientVector g({1.0, 2.0});
  EXPECT_THROW(decompose(g, GradientVector::zeros(2)), std::invalid_argument);
  EXPECT_THROW(decompose(g, GradientVector({1e-31, 0.0})),
               std::invalid_argument);
}

TEST(AnisotropicRescale, UnitScalesAreTheIdentity) {
  Rng rng(503);
  const GradientVector g = random_vector(rng, 32);
  const GradientVector ref = random_vector(rng, 32);
  const GradientVector out = anisotropic_rescale(g, ref, 1.0, 1.0);
  for (std::size_t i = 0; i < g.dim(); ++i)
    ASSERT_NEAR(out[i], g[i], 1e-14 * std::max(1.0, std::abs(g[i])));
}

TEST(AnisotropicRescale, ZeroAlphaRemovesTheParallelComponent) {
  Rng rng(504);
  const GradientVector g = random_vector(rng, 32);
  const GradientVector ref = random_vector(rng, 32);
  const GradientVector out = anisotropic_rescale(g, ref, 0.0, 1.0);
  EXPECT_NEAR(dot(out, ref), 0.0, 1e-12 * norm(g) * norm(ref));
}

TEST(AnisotropicRescale, MatchesRankOneTransform) {
  // alpha * parallel + beta * orthogonal is the same linear map as
  // beta * I + (alpha - beta) * u u^T applied to g; check the materialized
  // form against the decomposition form.
  Rng rng(505);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 2 + rng.next_index(48);
    const GradientVector g = random_vector(rng, dim);
    const GradientVector ref = random_vector(rng, dim);
    const double alpha = rng.next_double();
    const double beta = 0.1 + rng.next_double();
    const GradientVector out = anisotropic_rescale(g, ref, alpha, beta);

    const double ref_norm = norm(ref);
    const double proj = dot(g, ref) / (ref_norm * ref_norm);
    for (std::size_t i = 0; i < dim; ++i) {
      const double expected = beta * g[i] + (alpha - beta) * proj * ref[i];
      ASSERT_NEAR(out[i], expected, 1e-12 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(AnisotropicRescale, NegativeScalesAreRefused) {
  const GradientVector g({1.0, 0.0});
  const GradientVector ref({0.0, 1.0});
  EXPECT_THROW(anisotropic_rescale(g, ref, -0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(anisotropic_rescale(g, ref, 1.0, -0.1), std::invalid_argument);
}

}  // namespace
