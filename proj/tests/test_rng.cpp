#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "siavc/rng.hpp"

using siavc::RngStream;

TEST(Rng, SameSeedSameSequence) {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(Rng, UniformRange) {
  RngStream rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, UniformIntBounds) {
  RngStream rng(2);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform_int(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) {
    EXPECT_NEAR(c, 10000, 500);
  }
  EXPECT_THROW(rng.uniform_int(0), std::invalid_argument);
}

TEST(Rng, NormalMoments) {
  RngStream rng(3);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum2 / n, 1.0, 0.02);
}

// Beta(a, a) is symmetric around 1/2; Monte-Carlo check of the sampler.
TEST(Rng, BetaSymmetricMean) {
  RngStream rng(4);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double b = rng.beta(0.75, 0.75);
    ASSERT_GE(b, 0.0);
    ASSERT_LE(b, 1.0);
    sum += b;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, BetaVarianceMatchesClosedForm) {
  // Var = a*b / ((a+b)^2 (a+b+1)) = 0.1 for a = b = 0.75
  RngStream rng(5);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double b = rng.beta(0.75, 0.75);
    sum += b;
    sum2 += b * b;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  EXPECT_NEAR(var, 0.1, 0.005);
}

TEST(Rng, GammaRejectsBadShape) {
  RngStream rng(6);
  EXPECT_THROW(rng.gamma(0.0), std::invalid_argument);
  EXPECT_THROW(rng.gamma(-1.0), std::invalid_argument);
}

TEST(Rng, ShuffleIsPermutation) {
  RngStream rng(7);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(w.begin(), w.end());
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Rng, StateRoundTrip) {
  RngStream a(99);
  for (int i = 0; i < 123; ++i) a.normal();
  const std::string state = a.save_state();
  RngStream b(0);
  b.load_state(state);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(Rng, MixSeedSpreadsStreams) {
  EXPECT_NE(siavc::mix_seed(7, 1), siavc::mix_seed(7, 2));
  EXPECT_NE(siavc::mix_seed(7, 1), siavc::mix_seed(8, 1));
}
