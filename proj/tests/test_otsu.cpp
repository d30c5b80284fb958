#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "siavc/otsu.hpp"
#include "siavc/rng.hpp"

using siavc::otsu_threshold;
using siavc::RngStream;

namespace {

// Independent oracle: naive exhaustive search over every interior bin edge,
// recomputing class weights and means from scratch per candidate.
std::optional<double> otsu_brute_force(const std::vector<double>& values,
                                       int bins = 256) {
  if (values.size() < 2) return std::nullopt;
  const double lo = *std::min_element(values.begin(), values.end());
  const double hi = *std::max_element(values.begin(), values.end());
  if (!(hi > lo)) return std::nullopt;
  const double width = (hi - lo) / bins;
  std::vector<long> hist(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (b >= bins) b = bins - 1;
    ++hist[b];
  }
  double best_var = -1.0;
  int best_edge = -1;
  for (int edge = 1; edge < bins; ++edge) {
    long n0 = 0, n1 = 0;
    double s0 = 0.0, s1 = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double center = lo + (b + 0.5) * width;
      if (b < edge) {
        n0 += hist[b];
        s0 += hist[b] * center;
      } else {
        n1 += hist[b];
        s1 += hist[b] * center;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double mu0 = s0 / n0, mu1 = s1 / n1;
    const double w0 = static_cast<double>(n0) / values.size();
    const double w1 = static_cast<double>(n1) / values.size();
    const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_edge = edge;
    }
  }
  if (best_edge < 0) return std::nullopt;
  return lo + best_edge * width;
}

}  // namespace

TEST(Otsu, SeparatesTwoPairs) {
  const std::vector<double> values = {0.1, 0.12, 0.9, 0.95};
  const auto thr = otsu_threshold(values);
  ASSERT_TRUE(thr.has_value());
  EXPECT_GT(*thr, 0.12);
  EXPECT_LT(*thr, 0.9);
  const auto oracle = otsu_brute_force(values);
  ASSERT_TRUE(oracle.has_value());
  EXPECT_DOUBLE_EQ(*thr, *oracle);
}

TEST(Otsu, ZeroRangeNotComputable) {
  EXPECT_FALSE(otsu_threshold(std::vector<double>{0.2, 0.2, 0.2}).has_value());
  EXPECT_FALSE(otsu_threshold(std::vector<double>{0.2}).has_value());
  EXPECT_FALSE(otsu_threshold(std::vector<double>{}).has_value());
}

TEST(Otsu, TwoClustersLandBetween) {
  RngStream rng(11);
  std::vector<double> values;
  for (int i = 0; i < 100; ++i) values.push_back(0.1 + 0.02 * rng.uniform());
  for (int i = 0; i < 100; ++i) values.push_back(0.9 + 0.02 * rng.uniform());
  const auto thr = otsu_threshold(values);
  ASSERT_TRUE(thr.has_value());
  EXPECT_GT(*thr, 0.2);
  EXPECT_LT(*thr, 0.8);
  EXPECT_DOUBLE_EQ(*thr, *otsu_brute_force(values));
}

TEST(Otsu, MatchesBruteForceOn1000RandomInputs) {
  RngStream rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(40));
    std::vector<double> values(n);
    const double scale = std::exp(rng.uniform(-3.0, 3.0));
    for (auto& v : values) v = scale * rng.uniform();
    const auto got = otsu_threshold(values);
    const auto expected = otsu_brute_force(values);
    ASSERT_EQ(got.has_value(), expected.has_value()) << "trial " << trial;
    if (got.has_value()) {
      ASSERT_DOUBLE_EQ(*got, *expected) << "trial " << trial;
    }
  }
}

TEST(Otsu, ThresholdWithinValueRange) {
  RngStream rng(45);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> values(3 + rng.uniform_int(30));
    for (auto& v : values) v = rng.uniform(-5.0, 5.0);
    const auto thr = otsu_threshold(values);
    if (!thr.has_value()) continue;
    EXPECT_GE(*thr, *std::min_element(values.begin(), values.end()));
    EXPECT_LE(*thr, *std::max_element(values.begin(), values.end()));
  }
}

// Histogram construction is range-relative, so a positive rescale moves the
// threshold by the same factor up to one bin of quantization.
TEST(Otsu, PositiveScalingEquivariance) {
  RngStream rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> values(10 + rng.uniform_int(50));
    for (auto& v : values) v = rng.uniform(0.0, 2.0);
    const double scale = std::exp(rng.uniform(-2.0, 2.0));
    const auto base = otsu_threshold(values);
    if (!base.has_value()) continue;
    std::vector<double> scaled = values;
    for (auto& v : scaled) v *= scale;
    const auto thr = otsu_threshold(scaled);
    ASSERT_TRUE(thr.has_value());
    const double lo = *std::min_element(scaled.begin(), scaled.end());
    const double hi = *std::max_element(scaled.begin(), scaled.end());
    const double bin_width = (hi - lo) / 256.0;
    EXPECT_NEAR(*thr, *base * scale, bin_width + 1e-12);
  }
}
