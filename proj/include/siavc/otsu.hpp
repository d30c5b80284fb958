#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace siavc {

/// Between-class-variance threshold over an equal-width histogram of the
/// values, range [min, max]. Candidate thresholds are the interior bin
/// edges; the edge maximizing w0*w1*(mu0-mu1)^2 wins, ties going to the
/// lowest edge. Returns nothing when fewer than two values are given or the
/// range is empty.
inline std::optional<double> otsu_threshold(std::span<const double> values,
                                            int bins = 256) {
  const std::size_t n = values.size();
  if (n < 2 || bins < 2) return std::nullopt;

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return std::nullopt;

  const double range = hi - lo;
  std::vector<std::int64_t> hist(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / range * bins);
    if (b >= bins) b = bins - 1;
    ++hist[b];
  }

  // Prefix counts and center-weighted sums; one pass per candidate edge.
  const double bin_width = range / bins;
  double best_var = -1.0;
  int best_edge = -1;
  std::int64_t count0 = 0;
  double sum0 = 0.0;
  std::int64_t total_count = static_cast<std::int64_t>(n);
  double total_sum = 0.0;
  for (int b = 0; b < bins; ++b) {
    total_sum += hist[b] * (lo + (b + 0.5) * bin_width);
  }
  for (int edge = 1; edge < bins; ++edge) {
    const int b = edge - 1;
    count0 += hist[b];
    sum0 += hist[b] * (lo + (b + 0.5) * bin_width);
    const std::int64_t count1 = total_count - count0;
    if (count0 == 0 || count1 == 0) continue;
    const double mu0 = sum0 / count0;
    const double mu1 = (total_sum - sum0) / count1;
    const double w0 = static_cast<double>(count0) / total_count;
    const double w1 = static_cast<double>(count1) / total_count;
    const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_edge = edge;
    }
  }
  if (best_edge < 0) return std::nullopt;
  return lo + best_edge * bin_width;
}

}  // namespace siavc
