#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "siavc/core.hpp"
#include "siavc/serialize.hpp"

namespace siavc {

/// Self-adaptive pseudo-label threshold state: an EMA of the batch-mean
/// confidence (global), of the mean class probabilities (local), and of the
/// predicted-class histogram. With use_sat off it degrades to a fixed
/// threshold and ignores the running estimates.
class ThresholdState {
 public:
  ThresholdState() = default;

  static ThresholdState init(int n_classes, double ema_momentum = 0.999,
                             bool use_sat = true,
                             double fixed_threshold = 0.95) {
    if (n_classes < 2) {
      throw std::invalid_argument("ThresholdState: n_classes must be >= 2");
    }
    if (!(ema_momentum > 0.0 && ema_momentum <= 1.0)) {
      throw std::invalid_argument("ThresholdState: momentum must be in (0,1]");
    }
    ThresholdState s;
    s.n_classes_ = n_classes;
    s.momentum_ = ema_momentum;
    s.use_sat_ = use_sat;
    s.fixed_ = fixed_threshold;
    const double u = 1.0 / n_classes;
    s.tau_global_ = u;
    s.p_local_.assign(n_classes, u);
    s.h_local_.assign(n_classes, u);
    return s;
  }

  /// EMA update from one batch of weak-view predictions. Empty batches are
  /// a no-op.
  void update(std::span<const Prediction> weak_preds) {
    if (weak_preds.empty()) return;
    const double n = static_cast<double>(weak_preds.size());
    double mean_max = 0.0;
    std::vector<double> mean_probs(n_classes_, 0.0);
    std::vector<double> hist(n_classes_, 0.0);
    for (const auto& q : weak_preds) {
      if (q.size() != n_classes_) {
        throw std::invalid_argument("ThresholdState: class count mismatch");
      }
      mean_max += q.max();
      for (int c = 0; c < n_classes_; ++c) mean_probs[c] += q[c];
      hist[q.argmax()] += 1.0;
    }
    mean_max /= n;
    for (int c = 0; c < n_classes_; ++c) {
      mean_probs[c] /= n;
      hist[c] /= n;
    }
    const double m = momentum_;
    tau_global_ = m * tau_global_ + (1.0 - m) * mean_max;
    for (int c = 0; c < n_classes_; ++c) {
      p_local_[c] = m * p_local_[c] + (1.0 - m) * mean_probs[c];
      h_local_[c] = m * h_local_[c] + (1.0 - m) * hist[c];
    }
  }

  /// Per-class threshold MaxNorm(p_local) * tau_global, or the fixed
  /// constant when self-adaptation is off.
  double tau_final(int c) const {
    if (c < 0 || c >= n_classes_) {
      throw std::invalid_argument("tau_final: class out of range");
    }
    if (!use_sat_) return fixed_;
    const double p_max =
        *std::max_element(p_local_.begin(), p_local_.end());
    return p_local_[c] / p_max * tau_global_;
  }

  int n_classes() const { return n_classes_; }
  double tau_global() const { return tau_global_; }
  const std::vector<double>& p_local() const { return p_local_; }
  const std::vector<double>& h_local() const { return h_local_; }
  double ema_momentum() const { return momentum_; }
  bool use_sat() const { return use_sat_; }
  double fixed_threshold() const { return fixed_; }

  void save(std::ostream& os) const {
    io::write_le<std::int32_t>(os, n_classes_);
    io::write_f64(os, momentum_);
    io::write_le<std::uint8_t>(os, use_sat_ ? 1 : 0);
    io::write_f64(os, fixed_);
    io::write_f64(os, tau_global_);
    io::write_f64_array(os, p_local_.data(), p_local_.size());
    io::write_f64_array(os, h_local_.data(), h_local_.size());
  }

  static ThresholdState load(std::istream& is) {
    ThresholdState s;
    s.n_classes_ = io::read_le<std::int32_t>(is);
    s.momentum_ = io::read_f64(is);
    s.use_sat_ = io::read_le<std::uint8_t>(is) != 0;
    s.fixed_ = io::read_f64(is);
    s.tau_global_ = io::read_f64(is);
    s.p_local_ = io::read_f64_array(is);
    s.h_local_ = io::read_f64_array(is);
    if (static_cast<int>(s.p_local_.size()) != s.n_classes_ ||
        static_cast<int>(s.h_local_.size()) != s.n_classes_) {
      throw std::runtime_error("ThresholdState: corrupt payload");
    }
    return s;
  }

  bool operator==(const ThresholdState& o) const {
    return n_classes_ == o.n_classes_ && momentum_ == o.momentum_ &&
           use_sat_ == o.use_sat_ && fixed_ == o.fixed_ &&
           tau_global_ == o.tau_global_ && p_local_ == o.p_local_ &&
           h_local_ == o.h_local_;
  }

 private:
  int n_classes_ = 0;
  double momentum_ = 0.999;
  bool use_sat_ = true;
  double fixed_ = 0.95;
  double tau_global_ = 0.0;
  std::vector<double> p_local_;
  std::vector<double> h_local_;
};

}  // namespace siavc
