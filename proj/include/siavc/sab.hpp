#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "siavc/core.hpp"
#include "siavc/otsu.hpp"
#include "siavc/serialize.hpp"

namespace siavc {

/// Per-sample consistency-loss history plus the gate flags consumed on each
/// sample's next encounter. Histories are append-only within a run.
///
/// In pooled mode the OTSU threshold is computed over all recorded losses
/// instead of the one sample's own history.
class LossHistoryStore {
 public:
  explicit LossHistoryStore(bool pooled = false, int min_history = 2,
                            int otsu_bins = 256)
      : pooled_(pooled), min_history_(min_history), otsu_bins_(otsu_bins) {
    if (min_history < 2) {
      throw std::invalid_argument("LossHistoryStore: min_history must be >= 2");
    }
  }

  void record(SampleId id, double loss) {
    if (!std::isfinite(loss) || loss < 0.0) {
      throw std::invalid_argument(
          "LossHistoryStore: loss must be finite and >= 0");
    }
    history_[id].push_back(loss);
    if (pooled_) pooled_values_.push_back(loss);
  }

  const std::vector<double>* history(SampleId id) const {
    auto it = history_.find(id);
    return it == history_.end() ? nullptr : &it->second;
  }

  /// OTSU threshold of the reference population for this sample, when
  /// computable.
  std::optional<double> threshold(SampleId id) const {
    const std::vector<double>* values;
    if (pooled_) {
      values = &pooled_values_;
    } else {
      values = history(id);
      if (values == nullptr) return std::nullopt;
    }
    if (static_cast<int>(values->size()) < min_history_) return std::nullopt;
    return otsu_threshold(*values, otsu_bins_);
  }

  /// True iff the recorded history supports a threshold and current_loss
  /// falls strictly below it. Pure: does not touch the store.
  bool should_superaugment(SampleId id, double current_loss) const {
    if (!std::isfinite(current_loss)) {
      throw std::invalid_argument("should_superaugment: loss must be finite");
    }
    const auto thr = threshold(id);
    return thr.has_value() && current_loss < *thr;
  }

  void set_flag(SampleId id, bool gated) {
    if (gated) {
      flags_[id] = true;
    } else {
      flags_.erase(id);
    }
  }

  bool peek_flag(SampleId id) const { return flags_.count(id) > 0; }

  /// Returns the flag and clears it.
  bool consume_flag(SampleId id) {
    auto it = flags_.find(id);
    if (it == flags_.end()) return false;
    flags_.erase(it);
    return true;
  }

  std::size_t tracked_samples() const { return history_.size(); }

  // --- diagnostics -------------------------------------------------------

  struct DiagRow {
    SampleId id;
    std::int64_t iteration;
    double loss;
    double threshold;  // NaN when not computable
    bool gated;
  };

  void enable_diagnostics() { diagnostics_enabled_ = true; }
  bool diagnostics_enabled() const { return diagnostics_enabled_; }

  void log_diag(SampleId id, std::int64_t iteration, double loss,
                std::optional<double> thr, bool gated) {
    if (!diagnostics_enabled_) return;
    diag_.push_back({id, iteration, loss,
                     thr.value_or(std::numeric_limits<double>::quiet_NaN()),
                     gated});
  }

  void dump_csv(std::ostream& os) const {
    os << "sample_id,iteration,loss,threshold,gated\n";
    for (const auto& r : diag_) {
      os << r.id << ',' << r.iteration << ',' << r.loss << ',';
      if (std::isnan(r.threshold)) {
        os << "nan";
      } else {
        os << r.threshold;
      }
      os << ',' << (r.gated ? 1 : 0) << '\n';
    }
  }

  // --- checkpointing ------------------------------------------------------

  void save(std::ostream& os) const {
    io::write_le<std::uint8_t>(os, pooled_ ? 1 : 0);
    io::write_le<std::int32_t>(os, min_history_);
    io::write_le<std::int32_t>(os, otsu_bins_);
    io::write_le<std::uint64_t>(os, history_.size());
    for (const auto& [id, seq] : history_) {
      io::write_le<std::int64_t>(os, id);
      io::write_f64_array(os, seq.data(), seq.size());
    }
    io::write_f64_array(os, pooled_values_.data(), pooled_values_.size());
    io::write_le<std::uint64_t>(os, flags_.size());
    for (const auto& [id, _] : flags_) io::write_le<std::int64_t>(os, id);
  }

  static LossHistoryStore load(std::istream& is) {
    const bool pooled = io::read_le<std::uint8_t>(is) != 0;
    const int min_history = io::read_le<std::int32_t>(is);
    const int bins = io::read_le<std::int32_t>(is);
    LossHistoryStore store(pooled, min_history, bins);
    const auto n = io::read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto id = io::read_le<std::int64_t>(is);
      store.history_[id] = io::read_f64_array(is);
    }
    store.pooled_values_ = io::read_f64_array(is);
    const auto nf = io::read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < nf; ++i) {
      store.flags_[io::read_le<std::int64_t>(is)] = true;
    }
    return store;
  }

  bool operator==(const LossHistoryStore& o) const {
    return pooled_ == o.pooled_ && min_history_ == o.min_history_ &&
           otsu_bins_ == o.otsu_bins_ && history_ == o.history_ &&
           pooled_values_ == o.pooled_values_ && flags_ == o.flags_;
  }

 private:
  bool pooled_ = false;
  int min_history_ = 2;
  int otsu_bins_ = 256;
  std::map<SampleId, std::vector<double>> history_;
  std::vector<double> pooled_values_;
  std::map<SampleId, bool> flags_;
  bool diagnostics_enabled_ = false;
  std::vector<DiagRow> diag_;
};

}  // namespace siavc
