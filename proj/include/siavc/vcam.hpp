#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "siavc/core.hpp"
#include "siavc/rng.hpp"
#include "siavc/serialize.hpp"

namespace siavc {

enum class QueueOrigin : std::uint8_t { kLabeled = 0, kPromoted = 1 };

struct LabeledQueueEntry {
  VideoTensor video;
  int label = 0;
  SampleId id = 0;
  QueueOrigin origin = QueueOrigin::kLabeled;
};

struct UnlabeledQueueEntry {
  VideoTensor video;
  SampleId id = 0;
  int pseudo_label = -1;  // latest argmax of the model's weak prediction
};

/// Beta(alpha, alpha) folded onto [0.5, 1] so interpolation always leans
/// toward the labeled parent.
inline double sample_lambda(double alpha, RngStream& rng) {
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("sample_lambda: alpha must be > 0");
  }
  const double lam = rng.beta(alpha, alpha);
  return std::max(lam, 1.0 - lam);
}

/// Convex interpolation of two videos with their labels and the
/// discriminator target 1 - lambda.
inline PseudoLabeledSample interpolate(const VideoTensor& labeled_video,
                                       int labeled_label,
                                       const VideoTensor& unlabeled_video,
                                       int pseudo_label, double lam,
                                       int n_classes) {
  if (!labeled_video.same_shape(unlabeled_video)) {
    throw std::invalid_argument("interpolate: shape mismatch");
  }
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw std::invalid_argument("interpolate: lambda out of [0,1]");
  }
  VideoTensor mixed = labeled_video;
  const float fl = static_cast<float>(lam);
  const float fu = 1.0f - fl;
  float* out = mixed.data();
  const float* u = unlabeled_video.data();
  if (lam == 1.0) {
    // keep the labeled parent bit-exact
  } else if (lam == 0.0) {
    mixed = unlabeled_video;
  } else {
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      out[i] = fl * out[i] + fu * u[i];
    }
  }
  std::vector<double> soft(n_classes, 0.0);
  const auto yl = onehot(labeled_label, n_classes);
  const auto yu = onehot(pseudo_label, n_classes);
  for (int c = 0; c < n_classes; ++c) soft[c] = lam * yl[c] + (1.0 - lam) * yu[c];
  return PseudoLabeledSample(std::move(mixed), std::move(soft), lam);
}

/// The two cross-set queues. Q_L carries ground-truth labeled samples plus
/// promotions of high-confidence unlabeled ones; Q_U carries every unlabeled
/// sample seen so far together with its latest pseudo label.
class AugmentationQueues {
 public:
  AugmentationQueues() = default;

  void add_labeled(const LabeledSample& s) {
    q_labeled_.push_back({s.video, s.label, s.id, QueueOrigin::kLabeled});
  }

  /// Records the latest pseudo label for u and, when the prediction clears
  /// tau, admits (or relabels) u in Q_L as a promoted entry. Returns true
  /// when the promoted side changed.
  bool promote(const UnlabeledSample& u, const Prediction& pred, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw std::invalid_argument("promote: tau must be in (0,1)");
    }
    const int label = pred.argmax();
    auto it = unlabeled_index_.find(u.id);
    if (it == unlabeled_index_.end()) {
      unlabeled_index_[u.id] = q_unlabeled_.size();
      q_unlabeled_.push_back({u.video, u.id, label});
    } else {
      q_unlabeled_[it->second].pseudo_label = label;
    }
    if (!(pred.max() > tau)) return false;
    auto pit = promoted_index_.find(u.id);
    if (pit != promoted_index_.end()) {
      auto& entry = q_labeled_[pit->second];
      const bool changed = entry.label != label;
      entry.label = label;  // replacement, never a duplicate
      return changed;
    }
    promoted_index_[u.id] = q_labeled_.size();
    q_labeled_.push_back({u.video, label, u.id, QueueOrigin::kPromoted});
    return true;
  }

  /// Shuffles both queues and pairs them one to one, cycling the shorter
  /// one, with an independent lambda per pair. Empty on either side means
  /// the caller should skip the cross-set loss this step.
  std::optional<std::vector<PseudoLabeledSample>> generate_batch(
      std::size_t n, double alpha, RngStream& rng, int n_classes) const {
    if (q_labeled_.empty() || q_unlabeled_.empty()) return std::nullopt;
    std::vector<std::size_t> order_l(q_labeled_.size());
    std::vector<std::size_t> order_u(q_unlabeled_.size());
    for (std::size_t i = 0; i < order_l.size(); ++i) order_l[i] = i;
    for (std::size_t i = 0; i < order_u.size(); ++i) order_u[i] = i;
    rng.shuffle(order_l.begin(), order_l.end());
    rng.shuffle(order_u.begin(), order_u.end());
    std::vector<PseudoLabeledSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& l = q_labeled_[order_l[i % order_l.size()]];
      const auto& u = q_unlabeled_[order_u[i % order_u.size()]];
      const double lam = sample_lambda(alpha, rng);
      out.push_back(
          interpolate(l.video, l.label, u.video, u.pseudo_label, lam,
                      n_classes));
    }
    return out;
  }

  const std::vector<LabeledQueueEntry>& labeled_queue() const {
    return q_labeled_;
  }
  const std::vector<UnlabeledQueueEntry>& unlabeled_queue() const {
    return q_unlabeled_;
  }

  std::size_t promoted_count() const { return promoted_index_.size(); }

  /// Queue bookkeeping is persisted as sample ids; videos are re-attached
  /// from the dataset on load.
  void save_ids(std::ostream& os) const {
    io::write_le<std::uint64_t>(os, q_labeled_.size());
    for (const auto& e : q_labeled_) {
      io::write_le<std::int64_t>(os, e.id);
      io::write_le<std::int32_t>(os, e.label);
      io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.origin));
    }
    io::write_le<std::uint64_t>(os, q_unlabeled_.size());
    for (const auto& e : q_unlabeled_) {
      io::write_le<std::int64_t>(os, e.id);
      io::write_le<std::int32_t>(os, e.pseudo_label);
    }
  }

  template <typename VideoLookup>
  static AugmentationQueues load_ids(std::istream& is,
                                     VideoLookup&& video_by_id) {
    AugmentationQueues q;
    const auto nl = io::read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < nl; ++i) {
      LabeledQueueEntry e;
      e.id = io::read_le<std::int64_t>(is);
      e.label = io::read_le<std::int32_t>(is);
      e.origin = static_cast<QueueOrigin>(io::read_le<std::uint8_t>(is));
      e.video = video_by_id(e.id);
      if (e.origin == QueueOrigin::kPromoted) {
        q.promoted_index_[e.id] = q.q_labeled_.size();
      }
      q.q_labeled_.push_back(std::move(e));
    }
    const auto nu = io::read_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < nu; ++i) {
      UnlabeledQueueEntry e;
      e.id = io::read_le<std::int64_t>(is);
      e.pseudo_label = io::read_le<std::int32_t>(is);
      e.video = video_by_id(e.id);
      q.unlabeled_index_[e.id] = q.q_unlabeled_.size();
      q.q_unlabeled_.push_back(std::move(e));
    }
    return q;
  }

 private:
  std::vector<LabeledQueueEntry> q_labeled_;
  std::vector<UnlabeledQueueEntry> q_unlabeled_;
  std::map<SampleId, std::size_t> promoted_index_;
  std::map<SampleId, std::size_t> unlabeled_index_;
};

}  // namespace siavc
