#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "siavc/augment.hpp"
#include "siavc/core.hpp"
#include "siavc/data_io.hpp"
#include "siavc/losses.hpp"
#include "siavc/model.hpp"
#include "siavc/rng.hpp"
#include "siavc/sab.hpp"
#include "siavc/thresholds.hpp"
#include "siavc/vcam.hpp"

namespace siavc {

struct Schedule {
  double eta = 0.03;
  std::int64_t g = 0;
  std::int64_t G = 1;
};

/// Cosine decay eta * cos(7*pi*g / (16*G)); positive on the whole range.
inline double lr_at(const Schedule& s) {
  if (s.G < 1 || s.g < 0 || s.g > s.G) {
    throw std::invalid_argument("lr_at: need 0 <= g <= G, G >= 1");
  }
  return s.eta * std::cos(7.0 * std::numbers::pi * static_cast<double>(s.g) /
                          (16.0 * static_cast<double>(s.G)));
}

struct TrainMetrics {
  std::int64_t step = 0;
  double lr = 0.0;
  double l_cs = 0.0;
  double l_align = 0.0;
  double l_cons = 0.0;
  double l_fair = 0.0;
  double total = 0.0;
  double pseudo_acc = std::numeric_limits<double>::quiet_NaN();
  int sab_gates = 0;
  int vcam_promotions = 0;
  bool has_eval = false;
  double top1 = 0.0;
  double top5 = 0.0;
};

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string metrics_csv_header() {
  return "step,lr,l_cs,l_align,l_cons,l_fair,total,pseudo_acc,sab_gates,"
         "vcam_promotions,top1,top5";
}

inline std::string metrics_csv_row(const TrainMetrics& m) {
  std::ostringstream os;
  os << m.step << ',' << format_metric(m.lr) << ',' << format_metric(m.l_cs)
     << ',' << format_metric(m.l_align) << ',' << format_metric(m.l_cons)
     << ',' << format_metric(m.l_fair) << ',' << format_metric(m.total) << ','
     << format_metric(m.pseudo_acc) << ',' << m.sab_gates << ','
     << m.vcam_promotions << ',';
  if (m.has_eval) {
    os << format_metric(m.top1) << ',' << format_metric(m.top5);
  } else {
    os << ',';
  }
  return os.str();
}

/// Raised when a step produces a non-finite loss; carries the ids of the
/// offending batch for the diagnostic dump.
class TrainAbortError : public std::runtime_error {
 public:
  TrainAbortError(const std::string& msg, std::vector<SampleId> ids)
      : std::runtime_error(msg), ids_(std::move(ids)) {}
  const std::vector<SampleId>& batch_ids() const { return ids_; }

 private:
  std::vector<SampleId> ids_;
};

struct TrainReport {
  std::int64_t steps = 0;
  double final_top1 = 0.0;
  double final_top5 = 0.0;
  double best_top1 = 0.0;
  double best_top5 = 0.0;
  std::int64_t best_step = 0;
};

inline constexpr std::uint32_t kCheckpointMagic = 0x53564b43;  // "CKVS" LE
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// The training loop: augmentation, SAB gating, threshold adaptation, VCAM
/// interpolation, the four-term loss, SGD. Deterministic given the config
/// seed; all mutable state lives here and round-trips through checkpoints.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, DataSplit data, std::string out_dir = "")
      : cfg_(cfg),
        data_(std::move(data)),
        out_dir_(std::move(out_dir)),
        init_rng_(mix_seed(cfg.seed, 1)),
        data_rng_(mix_seed(cfg.seed, 2)),
        aug_rng_(mix_seed(cfg.seed, 3)),
        vcam_rng_(mix_seed(cfg.seed, 4)),
        model_(ModelConfig::from_run(cfg), init_rng_),
        thresholds_(ThresholdState::init(cfg.n_classes, cfg.ema_momentum,
                                         cfg.use_sat, cfg.fixed_threshold)),
        sab_(cfg.sab_pooled, cfg.sab_min_history, cfg.otsu_bins) {
    cfg_.validate();
    if (data_.labeled.empty()) {
      throw std::invalid_argument("Trainer: labeled set is empty");
    }
    if (!cfg_.supervised_only && data_.unlabeled.empty()) {
      throw std::invalid_argument(
          "Trainer: unlabeled set is empty (use supervised_only instead)");
    }
    for (const auto& s : data_.labeled) queues_.add_labeled(s);
    labeled_order_.resize(data_.labeled.size());
    for (std::size_t i = 0; i < labeled_order_.size(); ++i) {
      labeled_order_[i] = i;
    }
    data_rng_.shuffle(labeled_order_.begin(), labeled_order_.end());
    unlabeled_order_.resize(data_.unlabeled.size());
    for (std::size_t i = 0; i < unlabeled_order_.size(); ++i) {
      unlabeled_order_[i] = i;
    }
    if (!unlabeled_order_.empty()) {
      data_rng_.shuffle(unlabeled_order_.begin(), unlabeled_order_.end());
    }
    if (!out_dir_.empty()) {
      std::filesystem::create_directories(out_dir_);
    }
  }

  const RunConfig& config() const { return cfg_; }
  std::int64_t current_step() const { return step_; }
  const SiavcModel& model() const { return model_; }
  const ThresholdState& thresholds() const { return thresholds_; }
  const LossHistoryStore& sab_store() const { return sab_; }
  const AugmentationQueues& queues() const { return queues_; }
  const DataSplit& data() const { return data_; }

  void enable_sab_diagnostics() { sab_.enable_diagnostics(); }

  /// Test hook: observes every strong view right before the forward pass.
  std::function<void(std::int64_t step, SampleId id, const VideoTensor&)>
      strong_view_probe;

  TrainMetrics step() {
    if (step_ >= cfg_.total_steps) {
      throw std::logic_error("Trainer: run is already complete");
    }
    const double lr = lr_at({cfg_.lr, step_, cfg_.total_steps});

    TrainMetrics m;
    m.lr = lr;

    // (1) batches and augmented views
    const auto labeled_idx =
        next_batch(labeled_order_, labeled_pos_, cfg_.batch_labeled);
    std::vector<SampleId> batch_ids;
    for (auto i : labeled_idx) batch_ids.push_back(data_.labeled[i].id);

    std::vector<std::size_t> unlabeled_idx;
    std::vector<VideoTensor> weak_views, strong_views;
    std::vector<SampleId> unlabeled_ids;
    if (!cfg_.supervised_only) {
      unlabeled_idx =
          next_batch(unlabeled_order_, unlabeled_pos_, cfg_.batch_unlabeled);
      for (auto i : unlabeled_idx) {
        const auto& u = data_.unlabeled[i];
        unlabeled_ids.push_back(u.id);
        batch_ids.push_back(u.id);
        weak_views.push_back(weak_augment(u.video, aug_rng_));
        VideoTensor strong =
            strong_augment(u.video, aug_rng_, cfg_.randaug_ops);
        // (2) consume the gate set on this sample's previous encounter
        if (cfg_.use_sab && sab_.consume_flag(u.id)) {
          strong = super_augment(strong, cfg_.noise_sigma, cfg_.mask_lo,
                                 cfg_.mask_hi, aug_rng_, cfg_.mask_per_frame);
        }
        if (strong_view_probe) strong_view_probe(step_, u.id, strong);
        strong_views.push_back(std::move(strong));
      }
    }

    // (3) forward passes
    std::vector<Prediction> weak_preds;
    for (const auto& v : weak_views) weak_preds.push_back(model_.predict(v));

    std::vector<SiavcModel::Trace> strong_traces;
    strong_traces.reserve(strong_views.size());
    for (const auto& v : strong_views) {
      strong_traces.push_back(model_.forward(v));
    }

    std::vector<SiavcModel::Trace> labeled_traces;
    labeled_traces.reserve(labeled_idx.size());
    for (auto i : labeled_idx) {
      labeled_traces.push_back(model_.forward(data_.labeled[i].video));
    }

    // (4) threshold adaptation from the weak predictions
    thresholds_.update(weak_preds);

    // (5) promotions and (6) the cross-set batch
    std::vector<PseudoLabeledSample> vcam_batch;
    std::vector<SiavcModel::Trace> vcam_traces;
    if (cfg_.use_vcam && !cfg_.supervised_only) {
      for (std::size_t j = 0; j < unlabeled_idx.size(); ++j) {
        const auto& u = data_.unlabeled[unlabeled_idx[j]];
        if (queues_.promote(u, weak_preds[j], cfg_.vcam_tau)) {
          ++m.vcam_promotions;
        }
      }
      auto generated = queues_.generate_batch(
          static_cast<std::size_t>(cfg_.vcam_batch), cfg_.beta_alpha,
          vcam_rng_, cfg_.n_classes);
      if (generated.has_value()) {
        vcam_batch = std::move(*generated);
        vcam_traces.reserve(vcam_batch.size());
        for (const auto& s : vcam_batch) {
          vcam_traces.push_back(model_.forward(s.video));
        }
      }
    }

    // (7) the loss breakdown
    Eigen::MatrixXd labeled_logits = stack_logits(labeled_traces);
    std::vector<int> labels;
    for (auto i : labeled_idx) labels.push_back(data_.labeled[i].label);
    Eigen::MatrixXd d_cs;
    m.l_cs = supervised_loss_grad(labeled_logits, labels, &d_cs);

    Eigen::MatrixXd strong_logits = stack_logits(strong_traces);
    Eigen::MatrixXd d_cons, d_fair;
    ConsistencyResult cons;
    if (!cfg_.supervised_only) {
      cons = consistency_loss_grad(weak_preds, strong_logits, thresholds_,
                                   unlabeled_ids, &d_cons);
      m.l_cons = cons.value;
      if (cfg_.use_fairness) {
        m.l_fair =
            fairness_loss_grad(thresholds_, strong_logits, cons.mask, &d_fair);
      }
    }

    Eigen::MatrixXd d_align_cls;
    Eigen::VectorXd d_align_disc;
    if (!vcam_batch.empty()) {
      Eigen::MatrixXd vcam_logits = stack_logits(vcam_traces);
      Eigen::VectorXd disc_preacts(vcam_traces.size());
      for (std::size_t i = 0; i < vcam_traces.size(); ++i) {
        disc_preacts[static_cast<Eigen::Index>(i)] =
            vcam_traces[i].disc_preact;
      }
      m.l_align =
          alignment_loss_grad(vcam_batch, vcam_logits, disc_preacts, cfg_.rho,
                              &d_align_cls, &d_align_disc);
    }

    const double w_cons = cfg_.supervised_only ? 0.0 : cfg_.w_cons;
    const double w_fair = cfg_.use_fairness ? cfg_.w_fair : 0.0;
    const double w_align = vcam_batch.empty() ? 0.0 : cfg_.w_align;
    m.total = total_loss(m.l_cs, m.l_align, m.l_cons, m.l_fair, w_align,
                         w_cons, w_fair);
    if (!std::isfinite(m.total)) {
      throw TrainAbortError(
          "non-finite loss at step " + std::to_string(step_ + 1), batch_ids);
    }

    // (8) SAB bookkeeping from the per-sample consistency losses
    if (cfg_.use_sab && !cfg_.supervised_only) {
      for (const auto& [id, loss] : cons.per_sample) {
        const auto thr = sab_.threshold(id);
        const bool gate = thr.has_value() && loss < *thr;
        sab_.log_diag(id, step_ + 1, loss, thr, gate);
        sab_.record(id, loss);
        sab_.set_flag(id, gate);
        if (gate) ++m.sab_gates;
      }
    }

    // (9) backprop and the SGD step
    model_.zero_grad();
    for (std::size_t i = 0; i < labeled_traces.size(); ++i) {
      model_.backward(labeled_traces[i],
                      d_cs.row(static_cast<Eigen::Index>(i)), 0.0);
    }
    for (std::size_t j = 0; j < strong_traces.size(); ++j) {
      Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(cfg_.n_classes);
      if (w_cons > 0.0) d += w_cons * d_cons.row(static_cast<Eigen::Index>(j));
      if (w_fair > 0.0 && d_fair.rows() > 0) {
        d += w_fair * d_fair.row(static_cast<Eigen::Index>(j));
      }
      model_.backward(strong_traces[j], d, 0.0);
    }
    for (std::size_t k = 0; k < vcam_traces.size(); ++k) {
      model_.backward(vcam_traces[k],
                      w_align * d_align_cls.row(static_cast<Eigen::Index>(k)),
                      w_align * d_align_disc[static_cast<Eigen::Index>(k)]);
    }
    model_.sgd_step(static_cast<float>(lr), static_cast<float>(cfg_.momentum),
                    static_cast<float>(cfg_.weight_decay));

    // (10) advance and report
    ++step_;
    m.step = step_;
    m.pseudo_acc = pseudo_label_accuracy(weak_preds, unlabeled_ids, cons.mask);
    if (!data_.test.empty() &&
        (step_ % cfg_.eval_interval == 0 || step_ == cfg_.total_steps)) {
      const auto [top1, top5] = evaluate();
      m.has_eval = true;
      m.top1 = top1;
      m.top5 = top5;
      if (top1 > best_top1_) {
        best_top1_ = top1;
        best_top5_ = top5;
        best_step_ = step_;
      }
    }
    return m;
  }

  /// Runs to total_steps, streaming metrics to out_dir/metrics.csv and
  /// saving ckpt_{step}.bin checkpoints.
  TrainReport run() {
    std::ofstream metrics;
    if (!out_dir_.empty()) {
      metrics.open(out_dir_ + "/metrics.csv");
      metrics << metrics_csv_header() << '\n';
    }
    TrainMetrics last;
    while (step_ < cfg_.total_steps) {
      last = step();
      history_.push_back(last);
      if (metrics.is_open()) {
        metrics << metrics_csv_row(last) << '\n';
        metrics.flush();
      }
      const bool periodic =
          cfg_.ckpt_interval > 0 && step_ % cfg_.ckpt_interval == 0;
      if (!out_dir_.empty() && (periodic || step_ == cfg_.total_steps)) {
        save_checkpoint(out_dir_ + "/ckpt_" + std::to_string(step_) + ".bin");
      }
    }
    if (!out_dir_.empty() && sab_.diagnostics_enabled()) {
      std::ofstream diag(out_dir_ + "/sab_diag.csv");
      sab_.dump_csv(diag);
    }
    TrainReport rep;
    rep.steps = step_;
    rep.final_top1 = last.has_eval ? last.top1 : 0.0;
    rep.final_top5 = last.has_eval ? last.top5 : 0.0;
    rep.best_top1 = best_top1_;
    rep.best_top5 = best_top5_;
    rep.best_step = best_step_;
    return rep;
  }

  const std::vector<TrainMetrics>& history() const { return history_; }

  /// Top-1 / top-5 on the held-out test set; ties rank lower class indices
  /// first.
  std::pair<double, double> evaluate() const {
    if (data_.test.empty()) {
      throw std::invalid_argument("evaluate: empty test set");
    }
    return evaluate_model(model_, data_.test);
  }

  static std::pair<double, double> evaluate_model(
      const SiavcModel& model, const std::vector<LabeledSample>& test) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::int64_t hit1 = 0, hit5 = 0;
    for (const auto& s : test) {
      const Prediction p = model.predict(s.video);
      int better = 0;
      for (int c = 0; c < p.size(); ++c) {
        if (p[c] > p[s.label] || (p[c] == p[s.label] && c < s.label)) {
          ++better;
        }
      }
      if (better < 1) ++hit1;
      if (better < 5) ++hit5;
    }
    const double n = static_cast<double>(test.size());
    return {hit1 / n, hit5 / n};
  }

  // --- checkpointing ------------------------------------------------------

  void save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    io::write_le<std::uint32_t>(os, kCheckpointMagic);
    io::write_le<std::uint32_t>(os, kCheckpointVersion);
    model_.config().save(os);
    model_.save(os);
    // dataset fingerprint guards resumes against a different split
    io::write_le<std::uint64_t>(os, data_.labeled.size());
    io::write_le<std::uint64_t>(os, data_.unlabeled.size());
    io::write_le<std::uint64_t>(os, data_.test.size());
    io::write_le<std::int32_t>(os, data_.n_classes);
    io::write_le<std::int64_t>(os, step_);
    io::write_f64(os, best_top1_);
    io::write_f64(os, best_top5_);
    io::write_le<std::int64_t>(os, best_step_);
    thresholds_.save(os);
    sab_.save(os);
    queues_.save_ids(os);
    io::write_string(os, data_rng_.save_state());
    io::write_string(os, aug_rng_.save_state());
    io::write_string(os, vcam_rng_.save_state());
    auto write_order = [&os](const std::vector<std::size_t>& order,
                             std::size_t pos) {
      io::write_le<std::uint64_t>(os, order.size());
      for (auto v : order) io::write_le<std::uint64_t>(os, v);
      io::write_le<std::uint64_t>(os, pos);
    };
    write_order(labeled_order_, labeled_pos_);
    write_order(unlabeled_order_, unlabeled_pos_);
    if (!os) throw std::runtime_error("save_checkpoint: write failed " + path);
  }

  /// Restores a checkpoint saved by a trainer over the same dataset. The
  /// whole file is parsed and validated before any member is touched.
  void load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    if (io::read_le<std::uint32_t>(is) != kCheckpointMagic) {
      throw std::runtime_error("load_checkpoint: bad magic in " + path);
    }
    if (io::read_le<std::uint32_t>(is) != kCheckpointVersion) {
      throw std::runtime_error("load_checkpoint: unsupported version");
    }
    const ModelConfig mc = ModelConfig::load(is);
    if (!(mc == model_.config())) {
      throw std::runtime_error("load_checkpoint: model config mismatch");
    }
    RngStream dummy(0);
    SiavcModel staged_model(mc, dummy);
    staged_model.load(is);
    if (io::read_le<std::uint64_t>(is) != data_.labeled.size() ||
        io::read_le<std::uint64_t>(is) != data_.unlabeled.size() ||
        io::read_le<std::uint64_t>(is) != data_.test.size() ||
        io::read_le<std::int32_t>(is) != data_.n_classes) {
      throw std::runtime_error("load_checkpoint: dataset fingerprint mismatch");
    }
    const auto step = io::read_le<std::int64_t>(is);
    const double best1 = io::read_f64(is);
    const double best5 = io::read_f64(is);
    const auto best_step = io::read_le<std::int64_t>(is);
    ThresholdState th = ThresholdState::load(is);
    LossHistoryStore sab = LossHistoryStore::load(is);
    std::unordered_map<SampleId, const VideoTensor*> videos;
    for (const auto& s : data_.labeled) videos[s.id] = &s.video;
    for (const auto& s : data_.unlabeled) videos[s.id] = &s.video;
    AugmentationQueues queues =
        AugmentationQueues::load_ids(is, [&](SampleId id) -> VideoTensor {
          const auto it = videos.find(id);
          if (it == videos.end()) {
            throw std::runtime_error("load_checkpoint: unknown sample id");
          }
          return *it->second;
        });
    const std::string data_state = io::read_string(is);
    const std::string aug_state = io::read_string(is);
    const std::string vcam_state = io::read_string(is);
    auto read_order = [&is](std::vector<std::size_t>& order,
                            std::size_t& pos) {
      const auto n = io::read_le<std::uint64_t>(is);
      order.resize(n);
      for (auto& v : order) v = io::read_le<std::uint64_t>(is);
      pos = io::read_le<std::uint64_t>(is);
      if (pos > order.size()) {
        throw std::runtime_error("load_checkpoint: corrupt sampler state");
      }
    };
    std::vector<std::size_t> lab_order, unlab_order;
    std::size_t lab_pos = 0, unlab_pos = 0;
    read_order(lab_order, lab_pos);
    read_order(unlab_order, unlab_pos);
    if (lab_order.size() != data_.labeled.size() ||
        unlab_order.size() != data_.unlabeled.size()) {
      throw std::runtime_error("load_checkpoint: sampler size mismatch");
    }

    // parse complete; commit
    model_ = std::move(staged_model);
    step_ = step;
    best_top1_ = best1;
    best_top5_ = best5;
    best_step_ = best_step;
    thresholds_ = std::move(th);
    sab_ = std::move(sab);
    queues_ = std::move(queues);
    data_rng_.load_state(data_state);
    aug_rng_.load_state(aug_state);
    vcam_rng_.load_state(vcam_state);
    labeled_order_ = std::move(lab_order);
    labeled_pos_ = lab_pos;
    unlabeled_order_ = std::move(unlab_order);
    unlabeled_pos_ = unlab_pos;
  }

 private:
  std::vector<std::size_t> next_batch(std::vector<std::size_t>& order,
                                      std::size_t& pos, int n) {
    std::vector<std::size_t> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (pos >= order.size()) {
        data_rng_.shuffle(order.begin(), order.end());
        pos = 0;
      }
      out.push_back(order[pos++]);
    }
    return out;
  }

  static Eigen::MatrixXd stack_logits(
      const std::vector<SiavcModel::Trace>& traces) {
    if (traces.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd out(traces.size(), traces[0].cls_logits.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) =
          traces[i].cls_logits.cast<double>();
    }
    return out;
  }

  double pseudo_label_accuracy(const std::vector<Prediction>& weak_preds,
                               const std::vector<SampleId>& ids,
                               const std::vector<std::uint8_t>& mask) const {
    if (data_.unlabeled_truth.empty()) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    int passing = 0, correct = 0;
    for (std::size_t j = 0; j < weak_preds.size(); ++j) {
      if (j >= mask.size() || !mask[j]) continue;
      const auto it = data_.unlabeled_truth.find(ids[j]);
      if (it == data_.unlabeled_truth.end()) continue;
      ++passing;
      if (weak_preds[j].argmax() == it->second) ++correct;
    }
    if (passing == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(correct) / passing;
  }

  RunConfig cfg_;
  DataSplit data_;
  std::string out_dir_;
  RngStream init_rng_;
  RngStream data_rng_;
  RngStream aug_rng_;
  RngStream vcam_rng_;
  SiavcModel model_;
  ThresholdState thresholds_;
  LossHistoryStore sab_;
  AugmentationQueues queues_;
  std::vector<std::size_t> labeled_order_;
  std::size_t labeled_pos_ = 0;
  std::vector<std::size_t> unlabeled_order_;
  std::size_t unlabeled_pos_ = 0;
  std::int64_t step_ = 0;
  double best_top1_ = 0.0;
  double best_top5_ = 0.0;
  std::int64_t best_step_ = 0;
  std::vector<TrainMetrics> history_;
};

/// Model-only view of a checkpoint, enough to evaluate and export latents.
struct CheckpointModel {
  ModelConfig config;
  SiavcModel model;
};

inline CheckpointModel load_checkpoint_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint_model: cannot open " + path);
  if (io::read_le<std::uint32_t>(is) != kCheckpointMagic) {
    throw std::runtime_error("load_checkpoint_model: bad magic in " + path);
  }
  if (io::read_le<std::uint32_t>(is) != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint_model: unsupported version");
  }
  const ModelConfig mc = ModelConfig::load(is);
  RngStream dummy(0);
  CheckpointModel out{mc, SiavcModel(mc, dummy)};
  out.model.load(is);
  return out;
}

}  // namespace siavc
