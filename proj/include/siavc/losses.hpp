#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "siavc/core.hpp"
#include "siavc/thresholds.hpp"

namespace siavc {

inline constexpr double kLossEps = 1e-12;

inline double safe_log(double x) { return std::log(std::max(x, kLossEps)); }

/// H(target, pred) = -sum target_c * log pred_c, with the epsilon floor
/// keeping the log finite.
inline double cross_entropy(std::span<const double> target,
                            std::span<const double> pred) {
  if (target.size() != pred.size()) {
    throw std::invalid_argument("cross_entropy: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    acc -= target[c] * safe_log(pred[c]);
  }
  return acc;
}

inline double binary_cross_entropy(double target, double pred) {
  return -(target * safe_log(pred) + (1.0 - target) * safe_log(1.0 - pred));
}

/// Mean cross-entropy of one-hot labels against the class predictions.
/// An empty batch yields 0 and raises the warning flag.
inline double supervised_loss(std::span<const int> labels,
                              std::span<const Prediction> preds, int n_classes,
                              bool* empty_batch = nullptr) {
  if (labels.size() != preds.size()) {
    throw std::invalid_argument("supervised_loss: batch size mismatch");
  }
  if (empty_batch != nullptr) *empty_batch = labels.empty();
  if (labels.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    acc += cross_entropy(onehot(labels[i], n_classes), preds[i].probs());
  }
  return acc / static_cast<double>(labels.size());
}

/// Distribution-alignment loss over interpolated samples: class term weighted
/// by rho, discriminator term weighted by each sample's own lambda.
inline double alignment_loss(std::span<const PseudoLabeledSample> samples,
                             std::span<const Prediction> cls_preds,
                             std::span<const double> disc_outs, double rho) {
  if (samples.size() != cls_preds.size() ||
      samples.size() != disc_outs.size()) {
    throw std::invalid_argument("alignment_loss: batch size mismatch");
  }
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    acc += rho * cross_entropy(samples[i].soft_label, cls_preds[i].probs());
    acc += samples[i].lambda *
           binary_cross_entropy(samples[i].disc_label, disc_outs[i]);
  }
  return acc / static_cast<double>(samples.size());
}

struct ConsistencyResult {
  double value = 0.0;
  // Unscaled per-sample cross-entropy for samples passing the confidence
  // gate; this is what feeds the SAB history.
  std::vector<std::pair<SampleId, double>> per_sample;
  std::vector<std::uint8_t> mask;  // 1 = passed the confidence gate
};

/// Confidence-masked consistency between weak-view pseudo labels and
/// strong-view predictions, FreeMatch style.
inline ConsistencyResult consistency_loss(
    std::span<const Prediction> weak_preds,
    std::span<const Prediction> strong_preds, const ThresholdState& state,
    std::span<const SampleId> ids) {
  if (weak_preds.size() != strong_preds.size() ||
      weak_preds.size() != ids.size()) {
    throw std::invalid_argument("consistency_loss: batch size mismatch");
  }
  ConsistencyResult res;
  res.mask.assign(weak_preds.size(), 0);
  if (weak_preds.empty()) return res;
  double acc = 0.0;
  for (std::size_t j = 0; j < weak_preds.size(); ++j) {
    const int label = weak_preds[j].argmax();
    if (!(weak_preds[j].max() > state.tau_final(label))) continue;
    res.mask[j] = 1;
    const double h = cross_entropy(onehot(label, weak_preds[j].size()),
                                   strong_preds[j].probs());
    res.per_sample.emplace_back(ids[j], h);
    acc += h;
  }
  res.value = acc / static_cast<double>(weak_preds.size());
  return res;
}

/// Negative cross-entropy between the running estimate ratio and the batch
/// ratio, both sum-normalized. Returns 0 when no sample passed the gate.
inline double fairness_loss(const ThresholdState& state,
                            std::span<const Prediction> strong_preds,
                            std::span<const std::uint8_t> mask) {
  if (strong_preds.size() != mask.size()) {
    throw std::invalid_argument("fairness_loss: batch size mismatch");
  }
  const int C = state.n_classes();
  std::vector<double> p_bar(C, 0.0), h_bar(C, 0.0);
  std::size_t kept = 0;
  for (std::size_t j = 0; j < strong_preds.size(); ++j) {
    if (!mask[j]) continue;
    ++kept;
    for (int c = 0; c < C; ++c) p_bar[c] += strong_preds[j][c];
    h_bar[strong_preds[j].argmax()] += 1.0;
  }
  if (kept == 0) return 0.0;
  for (int c = 0; c < C; ++c) {
    p_bar[c] /= static_cast<double>(kept);
    h_bar[c] /= static_cast<double>(kept);
  }
  auto sumnorm_ratio = [C](const std::vector<double>& num,
                           const std::vector<double>& den) {
    std::vector<double> r(C);
    double total = 0.0;
    for (int c = 0; c < C; ++c) {
      r[c] = num[c] / std::max(den[c], kLossEps);
      total += r[c];
    }
    total = std::max(total, kLossEps);
    for (int c = 0; c < C; ++c) r[c] /= total;
    return r;
  };
  const auto a = sumnorm_ratio(state.p_local(), state.h_local());
  const auto b = sumnorm_ratio(p_bar, h_bar);
  return -cross_entropy(a, b);
}

inline double total_loss(double l_cs, double l_align, double l_cons,
                         double l_fair, double w_align, double w_cons,
                         double w_fair) {
  if (w_align < 0.0 || w_cons < 0.0 || w_fair < 0.0) {
    throw std::invalid_argument("total_loss: weights must be >= 0");
  }
  return l_cs + w_align * l_align + w_cons * l_cons + w_fair * l_fair;
}

struct LossBreakdown {
  double l_cs = 0.0;
  double l_align = 0.0;
  double l_cons = 0.0;
  double l_fair = 0.0;
  double total = 0.0;
  std::vector<std::pair<SampleId, double>> per_sample_cons;
};

// ---------------------------------------------------------------------------
// Logit-space companions. Same values as the functions above, plus analytic
// gradients with respect to the raw model outputs. Rows are batch samples.
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline Prediction row_prediction(const Eigen::MatrixXd& probs,
                                 Eigen::Index row) {
  std::vector<double> v(probs.cols());
  for (Eigen::Index c = 0; c < probs.cols(); ++c) v[c] = probs(row, c);
  return Prediction(std::move(v));
}

}  // namespace detail

inline double supervised_loss_grad(const Eigen::MatrixXd& logits,
                                   std::span<const int> labels,
                                   Eigen::MatrixXd* dlogits) {
  const auto B = logits.rows();
  if (B != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("supervised_loss_grad: batch size mismatch");
  }
  if (dlogits != nullptr) *dlogits = Eigen::MatrixXd::Zero(B, logits.cols());
  if (B == 0) return 0.0;
  const Eigen::MatrixXd p = detail::row_softmax(logits);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    acc -= safe_log(p(i, labels[i]));
    if (dlogits != nullptr) {
      dlogits->row(i) = p.row(i) / static_cast<double>(B);
      (*dlogits)(i, labels[i]) -= 1.0 / static_cast<double>(B);
    }
  }
  return acc / static_cast<double>(B);
}

inline ConsistencyResult consistency_loss_grad(
    std::span<const Prediction> weak_preds,
    const Eigen::MatrixXd& strong_logits, const ThresholdState& state,
    std::span<const SampleId> ids, Eigen::MatrixXd* dlogits) {
  const auto J = strong_logits.rows();
  if (J != static_cast<Eigen::Index>(weak_preds.size()) ||
      J != static_cast<Eigen::Index>(ids.size())) {
    throw std::invalid_argument("consistency_loss_grad: batch size mismatch");
  }
  if (dlogits != nullptr) {
    *dlogits = Eigen::MatrixXd::Zero(J, strong_logits.cols());
  }
  ConsistencyResult res;
  res.mask.assign(weak_preds.size(), 0);
  if (J == 0) return res;
  const Eigen::MatrixXd p = detail::row_softmax(strong_logits);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    const int label = weak_preds[j].argmax();
    if (!(weak_preds[j].max() > state.tau_final(label))) continue;
    res.mask[j] = 1;
    const double h = -safe_log(p(j, label));
    res.per_sample.emplace_back(ids[j], h);
    acc += h;
    if (dlogits != nullptr) {
      dlogits->row(j) = p.row(j) / static_cast<double>(J);
      (*dlogits)(j, label) -= 1.0 / static_cast<double>(J);
    }
  }
  res.value = acc / static_cast<double>(J);
  return res;
}

inline double alignment_loss_grad(std::span<const PseudoLabeledSample> samples,
                                  const Eigen::MatrixXd& cls_logits,
                                  const Eigen::VectorXd& disc_preacts,
                                  double rho, Eigen::MatrixXd* dcls,
                                  Eigen::VectorXd* ddisc) {
  const auto B = cls_logits.rows();
  if (B != static_cast<Eigen::Index>(samples.size()) ||
      B != disc_preacts.size()) {
    throw std::invalid_argument("alignment_loss_grad: batch size mismatch");
  }
  if (dcls != nullptr) *dcls = Eigen::MatrixXd::Zero(B, cls_logits.cols());
  if (ddisc != nullptr) *ddisc = Eigen::VectorXd::Zero(B);
  if (B == 0) return 0.0;
  const Eigen::MatrixXd p = detail::row_softmax(cls_logits);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& y = samples[i].soft_label;
    for (Eigen::Index c = 0; c < cls_logits.cols(); ++c) {
      acc -= rho * y[c] * safe_log(p(i, c));
    }
    const double d = 1.0 / (1.0 + std::exp(-disc_preacts[i]));
    acc += samples[i].lambda *
           binary_cross_entropy(samples[i].disc_label, d);
    if (dcls != nullptr) {
      for (Eigen::Index c = 0; c < cls_logits.cols(); ++c) {
        (*dcls)(i, c) = rho * (p(i, c) - y[c]) / static_cast<double>(B);
      }
    }
    if (ddisc != nullptr) {
      (*ddisc)(i) = samples[i].lambda * (d - samples[i].disc_label) /
                    static_cast<double>(B);
    }
  }
  return acc / static_cast<double>(B);
}

inline double fairness_loss_grad(const ThresholdState& state,
                                 const Eigen::MatrixXd& strong_logits,
                                 std::span<const std::uint8_t> mask,
                                 Eigen::MatrixXd* dlogits) {
  const auto J = strong_logits.rows();
  if (J != static_cast<Eigen::Index>(mask.size())) {
    throw std::invalid_argument("fairness_loss_grad: batch size mismatch");
  }
  const int C = state.n_classes();
  if (dlogits != nullptr) *dlogits = Eigen::MatrixXd::Zero(J, C);
  const Eigen::MatrixXd p = detail::row_softmax(strong_logits);

  Eigen::VectorXd p_bar = Eigen::VectorXd::Zero(C);
  Eigen::VectorXd h_bar = Eigen::VectorXd::Zero(C);
  std::size_t kept = 0;
  for (Eigen::Index j = 0; j < J; ++j) {
    if (!mask[j]) continue;
    ++kept;
    p_bar += p.row(j).transpose();
    Eigen::Index arg;
    p.row(j).maxCoeff(&arg);
    h_bar[arg] += 1.0;
  }
  if (kept == 0) return 0.0;
  p_bar /= static_cast<double>(kept);
  h_bar /= static_cast<double>(kept);

  Eigen::VectorXd a(C), r(C);
  double a_sum = 0.0, r_sum = 0.0;
  for (int c = 0; c < C; ++c) {
    a[c] = state.p_local()[c] / std::max(state.h_local()[c], kLossEps);
    a_sum += a[c];
    r[c] = p_bar[c] / std::max(h_bar[c], kLossEps);
    r_sum += r[c];
  }
  a /= std::max(a_sum, kLossEps);
  const double S = std::max(r_sum, kLossEps);

  double loss = 0.0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(C);  // d loss / d p_bar
  for (int c = 0; c < C; ++c) {
    const double b_c = r[c] / S;
    loss += a[c] * safe_log(b_c);
    const double dl_dr = a[c] / std::max(r[c], kLossEps) - 1.0 / S;
    g[c] = dl_dr / std::max(h_bar[c], kLossEps);
  }
  if (dlogits != nullptr) {
    for (Eigen::Index j = 0; j < J; ++j) {
      if (!mask[j]) continue;
      const double dot = g.dot(p.row(j).transpose());
      for (int c = 0; c < C; ++c) {
        (*dlogits)(j, c) =
            p(j, c) * (g[c] - dot) / static_cast<double>(kept);
      }
    }
  }
  return loss;
}

}  // namespace siavc
