#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "siavc/tensor.hpp"

namespace siavc {

using SampleId = std::int64_t;

struct LabeledSample {
  VideoTensor video;
  int label = 0;
  SampleId id = 0;
};

struct UnlabeledSample {
  VideoTensor video;
  SampleId id = 0;
};

inline std::vector<double> onehot(int label, int n_classes) {
  if (n_classes < 1) throw std::invalid_argument("onehot: n_classes must be >= 1");
  if (label < 0 || label >= n_classes) {
    throw std::invalid_argument("onehot: label out of range");
  }
  std::vector<double> v(n_classes, 0.0);
  v[label] = 1.0;
  return v;
}

/// Probability vector over the classes. Construction checks the simplex
/// constraint (entries >= 0, sum within 1e-6 of one).
class Prediction {
 public:
  Prediction() = default;

  explicit Prediction(std::vector<double> probs) : p_(std::move(probs)) {
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("Prediction: entries must be finite and >= 0");
      }
      sum += v;
    }
    if (p_.empty() || std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("Prediction: probabilities must sum to 1");
    }
  }

  static Prediction from_logits(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("from_logits: empty");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      p[i] = std::exp(logits[i] - m);
      sum += p[i];
    }
    for (double& v : p) v /= sum;
    Prediction out;
    out.p_ = std::move(p);
    return out;
  }

  int size() const { return static_cast<int>(p_.size()); }
  double operator[](int i) const { return p_[i]; }
  const std::vector<double>& probs() const { return p_; }

  int argmax() const {
    return static_cast<int>(
        std::max_element(p_.begin(), p_.end()) - p_.begin());
  }

  double max() const { return *std::max_element(p_.begin(), p_.end()); }

 private:
  std::vector<double> p_;
};

/// Interpolated sample produced by cross-set augmentation. The discriminator
/// label is derived from lambda at construction, never stored independently.
struct PseudoLabeledSample {
  VideoTensor video;
  std::vector<double> soft_label;
  double lambda = 1.0;      // interpolation weight on the labeled parent
  double disc_label = 0.0;  // always 1 - lambda

  PseudoLabeledSample() = default;

  PseudoLabeledSample(VideoTensor v, std::vector<double> soft, double lam)
      : video(std::move(v)),
        soft_label(std::move(soft)),
        lambda(lam),
        disc_label(1.0 - lam) {
    if (!(lam >= 0.0 && lam <= 1.0)) {
      throw std::invalid_argument("PseudoLabeledSample: lambda out of [0,1]");
    }
    double sum = std::accumulate(soft_label.begin(), soft_label.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("PseudoLabeledSample: soft label off simplex");
    }
  }
};

/// Spatio-temporal patch geometry for the cube embedding.
struct CubeEmbedConfig {
  int patch_t = 2;
  int patch_h = 16;
  int patch_w = 16;
  int embed_dim = 128;
};

/// Everything a training run needs. Field defaults are the desk-scale
/// configuration; the CLI and config files mirror this struct one to one.
struct RunConfig {
  // data geometry
  int n_classes = 9;
  int frames = 8;
  int height = 32;
  int width = 32;
  int channels = 3;

  // optimization
  double lr = 0.03;
  std::int64_t total_steps = 2000;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_labeled = 4;
  int batch_unlabeled = 4;

  // loss weights
  double w_align = 1.0;
  double w_cons = 1.0;
  double w_fair = 1.0;
  double rho = 1.0;

  // VCAM
  double vcam_tau = 0.9;
  double beta_alpha = 0.75;
  int vcam_batch = 4;

  // SAB / super augmentation
  double noise_sigma = 0.1;
  double mask_lo = 0.1;
  double mask_hi = 0.3;
  bool mask_per_frame = true;
  int sab_min_history = 2;
  int otsu_bins = 256;
  bool sab_pooled = false;

  // thresholds
  double ema_momentum = 0.999;
  double fixed_threshold = 0.95;

  // strong augmentation
  int randaug_ops = 2;

  // feature toggles
  bool use_sat = true;
  bool use_fairness = true;
  bool use_sab = true;
  bool use_vcam = true;
  bool supervised_only = false;

  // model
  CubeEmbedConfig patch;
  int encoder_blocks = 2;
  int encoder_heads = 4;
  int mlp_hidden = 256;

  // run plumbing
  std::uint64_t seed = 7;
  std::int64_t eval_interval = 200;
  std::int64_t ckpt_interval = 0;  // 0: final checkpoint only

  void validate() const {
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw std::invalid_argument(std::string("RunConfig: ") + msg);
    };
    require(n_classes >= 2, "n_classes must be >= 2");
    require(frames >= 1 && height >= 1 && width >= 1 && channels >= 1,
            "geometry must be positive");
    require(total_steps >= 1, "total_steps must be >= 1");
    require(lr > 0.0, "lr must be positive");
    require(w_align >= 0.0 && w_cons >= 0.0 && w_fair >= 0.0,
            "loss weights must be >= 0");
    require(rho >= 0.0, "rho must be >= 0");
    require(vcam_tau > 0.0 && vcam_tau < 1.0, "vcam_tau must be in (0,1)");
    require(beta_alpha > 0.0, "beta_alpha must be positive");
    require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
    require(0.0 <= mask_lo && mask_lo <= mask_hi && mask_hi <= 1.0,
            "mask range must satisfy 0 <= lo <= hi <= 1");
    require(ema_momentum > 0.0 && ema_momentum <= 1.0,
            "ema_momentum must be in (0,1]");
    require(fixed_threshold > 0.0 && fixed_threshold < 1.0,
            "fixed_threshold must be in (0,1)");
    require(batch_labeled >= 1 && batch_unlabeled >= 1 && vcam_batch >= 0,
            "batch sizes must be positive");
    require(frames % patch.patch_t == 0 && height % patch.patch_h == 0 &&
                width % patch.patch_w == 0,
            "patch must divide the video extents");
    require(patch.embed_dim >= 1 && patch.embed_dim % encoder_heads == 0,
            "embed_dim must be divisible by encoder_heads");
    require(encoder_blocks >= 1 && mlp_hidden >= 1, "encoder size invalid");
    require(sab_min_history >= 2, "sab_min_history must be >= 2");
    require(otsu_bins >= 2, "otsu_bins must be >= 2");
    require(randaug_ops >= 0, "randaug_ops must be >= 0");
    require(eval_interval >= 1, "eval_interval must be >= 1");
    require(ckpt_interval >= 0, "ckpt_interval must be >= 0");
  }
};

}  // namespace siavc
