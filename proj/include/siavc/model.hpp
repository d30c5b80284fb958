#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "siavc/core.hpp"
#include "siavc/nn.hpp"
#include "siavc/rng.hpp"
#include "siavc/tensor.hpp"

namespace siavc {

struct ModelConfig {
  int channels = 3;
  int frames = 8;
  int height = 32;
  int width = 32;
  CubeEmbedConfig patch;
  int blocks = 2;
  int heads = 4;
  int mlp_hidden = 256;
  int n_classes = 9;

  int tokens() const {
    return (frames / patch.patch_t) * (height / patch.patch_h) *
           (width / patch.patch_w);
  }

  int token_dim() const {
    return channels * patch.patch_t * patch.patch_h * patch.patch_w;
  }

  void validate() const {
    if (patch.patch_t < 1 || patch.patch_h < 1 || patch.patch_w < 1 ||
        frames % patch.patch_t != 0 || height % patch.patch_h != 0 ||
        width % patch.patch_w != 0) {
      throw std::invalid_argument(
          "ModelConfig: patch must divide the video extents");
    }
    if (patch.embed_dim < 1 || patch.embed_dim % heads != 0) {
      throw std::invalid_argument(
          "ModelConfig: embed_dim must be divisible by heads");
    }
    if (blocks < 1 || mlp_hidden < 1 || n_classes < 2) {
      throw std::invalid_argument("ModelConfig: bad encoder sizes");
    }
  }

  static ModelConfig from_run(const RunConfig& rc) {
    ModelConfig mc;
    mc.channels = rc.channels;
    mc.frames = rc.frames;
    mc.height = rc.height;
    mc.width = rc.width;
    mc.patch = rc.patch;
    mc.blocks = rc.encoder_blocks;
    mc.heads = rc.encoder_heads;
    mc.mlp_hidden = rc.mlp_hidden;
    mc.n_classes = rc.n_classes;
    mc.validate();
    return mc;
  }

  void save(std::ostream& os) const {
    for (int v : {channels, frames, height, width, patch.patch_t,
                  patch.patch_h, patch.patch_w, patch.embed_dim, blocks,
                  heads, mlp_hidden, n_classes}) {
      io::write_le<std::int32_t>(os, v);
    }
  }

  static ModelConfig load(std::istream& is) {
    ModelConfig mc;
    int* fields[] = {&mc.channels,        &mc.frames,        &mc.height,
                     &mc.width,           &mc.patch.patch_t, &mc.patch.patch_h,
                     &mc.patch.patch_w,   &mc.patch.embed_dim, &mc.blocks,
                     &mc.heads,           &mc.mlp_hidden,    &mc.n_classes};
    for (int* f : fields) *f = io::read_le<std::int32_t>(is);
    mc.validate();
    return mc;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Splits the video into non-overlapping spatio-temporal cubes and flattens
/// each into one row, time-major. One row per token, channel-major features.
template <typename Scalar = float>
nn::MatT<Scalar> cube_embed_tokens(const VideoTensor& v,
                                   const ModelConfig& cfg) {
  if (v.shape().c != cfg.channels || v.shape().t != cfg.frames ||
      v.shape().h != cfg.height || v.shape().w != cfg.width) {
    throw std::invalid_argument("cube_embed_tokens: video shape mismatch");
  }
  const int nt = cfg.frames / cfg.patch.patch_t;
  const int nh = cfg.height / cfg.patch.patch_h;
  const int nw = cfg.width / cfg.patch.patch_w;
  nn::MatT<Scalar> out(cfg.tokens(), cfg.token_dim());
  for (int tt = 0; tt < nt; ++tt)
    for (int yy = 0; yy < nh; ++yy)
      for (int xx = 0; xx < nw; ++xx) {
        const int row = (tt * nh + yy) * nw + xx;
        int col = 0;
        for (int c = 0; c < cfg.channels; ++c)
          for (int dt = 0; dt < cfg.patch.patch_t; ++dt)
            for (int dy = 0; dy < cfg.patch.patch_h; ++dy)
              for (int dx = 0; dx < cfg.patch.patch_w; ++dx) {
                out(row, col++) = static_cast<Scalar>(
                    v.at(c, tt * cfg.patch.patch_t + dt,
                         yy * cfg.patch.patch_h + dy,
                         xx * cfg.patch.patch_w + dx));
              }
      }
  return out;
}

/// Cube embedding -> small pre-norm transformer with learned positional
/// embeddings and mean pooling -> classifier and discriminator heads.
/// Forward returns a trace carrying every activation needed by backward, so
/// several branches of one step can be evaluated before any gradient flows.
template <typename Scalar>
class SiavcModelT {
 public:
  using Mat = nn::MatT<Scalar>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Trace {
    Mat tokens;                                      // cube features
    Mat embedded;                                    // projection + positions
    std::vector<typename nn::BlockT<Scalar>::Cache> blocks;
    typename nn::LayerNormT<Scalar>::Cache final_ln;
    Mat encoded;                                     // final-LN output
    RowVec z;                                        // mean-pooled latent
    RowVec cls_logits;
    Scalar disc_preact = 0;
  };

  SiavcModelT(const ModelConfig& cfg, RngStream& rng) : cfg_(cfg) {
    cfg_.validate();
    embed_.init("embed", cfg_.token_dim(), cfg_.patch.embed_dim, rng);
    pos_.init_trunc_normal("pos", cfg_.tokens(), cfg_.patch.embed_dim, rng,
                           /*decay=*/true);
    blocks_.resize(cfg_.blocks);
    for (int i = 0; i < cfg_.blocks; ++i) {
      blocks_[i].init("blocks." + std::to_string(i), cfg_.patch.embed_dim,
                      cfg_.heads, cfg_.mlp_hidden, rng);
    }
    final_ln_.init("final_ln", cfg_.patch.embed_dim);
    cls_.init("cls", cfg_.patch.embed_dim, cfg_.n_classes, rng);
    disc_.init("disc", cfg_.patch.embed_dim, 1, rng);
    collect_params();
  }

  SiavcModelT(const SiavcModelT& o) { *this = o; }
  SiavcModelT& operator=(const SiavcModelT& o) {
    cfg_ = o.cfg_;
    embed_ = o.embed_;
    pos_ = o.pos_;
    blocks_ = o.blocks_;
    final_ln_ = o.final_ln_;
    cls_ = o.cls_;
    disc_ = o.disc_;
    collect_params();
    return *this;
  }
  SiavcModelT(SiavcModelT&& o) noexcept { *this = std::move(o); }
  SiavcModelT& operator=(SiavcModelT&& o) noexcept {
    cfg_ = std::move(o.cfg_);
    embed_ = std::move(o.embed_);
    pos_ = std::move(o.pos_);
    blocks_ = std::move(o.blocks_);
    final_ln_ = std::move(o.final_ln_);
    cls_ = std::move(o.cls_);
    disc_ = std::move(o.disc_);
    collect_params();
    return *this;
  }

  const ModelConfig& config() const { return cfg_; }

  Trace forward(const VideoTensor& video) const {
    Trace tr;
    tr.tokens = cube_embed_tokens<Scalar>(video, cfg_);
    forward_tokens(tr);
    return tr;
  }

  /// Forward from precomputed cube features (tr.tokens must be set).
  void forward_tokens(Trace& tr) const {
    tr.embedded = embed_.forward(tr.tokens) + pos_.value;
    tr.blocks.resize(blocks_.size());
    Mat x = tr.embedded;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i].forward(x, &tr.blocks[i]);
    }
    tr.encoded = final_ln_.forward(x, &tr.final_ln);
    tr.z = tr.encoded.colwise().mean();
    tr.cls_logits = cls_.forward(tr.z);
    tr.disc_preact = disc_.forward(tr.z)(0, 0);
  }

  /// Accumulates parameter gradients for one traced video given the loss
  /// gradients at both heads.
  void backward(Trace& tr, const Eigen::RowVectorXd& dcls_logits,
                double ddisc_preact) {
    Mat dz = Mat::Zero(1, cfg_.patch.embed_dim);
    if (dcls_logits.size() > 0) {
      dz += cls_.backward(Mat(tr.z), dcls_logits.cast<Scalar>());
    }
    if (ddisc_preact != 0.0) {
      Mat dd(1, 1);
      dd(0, 0) = static_cast<Scalar>(ddisc_preact);
      dz += disc_.backward(Mat(tr.z), dd);
    }
    const auto n = static_cast<Scalar>(tr.encoded.rows());
    Mat dencoded = (dz / n).replicate(tr.encoded.rows(), 1);
    Mat dx = final_ln_.backward(tr.final_ln, dencoded);
    for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) {
      dx = blocks_[i].backward(tr.blocks[i], dx);
    }
    pos_.grad += dx;
    embed_.backward(tr.tokens, dx);
  }

  Prediction predict(const VideoTensor& video) const {
    const Trace tr = forward(video);
    return logits_to_prediction(tr.cls_logits);
  }

  static Prediction logits_to_prediction(const RowVec& logits) {
    std::vector<double> d(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      d[i] = static_cast<double>(logits(i));
    }
    return Prediction::from_logits(d);
  }

  RowVec latent(const VideoTensor& video) const { return forward(video).z; }

  double discriminate(const VideoTensor& video) const {
    const Trace tr = forward(video);
    return 1.0 / (1.0 + std::exp(-static_cast<double>(tr.disc_preact)));
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  /// SGD with momentum; weight decay skips biases and norm parameters.
  void sgd_step(double lr, double momentum, double weight_decay) {
    const auto lr_s = static_cast<Scalar>(lr);
    const auto mom_s = static_cast<Scalar>(momentum);
    const auto wd_s = static_cast<Scalar>(weight_decay);
    for (auto* p : params_) {
      if (p->decay && wd_s != Scalar(0)) {
        p->grad += wd_s * p->value;
      }
      p->momentum = mom_s * p->momentum + p->grad;
      p->value -= lr_s * p->momentum;
    }
  }

  std::vector<nn::ParamT<Scalar>*>& params() { return params_; }
  const std::vector<nn::ParamT<Scalar>*>& params() const { return params_; }

  void save(std::ostream& os) const {
    io::write_le<std::uint64_t>(os, params_.size());
    for (const auto* p : params_) p->save(os);
  }

  void load(std::istream& is) {
    const auto n = io::read_le<std::uint64_t>(is);
    if (n != params_.size()) {
      throw std::runtime_error("model: parameter count mismatch");
    }
    for (auto* p : params_) p->load(is);
  }

 private:
  void collect_params() {
    params_.clear();
    embed_.collect(params_);
    params_.push_back(&pos_);
    for (auto& b : blocks_) b.collect(params_);
    final_ln_.collect(params_);
    cls_.collect(params_);
    disc_.collect(params_);
  }

  ModelConfig cfg_;
  nn::LinearT<Scalar> embed_;
  nn::ParamT<Scalar> pos_;
  std::vector<nn::BlockT<Scalar>> blocks_;
  nn::LayerNormT<Scalar> final_ln_;
  nn::LinearT<Scalar> cls_;
  nn::LinearT<Scalar> disc_;
  std::vector<nn::ParamT<Scalar>*> params_;
};

using SiavcModel = SiavcModelT<float>;

}  // namespace siavc
