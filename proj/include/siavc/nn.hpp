#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "siavc/rng.hpp"
#include "siavc/serialize.hpp"

namespace siavc::nn {

// Layers are templated on the scalar so training runs in float while
// gradient tests can instantiate the identical code in double.

template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Mat = MatT<float>;

/// One trainable tensor with its gradient and SGD momentum buffer.
/// Biases and normalization parameters opt out of weight decay.
template <typename Scalar>
struct ParamT {
  std::string name;
  MatT<Scalar> value;
  MatT<Scalar> grad;
  MatT<Scalar> momentum;
  bool decay = true;

  void init_shape(const std::string& n, int rows, int cols, bool d) {
    name = n;
    value = MatT<Scalar>::Zero(rows, cols);
    grad = MatT<Scalar>::Zero(rows, cols);
    momentum = MatT<Scalar>::Zero(rows, cols);
    decay = d;
  }

  void init_trunc_normal(const std::string& n, int rows, int cols,
                         RngStream& rng, bool d, double stddev = 0.02) {
    init_shape(n, rows, cols, d);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        value(i, j) = static_cast<Scalar>(rng.truncated_normal(stddev));
      }
  }

  // Checkpoint payloads are float32 regardless of the compute scalar.
  void save(std::ostream& os) const {
    io::write_string(os, name);
    io::write_le<std::int32_t>(os, static_cast<std::int32_t>(value.rows()));
    io::write_le<std::int32_t>(os, static_cast<std::int32_t>(value.cols()));
    const Eigen::MatrixXf v = value.template cast<float>();
    const Eigen::MatrixXf m = momentum.template cast<float>();
    io::write_f32_array(os, v.data(), v.size());
    io::write_f32_array(os, m.data(), m.size());
  }

  void load(std::istream& is) {
    const std::string n = io::read_string(is);
    if (n != name) throw std::runtime_error("param name mismatch: " + n);
    const auto rows = io::read_le<std::int32_t>(is);
    const auto cols = io::read_le<std::int32_t>(is);
    if (rows != value.rows() || cols != value.cols()) {
      throw std::runtime_error("param shape mismatch: " + n);
    }
    const auto v = io::read_f32_array(is);
    const auto m = io::read_f32_array(is);
    if (static_cast<Eigen::Index>(v.size()) != value.size() ||
        static_cast<Eigen::Index>(m.size()) != momentum.size()) {
      throw std::runtime_error("param payload mismatch: " + n);
    }
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      value.data()[i] = static_cast<Scalar>(v[i]);
      momentum.data()[i] = static_cast<Scalar>(m[i]);
    }
  }
};

using Param = ParamT<float>;

template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar k = static_cast<Scalar>(0.7978845608028654);
  const Scalar c = static_cast<Scalar>(0.044715);
  const Scalar u = k * (x + c * x * x * x);
  return static_cast<Scalar>(0.5) * x * (static_cast<Scalar>(1) + std::tanh(u));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar k = static_cast<Scalar>(0.7978845608028654);
  const Scalar c = static_cast<Scalar>(0.044715);
  const Scalar u = k * (x + c * x * x * x);
  const Scalar t = std::tanh(u);
  return static_cast<Scalar>(0.5) * (static_cast<Scalar>(1) + t) +
         static_cast<Scalar>(0.5) * x * (static_cast<Scalar>(1) - t * t) * k *
             (static_cast<Scalar>(1) + static_cast<Scalar>(3) * c * x * x);
}

template <typename Scalar>
struct LinearT {
  ParamT<Scalar> w;  // in x out
  ParamT<Scalar> b;  // 1 x out

  void init(const std::string& name, int in, int out, RngStream& rng) {
    w.init_trunc_normal(name + ".w", in, out, rng, /*decay=*/true);
    b.init_shape(name + ".b", 1, out, /*decay=*/false);
  }

  MatT<Scalar> forward(const MatT<Scalar>& x) const {
    return (x * w.value).rowwise() + b.value.row(0);
  }

  /// Accumulates parameter gradients and returns dx. `x` is the cached
  /// forward input.
  MatT<Scalar> backward(const MatT<Scalar>& x, const MatT<Scalar>& dy) {
    w.grad.noalias() += x.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
    return dy * w.value.transpose();
  }

  void collect(std::vector<ParamT<Scalar>*>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename Scalar>
struct LayerNormT {
  ParamT<Scalar> gamma;  // 1 x d
  ParamT<Scalar> beta;   // 1 x d
  static constexpr Scalar kEps = static_cast<Scalar>(1e-5);

  struct Cache {
    MatT<Scalar> xhat;
    Eigen::Vector<Scalar, Eigen::Dynamic> inv_std;
  };

  void init(const std::string& name, int dim) {
    gamma.init_shape(name + ".gamma", 1, dim, /*decay=*/false);
    gamma.value.setOnes();
    beta.init_shape(name + ".beta", 1, dim, /*decay=*/false);
  }

  MatT<Scalar> forward(const MatT<Scalar>& x, Cache* c) const {
    const auto d = static_cast<Scalar>(x.cols());
    Cache local;
    Cache& cc = c != nullptr ? *c : local;
    cc.xhat.resize(x.rows(), x.cols());
    cc.inv_std.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Scalar mu = x.row(i).mean();
      const Scalar var = (x.row(i).array() - mu).square().sum() / d;
      const Scalar inv = static_cast<Scalar>(1) / std::sqrt(var + kEps);
      cc.xhat.row(i) = ((x.row(i).array() - mu) * inv).matrix();
      cc.inv_std(i) = inv;
    }
    return ((cc.xhat.array().rowwise() * gamma.value.row(0).array())
                .rowwise() +
            beta.value.row(0).array())
        .matrix();
  }

  MatT<Scalar> backward(const Cache& c, const MatT<Scalar>& dy) {
    const auto d = static_cast<Scalar>(dy.cols());
    gamma.grad.row(0) +=
        (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    MatT<Scalar> dxhat =
        (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
    MatT<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const Scalar m1 = dxhat.row(i).mean();
      const Scalar m2 =
          (dxhat.row(i).array() * c.xhat.row(i).array()).sum() / d;
      dx.row(i) =
          ((dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2) *
           c.inv_std(i))
              .matrix();
    }
    return dx;
  }

  void collect(std::vector<ParamT<Scalar>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// Standard multi-head self-attention over one token sequence.
template <typename Scalar>
struct MultiHeadAttentionT {
  int heads = 0;
  int dim = 0;
  int head_dim = 0;
  LinearT<Scalar> proj_q, proj_k, proj_v, proj_o;

  struct Cache {
    MatT<Scalar> x, q, k, v;
    std::vector<MatT<Scalar>> attn;  // per head, n x n softmax rows
    MatT<Scalar> ctx;
  };

  void init(const std::string& name, int d, int n_heads, RngStream& rng) {
    if (d % n_heads != 0) {
      throw std::invalid_argument("attention: dim must divide by heads");
    }
    heads = n_heads;
    dim = d;
    head_dim = d / n_heads;
    proj_q.init(name + ".q", d, d, rng);
    proj_k.init(name + ".k", d, d, rng);
    proj_v.init(name + ".v", d, d, rng);
    proj_o.init(name + ".o", d, d, rng);
  }

  MatT<Scalar> forward(const MatT<Scalar>& x, Cache* c) const {
    const auto n = x.rows();
    const Scalar scale =
        static_cast<Scalar>(1) / std::sqrt(static_cast<Scalar>(head_dim));
    Cache local;
    Cache& cc = c != nullptr ? *c : local;
    cc.x = x;
    cc.q = proj_q.forward(x);
    cc.k = proj_k.forward(x);
    cc.v = proj_v.forward(x);
    cc.attn.assign(heads, MatT<Scalar>());
    cc.ctx.resize(n, dim);
    for (int h = 0; h < heads; ++h) {
      const auto qh = cc.q.middleCols(h * head_dim, head_dim);
      const auto kh = cc.k.middleCols(h * head_dim, head_dim);
      const auto vh = cc.v.middleCols(h * head_dim, head_dim);
      MatT<Scalar> scores = qh * kh.transpose() * scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar m = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - m).exp().matrix();
        scores.row(i) /= scores.row(i).sum();
      }
      cc.attn[h] = scores;
      cc.ctx.middleCols(h * head_dim, head_dim) = scores * vh;
    }
    return proj_o.forward(cc.ctx);
  }

  MatT<Scalar> backward(Cache& c, const MatT<Scalar>& dy) {
    const Scalar scale =
        static_cast<Scalar>(1) / std::sqrt(static_cast<Scalar>(head_dim));
    const MatT<Scalar> dctx = proj_o.backward(c.ctx, dy);
    MatT<Scalar> dq(c.q.rows(), dim), dk(c.k.rows(), dim),
        dv(c.v.rows(), dim);
    for (int h = 0; h < heads; ++h) {
      const auto vh = c.v.middleCols(h * head_dim, head_dim);
      const auto qh = c.q.middleCols(h * head_dim, head_dim);
      const auto kh = c.k.middleCols(h * head_dim, head_dim);
      const auto dctx_h = dctx.middleCols(h * head_dim, head_dim);
      const MatT<Scalar>& p = c.attn[h];
      MatT<Scalar> dp = dctx_h * vh.transpose();
      dv.middleCols(h * head_dim, head_dim) = p.transpose() * dctx_h;
      // softmax rows backward
      MatT<Scalar> ds(p.rows(), p.cols());
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const Scalar dot = dp.row(i).dot(p.row(i));
        ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
      }
      dq.middleCols(h * head_dim, head_dim) = ds * kh * scale;
      dk.middleCols(h * head_dim, head_dim) = ds.transpose() * qh * scale;
    }
    MatT<Scalar> dx = proj_q.backward(c.x, dq);
    dx += proj_k.backward(c.x, dk);
    dx += proj_v.backward(c.x, dv);
    return dx;
  }

  void collect(std::vector<ParamT<Scalar>*>& out) {
    proj_q.collect(out);
    proj_k.collect(out);
    proj_v.collect(out);
    proj_o.collect(out);
  }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <typename Scalar>
struct BlockT {
  LayerNormT<Scalar> ln1, ln2;
  MultiHeadAttentionT<Scalar> attn;
  LinearT<Scalar> fc1, fc2;

  struct Cache {
    typename LayerNormT<Scalar>::Cache ln1c, ln2c;
    typename MultiHeadAttentionT<Scalar>::Cache attnc;
    MatT<Scalar> a;        // after the attention residual
    MatT<Scalar> ln2_out;  // fc1 input
    MatT<Scalar> pre_act;  // fc1 output, gelu input
    MatT<Scalar> act;      // fc2 input
  };

  void init(const std::string& name, int dim, int heads, int hidden,
            RngStream& rng) {
    ln1.init(name + ".ln1", dim);
    attn.init(name + ".attn", dim, heads, rng);
    ln2.init(name + ".ln2", dim);
    fc1.init(name + ".fc1", dim, hidden, rng);
    fc2.init(name + ".fc2", hidden, dim, rng);
  }

  MatT<Scalar> forward(const MatT<Scalar>& x, Cache* c) const {
    const MatT<Scalar> n1 = ln1.forward(x, &c->ln1c);
    c->a = x + attn.forward(n1, &c->attnc);
    c->ln2_out = ln2.forward(c->a, &c->ln2c);
    c->pre_act = fc1.forward(c->ln2_out);
    c->act = c->pre_act.unaryExpr([](Scalar v) { return gelu(v); });
    return c->a + fc2.forward(c->act);
  }

  MatT<Scalar> backward(Cache& c, const MatT<Scalar>& dy) {
    MatT<Scalar> dact = fc2.backward(c.act, dy);
    MatT<Scalar> dpre =
        (dact.array() *
         c.pre_act.unaryExpr([](Scalar v) { return gelu_grad(v); }).array())
            .matrix();
    MatT<Scalar> da = dy + ln2.backward(c.ln2c, fc1.backward(c.ln2_out, dpre));
    MatT<Scalar> dn1 = attn.backward(c.attnc, da);
    return da + ln1.backward(c.ln1c, dn1);
  }

  void collect(std::vector<ParamT<Scalar>*>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

}  // namespace siavc::nn
