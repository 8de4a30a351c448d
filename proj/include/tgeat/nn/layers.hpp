#pragma once

// Dense building blocks with explicit forward/backward passes. Activations are
// time-major: one row per frame. Forward functions fill a cache that the
// matching backward consumes; gradients accumulate into Param::grad.

#include "tgeat/nn/param.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace tgeat::nn {

template <typename Scalar>
Matrix<Scalar> uniform_init(Eigen::Index rows, Eigen::Index cols, Scalar bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return m;
}

template <typename Scalar>
struct Linear {
  Param<Scalar> weight;  // in x out
  Param<Scalar> bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, Group group, int in, int out, Rng& rng, double gain = 1.0) {
    const auto bound = static_cast<Scalar>(gain / std::sqrt(static_cast<double>(in)));
    weight = Param<Scalar>(name + ".weight", group, uniform_init<Scalar>(in, out, bound, rng));
    bias = Param<Scalar>(name + ".bias", group, uniform_init<Scalar>(1, out, bound, rng));
  }

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Matrix<Scalar> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  // Accumulates parameter gradients; returns d(loss)/dx.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    weight.grad.noalias() += x.transpose() * dy;
    bias.grad += dy.colwise().sum();
    return dy * weight.value.transpose();
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename Scalar>
struct LayerNorm {
  struct Cache {
    Matrix<Scalar> xhat;
    Vector<Scalar> rstd;
  };

  Param<Scalar> gamma;
  Param<Scalar> beta;
  Scalar eps = static_cast<Scalar>(1e-5);

  LayerNorm() = default;
  LayerNorm(const std::string& name, Group group, int dim)
      : gamma(name + ".gamma", group, Matrix<Scalar>::Ones(1, dim)),
        beta(name + ".beta", group, Matrix<Scalar>::Zero(1, dim)) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    const Vector<Scalar> mean = x.rowwise().mean();
    Matrix<Scalar> centered = x.colwise() - mean;
    const Vector<Scalar> var = centered.array().square().rowwise().mean();
    cache.rstd = (var.array() + eps).rsqrt();
    cache.xhat = centered.array().colwise() * cache.rstd.array();
    Matrix<Scalar> y = cache.xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    gamma.grad += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();
    const Matrix<Scalar> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    const Vector<Scalar> mean_d = dxhat.rowwise().mean();
    const Vector<Scalar> mean_dx = (dxhat.array() * cache.xhat.array()).rowwise().mean();
    Matrix<Scalar> dx = (dxhat.colwise() - mean_d).array() - cache.xhat.array().colwise() * mean_dx.array();
    return dx.array().colwise() * cache.rstd.array();
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// tanh approximation of GELU.
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
  const Scalar k = static_cast<Scalar>(0.044715);
  return (Scalar(0.5) * x.array() * (Scalar(1) + (c * (x.array() + k * x.array().cube())).tanh())).matrix();
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
  const Scalar k = static_cast<Scalar>(0.044715);
  const auto u = c * (x.array() + k * x.array().cube());
  const auto t = u.tanh().eval();
  const auto du = c * (Scalar(1) + Scalar(3) * k * x.array().square());
  const auto grad = Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x.array() * (Scalar(1) - t.square()) * du;
  return (dy.array() * grad).matrix();
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& s) {
  Matrix<Scalar> p = (s.colwise() - s.rowwise().maxCoeff()).array().exp();
  return p.array().colwise() / p.rowwise().sum().array();
}

template <typename Scalar>
struct MultiHeadAttention {
  struct Cache {
    Matrix<Scalar> x;
    Matrix<Scalar> qkv;
    std::vector<Matrix<Scalar>> probs;  // one N x N matrix per head
    Matrix<Scalar> context;
  };

  Linear<Scalar> qkv;
  Linear<Scalar> out;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Group group, int dim, int n_heads, Rng& rng)
      : qkv(name + ".qkv", group, dim, 3 * dim, rng), out(name + ".out", group, dim, dim, rng), heads(n_heads) {}

  int dim() const { return out.out_features(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    const int d = dim();
    const int dh = d / heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
    cache.x = x;
    cache.qkv = qkv.forward(x);
    cache.context.resize(x.rows(), d);
    cache.probs.resize(heads);
    for (int h = 0; h < heads; ++h) {
      const auto q = cache.qkv.middleCols(h * dh, dh);
      const auto k = cache.qkv.middleCols(d + h * dh, dh);
      const auto v = cache.qkv.middleCols(2 * d + h * dh, dh);
      Matrix<Scalar> scores = (q * k.transpose()) * scale;
      cache.probs[h] = softmax_rows<Scalar>(scores);
      cache.context.middleCols(h * dh, dh).noalias() = cache.probs[h] * v;
    }
    return out.forward(cache.context);
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    const int d = dim();
    const int dh = d / heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
    const Matrix<Scalar> dcontext = out.backward(cache.context, dy);
    Matrix<Scalar> dqkv(cache.qkv.rows(), cache.qkv.cols());
    for (int h = 0; h < heads; ++h) {
      const auto q = cache.qkv.middleCols(h * dh, dh);
      const auto k = cache.qkv.middleCols(d + h * dh, dh);
      const auto v = cache.qkv.middleCols(2 * d + h * dh, dh);
      const auto& p = cache.probs[h];
      const auto dctx = dcontext.middleCols(h * dh, dh);
      const Matrix<Scalar> dp = dctx * v.transpose();
      dqkv.middleCols(2 * d + h * dh, dh).noalias() = p.transpose() * dctx;
      const Vector<Scalar> row_dot = (dp.array() * p.array()).rowwise().sum();
      const Matrix<Scalar> ds = (p.array() * (dp.colwise() - row_dot).array()) * scale;
      dqkv.middleCols(h * dh, dh).noalias() = ds * k;
      dqkv.middleCols(d + h * dh, dh).noalias() = ds.transpose() * q;
    }
    return qkv.backward(cache.x, dqkv);
  }

  void collect(std::vector<Param<Scalar>*>& out_params) {
    qkv.collect(out_params);
    out.collect(out_params);
  }
};

// Pre-norm encoder block: h = x + attn(ln1(x)); y = h + ffn(ln2(h)).
template <typename Scalar>
struct EncoderBlock {
  struct Cache {
    typename LayerNorm<Scalar>::Cache ln1;
    typename LayerNorm<Scalar>::Cache ln2;
    typename MultiHeadAttention<Scalar>::Cache attn;
    Matrix<Scalar> ffn_in;
    Matrix<Scalar> hidden_pre;
    Matrix<Scalar> hidden;
  };

  LayerNorm<Scalar> ln1;
  MultiHeadAttention<Scalar> attn;
  LayerNorm<Scalar> ln2;
  Linear<Scalar> ff1;
  Linear<Scalar> ff2;

  EncoderBlock() = default;
  EncoderBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng)
      : ln1(name + ".ln1", Group::transformer, dim),
        attn(name + ".attn", Group::transformer, dim, heads, rng),
        ln2(name + ".ln2", Group::transformer, dim),
        ff1(name + ".ff1", Group::transformer, dim, ffn_dim, rng),
        ff2(name + ".ff2", Group::transformer, ffn_dim, dim, rng) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    Matrix<Scalar> h = x + attn.forward(ln1.forward(x, cache.ln1), cache.attn);
    cache.ffn_in = ln2.forward(h, cache.ln2);
    cache.hidden_pre = ff1.forward(cache.ffn_in);
    cache.hidden = gelu<Scalar>(cache.hidden_pre);
    h += ff2.forward(cache.hidden);
    return h;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    const Matrix<Scalar> dhidden = ff2.backward(cache.hidden, dy);
    const Matrix<Scalar> dpre = gelu_backward<Scalar>(cache.hidden_pre, dhidden);
    Matrix<Scalar> dh = dy + ln2.backward(cache.ln2, ff1.backward(cache.ffn_in, dpre));
    const Matrix<Scalar> dattn_in = attn.backward(cache.attn, dh);
    dh += ln1.backward(cache.ln1, dattn_in);
    return dh;
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    ln1.collect(out);
    attn.collect(out);
    ln2.collect(out);
    ff1.collect(out);
    ff2.collect(out);
  }
};

// Strided 1-D convolution without padding, via an explicit patch matrix.
template <typename Scalar>
struct Conv1d {
  struct Cache {
    Matrix<Scalar> patches;
    Matrix<Scalar> pre;
    Eigen::Index input_length = 0;
  };

  Param<Scalar> weight;  // (kernel * in_channels) x out_channels
  Param<Scalar> bias;
  int in_channels = 1;
  int kernel = 1;
  int stride = 1;

  Conv1d() = default;
  Conv1d(const std::string& name, int in_ch, int out_ch, int kernel_, int stride_, Rng& rng)
      : in_channels(in_ch), kernel(kernel_), stride(stride_) {
    const auto bound = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(in_ch * kernel_)));
    weight = Param<Scalar>(name + ".weight", Group::conv, uniform_init<Scalar>(in_ch * kernel_, out_ch, bound, rng));
    bias = Param<Scalar>(name + ".bias", Group::conv, uniform_init<Scalar>(1, out_ch, bound, rng));
  }

  Eigen::Index output_length(Eigen::Index input_length) const {
    if (input_length < kernel) return 0;
    return (input_length - kernel) / stride + 1;
  }

  Matrix<Scalar> patches(const Matrix<Scalar>& x) const {
    const Eigen::Index n = output_length(x.rows());
    Matrix<Scalar> p(n, static_cast<Eigen::Index>(kernel) * in_channels);
    for (int j = 0; j < kernel; ++j) {
      for (int c = 0; c < in_channels; ++c) {
        p.col(j * in_channels + c) =
            Eigen::Map<const Vector<Scalar>, 0, Eigen::InnerStride<>>(x.col(c).data() + j, n, Eigen::InnerStride<>(stride));
      }
    }
    return p;
  }

  // Pre-activation output. The cache is filled only when given.
  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache* cache) const {
    Matrix<Scalar> p = patches(x);
    Matrix<Scalar> y = p * weight.value;
    y.rowwise() += bias.value.row(0);
    if (cache) {
      cache->patches = std::move(p);
      cache->input_length = x.rows();
    }
    return y;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy, bool need_input_grad) {
    weight.grad.noalias() += cache.patches.transpose() * dy;
    bias.grad += dy.colwise().sum();
    if (!need_input_grad) return {};
    const Matrix<Scalar> dp = dy * weight.value.transpose();
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(cache.input_length, in_channels);
    for (int j = 0; j < kernel; ++j) {
      for (int c = 0; c < in_channels; ++c) {
        Eigen::Map<Vector<Scalar>, 0, Eigen::InnerStride<>>(dx.col(c).data() + j, dy.rows(), Eigen::InnerStride<>(stride)) +=
            dp.col(j * in_channels + c);
      }
    }
    return dx;
  }

  void collect(std::vector<Param<Scalar>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

// Two hidden layers (linear, layer norm, ReLU, dropout) and a linear output,
// applied row-wise to a batch of pooled vectors.
template <typename Scalar>
struct MlpHead {
  struct Cache {
    Matrix<Scalar> x;
    typename LayerNorm<Scalar>::Cache ln1, ln2;
    Matrix<Scalar> mask1, mask2;  // scaled keep masks; empty in eval mode
    Matrix<Scalar> h1, h2;        // post-dropout activations
  };

  Linear<Scalar> fc1, fc2, out;
  LayerNorm<Scalar> ln1, ln2;
  double dropout = 0.5;

  MlpHead() = default;
  MlpHead(const std::string& name, Group group, int in, int hidden, int outputs, double dropout_, Rng& rng)
      : fc1(name + ".fc1", group, in, hidden, rng),
        fc2(name + ".fc2", group, hidden, hidden, rng),
        out(name + ".out", group, hidden, outputs, rng),
        ln1(name + ".ln1", group, hidden),
        ln2(name + ".ln2", group, hidden),
        dropout(dropout_) {}

  // `rng` enables dropout (training mode); nullptr means evaluation mode.
  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache, Rng* rng) const {
    cache.x = x;
    cache.h1 = hidden_layer(fc1, ln1, x, cache.ln1, cache.mask1, rng);
    cache.h2 = hidden_layer(fc2, ln2, cache.h1, cache.ln2, cache.mask2, rng);
    return out.forward(cache.h2);
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dh2 = out.backward(cache.h2, dy);
    Matrix<Scalar> dh1 = fc2.backward(cache.h1, hidden_backward(ln2, cache.ln2, cache.mask2, dh2));
    return fc1.backward(cache.x, hidden_backward(ln1, cache.ln1, cache.mask1, dh1));
  }

  void collect(std::vector<Param<Scalar>*>& params) {
    fc1.collect(params);
    ln1.collect(params);
    fc2.collect(params);
    ln2.collect(params);
    out.collect(params);
  }

 private:
  Matrix<Scalar> hidden_layer(const Linear<Scalar>& fc, const LayerNorm<Scalar>& ln, const Matrix<Scalar>& x,
                              typename LayerNorm<Scalar>::Cache& ln_cache, Matrix<Scalar>& mask, Rng* rng) const {
    Matrix<Scalar> h = ln.forward(fc.forward(x), ln_cache).cwiseMax(Scalar(0));
    if (rng && dropout > 0.0) {
      std::bernoulli_distribution keep(1.0 - dropout);
      const auto kept = static_cast<Scalar>(1.0 / (1.0 - dropout));
      mask.resize(h.rows(), h.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? kept : Scalar(0);
      h.array() *= mask.array();
    } else {
      mask.resize(0, 0);
    }
    return h;
  }

  static Matrix<Scalar> hidden_backward(LayerNorm<Scalar>& ln, const typename LayerNorm<Scalar>::Cache& ln_cache,
                                        const Matrix<Scalar>& mask, const Matrix<Scalar>& dh) {
    Matrix<Scalar> d = dh;
    if (mask.size() > 0) d.array() *= mask.array();
    // ReLU gate from the normalized pre-activation.
    const Matrix<Scalar> pre = (ln_cache.xhat.array().rowwise() * ln.gamma.value.row(0).array()).rowwise() +
                               ln.beta.value.row(0).array();
    d = (pre.array() > Scalar(0)).select(d, Scalar(0));
    return ln.backward(ln_cache, d);
  }
};

// Identity forward; backward multiplies the gradient by -lambda when active.
template <typename Scalar>
struct GradientReversal {
  double lambda = 1.0;
  bool active = true;

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) const {
    return active ? Matrix<Scalar>(dy * static_cast<Scalar>(-lambda)) : dy;
  }
};

template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Eigen::Index length, int dim) {
  Matrix<Scalar> pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe(pos, i) = static_cast<Scalar>(std::sin(static_cast<double>(pos) * freq));
      if (i + 1 < dim) pe(pos, i + 1) = static_cast<Scalar>(std::cos(static_cast<double>(pos) * freq));
    }
  }
  return pe;
}

}  // namespace tgeat::nn
