// SPDX-License-Identifier: Apache-2.0
#pragma once

// Causal decoder forward and hand-derived backward pass.
//
// The four large matrices of every layer (qkv, out, up, down) are read through a
// LayerWeights view rather than straight from SlmParams. A plain SLM points the view at
// its own tensors; a projected network points it at weights materialized for one
// expert; LoRA points it at W + B*A. Gradients for those matrices flow back through a
// matching LayerWeightGrads view, everything else lands in a shared SlmParams gradient.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/tensor.hpp"
#include "sslm/model/batch.hpp"
#include "sslm/model/slm.hpp"

namespace sslm {

inline constexpr double kNormEps = 1e-5;

template <typename T>
struct LayerWeights {
  const Tensor<T>* w_qkv = nullptr;
  const Tensor<T>* w_o = nullptr;
  const Tensor<T>* w_up = nullptr;
  const Tensor<T>* w_down = nullptr;
};

template <typename T>
struct LayerWeightGrads {
  Tensor<T>* w_qkv = nullptr;
  Tensor<T>* w_o = nullptr;
  Tensor<T>* w_up = nullptr;
  Tensor<T>* w_down = nullptr;
};

template <typename T>
std::vector<LayerWeights<T>> own_weights(const SlmParams<T>& p) {
  std::vector<LayerWeights<T>> w;
  for (const auto& l : p.layers) w.push_back({&l.w_qkv, &l.w_o, &l.w_up, &l.w_down});
  return w;
}

template <typename T>
std::vector<LayerWeightGrads<T>> own_weight_grads(SlmParams<T>& g) {
  std::vector<LayerWeightGrads<T>> w;
  for (auto& l : g.layers) w.push_back({&l.w_qkv, &l.w_o, &l.w_up, &l.w_down});
  return w;
}

template <typename T>
struct LayerCache {
  RowMatrix<T> x_in, h1, qkv, attn, x_mid, h2, pre_act, act;
  std::vector<T> mean1, rstd1, mean2, rstd2;
  std::vector<T> probs;  // size * heads * length * length
};

template <typename T>
struct ForwardCache {
  std::size_t size = 0, length = 0;
  std::vector<TokenId> inputs;
  std::vector<LayerCache<T>> layers;
  RowMatrix<T> x_final, h_final;
  std::vector<T> mean_f, rstd_f;
  RowMatrix<T> logits;  // (size*length) x V
};

namespace detail {

template <typename T>
void layer_norm(const RowMatrix<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, RowMatrix<T>& y,
                std::vector<T>& mean, std::vector<T>& rstd) {
  const auto n = x.rows(), d = x.cols();
  y.resize(n, d);
  mean.resize(static_cast<std::size_t>(n));
  rstd.resize(static_cast<std::size_t>(n));
  const T* g = gain.ptr();
  const T* b = bias.ptr();
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = x.row(i).mean();
    const T var = (x.row(i).array() - mu).square().mean();
    const T rs = T(1) / std::sqrt(var + T(kNormEps));
    mean[static_cast<std::size_t>(i)] = mu;
    rstd[static_cast<std::size_t>(i)] = rs;
    for (Eigen::Index j = 0; j < d; ++j) y(i, j) = (x(i, j) - mu) * rs * g[j] + b[j];
  }
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), with dxhat = dy * gain.
template <typename T>
void layer_norm_backward(const RowMatrix<T>& dy, const RowMatrix<T>& x, const Tensor<T>& gain,
                         const std::vector<T>& mean, const std::vector<T>& rstd, RowMatrix<T>& dx,
                         Tensor<T>& dgain, Tensor<T>& dbias) {
  const auto n = x.rows(), d = x.cols();
  dx.resize(n, d);
  const T* g = gain.ptr();
  T* dg = dgain.ptr();
  T* db = dbias.ptr();
  std::vector<T> xhat(static_cast<std::size_t>(d)), dxhat(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = mean[static_cast<std::size_t>(i)];
    const T rs = rstd[static_cast<std::size_t>(i)];
    T sum_dxhat = 0, sum_dxhat_xhat = 0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      xhat[ju] = (x(i, j) - mu) * rs;
      dxhat[ju] = dy(i, j) * g[j];
      dg[j] += dy(i, j) * xhat[ju];
      db[j] += dy(i, j);
      sum_dxhat += dxhat[ju];
      sum_dxhat_xhat += dxhat[ju] * xhat[ju];
    }
    const T inv_d = T(1) / static_cast<T>(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      dx(i, j) = rs * (dxhat[ju] - sum_dxhat * inv_d - xhat[ju] * sum_dxhat_xhat * inv_d);
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

template <typename T>
T gelu(T u) {
  return T(0.5) * u * (T(1) + std::tanh(T(kGeluC) * (u + T(0.044715) * u * u * u)));
}

template <typename T>
T gelu_grad(T u) {
  const T inner = T(kGeluC) * (u + T(0.044715) * u * u * u);
  const T th = std::tanh(inner);
  return T(0.5) * (T(1) + th) + T(0.5) * u * (T(1) - th * th) * T(kGeluC) * (T(1) + T(3 * 0.044715) * u * u);
}

template <typename T>
void add_row_bias(RowMatrix<T>& m, const Tensor<T>& bias) {
  m.rowwise() += ConstVectorMap<T>(bias.ptr(), static_cast<Eigen::Index>(bias.numel())).transpose();
}

template <typename T>
void accumulate_col_sums(const RowMatrix<T>& m, Tensor<T>& out) {
  VectorMap<T>(out.ptr(), static_cast<Eigen::Index>(out.numel())) += m.colwise().sum().transpose();
}

}  // namespace detail

template <typename T>
void validate_batch(const ModelConfig& c, const Batch& b) {
  if (b.length > c.context_length) {
    throw ConfigError("sequence length " + std::to_string(b.length) + " exceeds context_length " +
                      std::to_string(c.context_length));
  }
  for (TokenId t : b.inputs) {
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab_size) {
      throw ConfigError("token id " + std::to_string(t) + " outside vocabulary");
    }
  }
  for (TokenId t : b.targets) {
    if (t != kIgnoreTarget && (t < 0 || static_cast<std::size_t>(t) >= c.vocab_size)) {
      throw ConfigError("target id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

template <typename T>
void forward(const SlmParams<T>& p, std::span<const LayerWeights<T>> weights, const Batch& batch,
             ForwardCache<T>& cache) {
  const auto& c = p.config;
  validate_batch<T>(c, batch);
  const auto d = static_cast<Eigen::Index>(c.model_dim);
  const auto hd = static_cast<Eigen::Index>(c.head_dim());
  const auto heads = static_cast<Eigen::Index>(c.num_heads);
  const auto t = static_cast<Eigen::Index>(batch.length);
  const auto n = static_cast<Eigen::Index>(batch.rows());
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  cache.size = batch.size;
  cache.length = batch.length;
  cache.inputs = batch.inputs;
  cache.layers.resize(c.num_layers);

  RowMatrix<T> x(n, d);
  const auto tok = p.tok_emb.mat();
  const auto pos = p.pos_emb.mat();
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = tok.row(batch.inputs[static_cast<std::size_t>(i)]) + pos.row(i % t);
  }

  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const auto& lp = p.layers[l];
    const auto& w = weights[l];
    auto& lc = cache.layers[l];
    lc.x_in = x;
    detail::layer_norm(x, lp.attn_norm_gain, lp.attn_norm_bias, lc.h1, lc.mean1, lc.rstd1);
    lc.qkv.noalias() = lc.h1 * w.w_qkv->mat();
    detail::add_row_bias(lc.qkv, lp.b_qkv);

    lc.attn.setZero(n, d);
    lc.probs.assign(static_cast<std::size_t>(batch.size * heads * t * t), T(0));
    RowMatrix<T> scores(t, t);
    for (std::size_t s = 0; s < batch.size; ++s) {
      const auto r0 = static_cast<Eigen::Index>(s) * t;
      for (Eigen::Index h = 0; h < heads; ++h) {
        auto q = lc.qkv.block(r0, h * hd, t, hd);
        auto k = lc.qkv.block(r0, d + h * hd, t, hd);
        auto v = lc.qkv.block(r0, 2 * d + h * hd, t, hd);
        scores.noalias() = q * k.transpose();
        MatrixMap<T> prob(lc.probs.data() + (static_cast<Eigen::Index>(s) * heads + h) * t * t, t, t);
        for (Eigen::Index i = 0; i < t; ++i) {
          T mx = -std::numeric_limits<T>::infinity();
          for (Eigen::Index j = 0; j <= i; ++j) mx = std::max(mx, scores(i, j) * scale);
          T sum = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            const T e = std::exp(scores(i, j) * scale - mx);
            prob(i, j) = e;
            sum += e;
          }
          for (Eigen::Index j = 0; j <= i; ++j) prob(i, j) /= sum;
        }
        lc.attn.block(r0, h * hd, t, hd).noalias() = prob * v;
      }
    }
    x.noalias() += lc.attn * w.w_o->mat();
    detail::add_row_bias(x, lp.b_o);
    lc.x_mid = x;

    detail::layer_norm(x, lp.mlp_norm_gain, lp.mlp_norm_bias, lc.h2, lc.mean2, lc.rstd2);
    lc.pre_act.noalias() = lc.h2 * w.w_up->mat();
    detail::add_row_bias(lc.pre_act, lp.b_up);
    if (c.activation == Activation::gelu) {
      lc.act = lc.pre_act.unaryExpr([](T u) { return detail::gelu(u); });
    } else {
      lc.act = lc.pre_act.cwiseMax(T(0));
    }
    x.noalias() += lc.act * w.w_down->mat();
    detail::add_row_bias(x, lp.b_down);
  }
  cache.x_final = x;
  detail::layer_norm(x, p.final_norm_gain, p.final_norm_bias, cache.h_final, cache.mean_f, cache.rstd_f);
  if (p.lm_head.empty()) {
    cache.logits.noalias() = cache.h_final * p.tok_emb.mat().transpose();
  } else {
    cache.logits.noalias() = cache.h_final * p.lm_head.mat();
  }
}

template <typename T>
RowMatrix<T> forward(const SlmParams<T>& p, const Batch& batch) {
  ForwardCache<T> cache;
  const auto w = own_weights(p);
  forward<T>(p, w, batch, cache);
  return std::move(cache.logits);
}

// Accumulates (+=) parameter gradients of sum(dlogits * logits). Non-matrix parameters
// go to grad; the four layer matrices go through weight_grads.
template <typename T>
void backward(const SlmParams<T>& p, std::span<const LayerWeights<T>> weights, const ForwardCache<T>& cache,
              const RowMatrix<T>& dlogits, SlmParams<T>& grad,
              std::span<const LayerWeightGrads<T>> weight_grads) {
  const auto& c = p.config;
  const auto d = static_cast<Eigen::Index>(c.model_dim);
  const auto hd = static_cast<Eigen::Index>(c.head_dim());
  const auto heads = static_cast<Eigen::Index>(c.num_heads);
  const auto t = static_cast<Eigen::Index>(cache.length);
  const auto n = static_cast<Eigen::Index>(cache.size * cache.length);
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  RowMatrix<T> dh(n, d);
  if (p.lm_head.empty()) {
    dh.noalias() = dlogits * p.tok_emb.mat();
    grad.tok_emb.mat().noalias() += dlogits.transpose() * cache.h_final;
  } else {
    dh.noalias() = dlogits * p.lm_head.mat().transpose();
    grad.lm_head.mat().noalias() += cache.h_final.transpose() * dlogits;
  }
  RowMatrix<T> dx;
  detail::layer_norm_backward(dh, cache.x_final, p.final_norm_gain, cache.mean_f, cache.rstd_f, dx,
                              grad.final_norm_gain, grad.final_norm_bias);

  RowMatrix<T> dact, dpre, dh2, dxn, dattn, dqkv(n, 3 * d), dh1, dprob(t, t), dscore(t, t);
  for (std::size_t li = c.num_layers; li-- > 0;) {
    const auto& lp = p.layers[li];
    const auto& w = weights[li];
    const auto& wg = weight_grads[li];
    auto& lg = grad.layers[li];
    const auto& lc = cache.layers[li];

    // x_out = x_mid + act * W_down + b_down
    wg.w_down->mat().noalias() += lc.act.transpose() * dx;
    detail::accumulate_col_sums(dx, lg.b_down);
    dact.noalias() = dx * w.w_down->mat().transpose();
    if (c.activation == Activation::gelu) {
      dpre = dact.cwiseProduct(lc.pre_act.unaryExpr([](T u) { return detail::gelu_grad(u); }));
    } else {
      dpre = dact.cwiseProduct(lc.pre_act.unaryExpr([](T u) { return u > T(0) ? T(1) : T(0); }));
    }
    wg.w_up->mat().noalias() += lc.h2.transpose() * dpre;
    detail::accumulate_col_sums(dpre, lg.b_up);
    dh2.noalias() = dpre * w.w_up->mat().transpose();
    detail::layer_norm_backward(dh2, lc.x_mid, lp.mlp_norm_gain, lc.mean2, lc.rstd2, dxn, lg.mlp_norm_gain,
                                lg.mlp_norm_bias);
    dx += dxn;

    // x_mid = x_in + attn * W_o + b_o
    wg.w_o->mat().noalias() += lc.attn.transpose() * dx;
    detail::accumulate_col_sums(dx, lg.b_o);
    dattn.noalias() = dx * w.w_o->mat().transpose();

    dqkv.setZero();
    for (std::size_t s = 0; s < cache.size; ++s) {
      const auto r0 = static_cast<Eigen::Index>(s) * t;
      for (Eigen::Index h = 0; h < heads; ++h) {
        auto q = lc.qkv.block(r0, h * hd, t, hd);
        auto k = lc.qkv.block(r0, d + h * hd, t, hd);
        auto v = lc.qkv.block(r0, 2 * d + h * hd, t, hd);
        ConstMatrixMap<T> prob(lc.probs.data() + (static_cast<Eigen::Index>(s) * heads + h) * t * t, t, t);
        auto dout = dattn.block(r0, h * hd, t, hd);
        dprob.noalias() = dout * v.transpose();
        dqkv.block(r0, 2 * d + h * hd, t, hd).noalias() = prob.transpose() * dout;
        for (Eigen::Index i = 0; i < t; ++i) {
          T dot = 0;
          for (Eigen::Index j = 0; j <= i; ++j) dot += dprob(i, j) * prob(i, j);
          for (Eigen::Index j = 0; j <= i; ++j) dscore(i, j) = prob(i, j) * (dprob(i, j) - dot) * scale;
          for (Eigen::Index j = i + 1; j < t; ++j) dscore(i, j) = T(0);
        }
        dqkv.block(r0, h * hd, t, hd).noalias() = dscore * k;
        dqkv.block(r0, d + h * hd, t, hd).noalias() = dscore.transpose() * q;
      }
    }
    wg.w_qkv->mat().noalias() += lc.h1.transpose() * dqkv;
    detail::accumulate_col_sums(dqkv, lg.b_qkv);
    dh1.noalias() = dqkv * w.w_qkv->mat().transpose();
    detail::layer_norm_backward(dh1, lc.x_in, lp.attn_norm_gain, lc.mean1, lc.rstd1, dxn, lg.attn_norm_gain,
                                lg.attn_norm_bias);
    dx += dxn;
  }

  auto dtok = grad.tok_emb.mat();
  auto dpos = grad.pos_emb.mat();
  for (Eigen::Index i = 0; i < n; ++i) {
    dtok.row(cache.inputs[static_cast<std::size_t>(i)]) += dx.row(i);
    dpos.row(i % t) += dx.row(i);
  }
}

}  // namespace sslm
