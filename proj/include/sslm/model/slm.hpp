// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "sslm/core/rng.hpp"
#include "sslm/core/tensor.hpp"
#include "sslm/model/config.hpp"

namespace sslm {

inline constexpr double kInitStddev = 0.02;

template <typename T>
struct LayerParams {
  Tensor<T> attn_norm_gain, attn_norm_bias;
  Tensor<T> w_qkv, b_qkv;  // d x 3d, 3d
  Tensor<T> w_o, b_o;      // d x d, d
  Tensor<T> mlp_norm_gain, mlp_norm_bias;
  Tensor<T> w_up, b_up;      // d x d', d'
  Tensor<T> w_down, b_down;  // d' x d, d

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    visit(*this, prefix, f);
  }
  template <typename F>
  void for_each(const std::string& prefix, F&& f) const {
    visit(*this, prefix, f);
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, const std::string& p, F& f) {
    f(p + "attn_norm.gain", s.attn_norm_gain);
    f(p + "attn_norm.bias", s.attn_norm_bias);
    f(p + "attn.qkv.weight", s.w_qkv);
    f(p + "attn.qkv.bias", s.b_qkv);
    f(p + "attn.out.weight", s.w_o);
    f(p + "attn.out.bias", s.b_o);
    f(p + "mlp_norm.gain", s.mlp_norm_gain);
    f(p + "mlp_norm.bias", s.mlp_norm_bias);
    if (!s.w_up.empty()) f(p + "mlp.up.weight", s.w_up);
    f(p + "mlp.up.bias", s.b_up);
    if (!s.w_down.empty()) f(p + "mlp.down.weight", s.w_down);
    f(p + "mlp.down.bias", s.b_down);
  }
};

// A fully materialized small transformer. When the MLP weight matrices are left empty
// the struct holds only the parameters a projected network shares across experts.
template <typename T>
struct SlmParams {
  ModelConfig config;
  Tensor<T> tok_emb;  // V x d
  Tensor<T> pos_emb;  // context_length x d
  std::vector<LayerParams<T>> layers;
  Tensor<T> final_norm_gain, final_norm_bias;
  Tensor<T> lm_head;  // d x V, empty when tied to tok_emb

  // Visits every non-empty tensor with a stable name, in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
    return n;
  }

  SlmParams zeros_like() const {
    SlmParams z = *this;
    z.for_each([](const std::string&, Tensor<T>& t) { t.zero(); });
    return z;
  }

  template <typename U>
  SlmParams<U> cast() const {
    SlmParams<U> out;
    out.config = config;
    out.tok_emb = tok_emb.template cast<U>();
    out.pos_emb = pos_emb.template cast<U>();
    out.final_norm_gain = final_norm_gain.template cast<U>();
    out.final_norm_bias = final_norm_bias.template cast<U>();
    out.lm_head = lm_head.template cast<U>();
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& a = layers[l];
      auto& b = out.layers[l];
      b.attn_norm_gain = a.attn_norm_gain.template cast<U>();
      b.attn_norm_bias = a.attn_norm_bias.template cast<U>();
      b.w_qkv = a.w_qkv.template cast<U>();
      b.b_qkv = a.b_qkv.template cast<U>();
      b.w_o = a.w_o.template cast<U>();
      b.b_o = a.b_o.template cast<U>();
      b.mlp_norm_gain = a.mlp_norm_gain.template cast<U>();
      b.mlp_norm_bias = a.mlp_norm_bias.template cast<U>();
      b.w_up = a.w_up.template cast<U>();
      b.b_up = a.b_up.template cast<U>();
      b.w_down = a.w_down.template cast<U>();
      b.b_down = a.b_down.template cast<U>();
    }
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    f(std::string("tok_emb"), s.tok_emb);
    f(std::string("pos_emb"), s.pos_emb);
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      s.layers[l].for_each("layers." + std::to_string(l) + ".", f);
    }
    f(std::string("final_norm.gain"), s.final_norm_gain);
    f(std::string("final_norm.bias"), s.final_norm_bias);
    if (!s.lm_head.empty()) f(std::string("lm_head"), s.lm_head);
  }
};

namespace detail {

// Allocates every tensor; weights drawn from a truncated normal, biases zero, gains one.
// MLP weight matrices are skipped when with_mlp_weights is false.
template <typename T>
SlmParams<T> allocate_slm(const ModelConfig& c, Rng& rng, bool with_mlp_weights) {
  c.validate();
  const std::size_t d = c.model_dim, di = c.inner_dim;
  SlmParams<T> p;
  p.config = c;
  auto weight = [&](std::vector<std::size_t> shape) {
    Tensor<T> t(std::move(shape));
    fill_truncated_normal(t, rng, kInitStddev);
    return t;
  };
  p.tok_emb = weight({c.vocab_size, d});
  p.pos_emb = weight({c.context_length, d});
  p.layers.resize(c.num_layers);
  for (auto& l : p.layers) {
    l.attn_norm_gain = Tensor<T>({d}, T(1));
    l.attn_norm_bias = Tensor<T>({d});
    l.w_qkv = weight({d, 3 * d});
    l.b_qkv = Tensor<T>({3 * d});
    l.w_o = weight({d, d});
    l.b_o = Tensor<T>({d});
    l.mlp_norm_gain = Tensor<T>({d}, T(1));
    l.mlp_norm_bias = Tensor<T>({d});
    if (with_mlp_weights) l.w_up = weight({d, di});
    l.b_up = Tensor<T>({di});
    if (with_mlp_weights) l.w_down = weight({di, d});
    l.b_down = Tensor<T>({d});
  }
  p.final_norm_gain = Tensor<T>({d}, T(1));
  p.final_norm_bias = Tensor<T>({d});
  if (!c.tie_embeddings) p.lm_head = weight({d, c.vocab_size});
  return p;
}

}  // namespace detail

// Deterministic initialization given the seed.
template <typename T>
SlmParams<T> build_slm(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return detail::allocate_slm<T>(config, rng, true);
}

}  // namespace sslm
