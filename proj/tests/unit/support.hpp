#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sslm/core/rng.hpp"
#include "sslm/model/batch.hpp"
#include "sslm/model/config.hpp"
#include "sslm/model/slm.hpp"

namespace sslm::testing {

inline ModelConfig tiny_config(std::size_t vocab = 11, std::size_t d = 8, std::size_t heads = 2,
                               std::size_t layers = 2, std::size_t inner = 12, std::size_t ctx = 6) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.model_dim = d;
  c.num_heads = heads;
  c.num_layers = layers;
  c.inner_dim = inner;
  c.context_length = ctx;
  return c;
}

// Random batch: `size` sequences of random lengths in [2, max_len], cluster ids below k.
inline Batch random_batch(Rng& rng, std::size_t vocab, std::size_t size, std::size_t max_len, std::size_t k = 0) {
  std::vector<std::vector<TokenId>> seqs(size);
  for (auto& s : seqs) {
    const std::size_t len = 2 + rng.below(max_len - 1);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(rng.below(vocab)));
  }
  std::vector<std::span<const TokenId>> views(seqs.begin(), seqs.end());
  std::vector<std::size_t> clusters;
  if (k > 0) {
    for (std::size_t i = 0; i < size; ++i) clusters.push_back(rng.below(k));
  }
  return make_batch(views, 0, clusters);
}

// Perturbs every parameter so biases and norm gains are not at their trivial init.
template <typename P>
void jitter(P& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  p.for_each([&](const std::string&, auto& t) {
    for (auto& v : t.data) v += static_cast<double>(scale * rng.normal());
  });
}

// Largest per-tensor relative error between an analytic gradient and central differences,
// max|g - fd| / max(max|g|, max|fd|, floor).
struct GradCheck {
  std::string worst_tensor;
  double worst = 0.0;
};

template <typename P, typename LossFn>
GradCheck finite_difference_check(P params, const P& analytic, LossFn&& loss, double step = 1e-5,
                                  double floor = 1e-6) {
  GradCheck out;
  std::vector<std::pair<std::string, std::vector<double>*>> tensors;
  params.for_each([&](const std::string& name, auto& t) { tensors.emplace_back(name, &t.data); });
  std::vector<const std::vector<double>*> grads;
  analytic.for_each([&](const std::string&, const auto& t) { grads.push_back(&t.data); });
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    auto& data = *tensors[ti].second;
    double max_diff = 0.0, max_mag = floor;
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + step;
      const double up = loss(params);
      data[j] = orig - step;
      const double down = loss(params);
      data[j] = orig;
      const double fd = (up - down) / (2 * step);
      const double g = (*grads[ti])[j];
      max_diff = std::max(max_diff, std::abs(fd - g));
      max_mag = std::max({max_mag, std::abs(fd), std::abs(g)});
    }
    const double rel = max_diff / max_mag;
    if (rel > out.worst) {
      out.worst = rel;
      out.worst_tensor = tensors[ti].first;
    }
  }
  return out;
}

// Straight-line scalar transformer used as an oracle: pre-norm blocks, causal softmax
// attention, tanh-GELU MLP, final norm, tied or untied output head. Loops only.
inline std::vector<std::vector<double>> oracle_logits(const SlmParams<double>& p, const std::vector<TokenId>& seq) {
  const auto& c = p.config;
  const std::size_t d = c.model_dim, t = seq.size(), H = c.num_heads, hd = d / H, di = c.inner_dim;
  auto at2 = [](const Tensor<double>& m, std::size_t i, std::size_t j) { return m.data[i * m.shape[1] + j]; };
  auto norm = [&](const std::vector<double>& x, const Tensor<double>& g, const Tensor<double>& b) {
    double mu = 0, var = 0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    std::vector<double> y(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) y[j] = (x[j] - mu) / std::sqrt(var + 1e-5) * g.data[j] + b.data[j];
    return y;
  };
  std::vector<std::vector<double>> x(t, std::vector<double>(d));
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i][j] = at2(p.tok_emb, static_cast<std::size_t>(seq[i]), j) + at2(p.pos_emb, i, j);
  }
  for (const auto& L : p.layers) {
    std::vector<std::vector<double>> qkv(t, std::vector<double>(3 * d));
    for (std::size_t i = 0; i < t; ++i) {
      const auto h = norm(x[i], L.attn_norm_gain, L.attn_norm_bias);
      for (std::size_t o = 0; o < 3 * d; ++o) {
        double s = L.b_qkv.data[o];
        for (std::size_t j = 0; j < d; ++j) s += h[j] * at2(L.w_qkv, j, o);
        qkv[i][o] = s;
      }
    }
    std::vector<std::vector<double>> attn(t, std::vector<double>(d, 0.0));
    for (std::size_t head = 0; head < H; ++head) {
      for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> w(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0;
          for (std::size_t e = 0; e < hd; ++e) s += qkv[i][head * hd + e] * qkv[j][d + head * hd + e];
          w[j] = s / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, w[j]);
        }
        double z = 0;
        for (auto& v : w) z += (v = std::exp(v - mx));
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t e = 0; e < hd; ++e) attn[i][head * hd + e] += w[j] / z * qkv[j][2 * d + head * hd + e];
        }
      }
    }
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> add(d);
      for (std::size_t o = 0; o < d; ++o) {
        double s = L.b_o.data[o];
        for (std::size_t j = 0; j < d; ++j) s += attn[i][j] * at2(L.w_o, j, o);
        add[o] = s;
      }
      for (std::size_t o = 0; o < d; ++o) x[i][o] += add[o];
      const auto h = norm(x[i], L.mlp_norm_gain, L.mlp_norm_bias);
      std::vector<double> a(di);
      for (std::size_t o = 0; o < di; ++o) {
        double s = L.b_up.data[o];
        for (std::size_t j = 0; j < d; ++j) s += h[j] * at2(L.w_up, j, o);
        a[o] = c.activation == Activation::gelu
                   ? 0.5 * s * (1 + std::tanh(std::sqrt(2 / M_PI) * (s + 0.044715 * s * s * s)))
                   : std::max(0.0, s);
      }
      for (std::size_t o = 0; o < d; ++o) {
        double s = L.b_down.data[o];
        for (std::size_t j = 0; j < di; ++j) s += a[j] * at2(L.w_down, j, o);
        x[i][o] += s;
      }
    }
  }
  std::vector<std::vector<double>> logits(t, std::vector<double>(c.vocab_size));
  for (std::size_t i = 0; i < t; ++i) {
    const auto h = norm(x[i], p.final_norm_gain, p.final_norm_bias);
    for (std::size_t v = 0; v < c.vocab_size; ++v) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        s += h[j] * (p.lm_head.empty() ? at2(p.tok_emb, v, j) : at2(p.lm_head, j, v));
      }
      logits[i][v] = s;
    }
  }
  return logits;
}

}  // namespace sslm::testing
