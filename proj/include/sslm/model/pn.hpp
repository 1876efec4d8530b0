// SPDX-License-Identifier: Apache-2.0
#pragma once

// Projected network: every expert i materializes each MLP matrix of layer l as
//
//   W(l, i)[a, b] = sum_q E[i, q] * sum_r M(l)[q, r] * T(l)[r, a, b]
//
// T holds h slices per matrix (stored slice-major, shape {h, d_in, d_out}), M(l) is an
// m x h layer mixing matrix shared by both MLP matrices of the layer and E is the k x m
// table of expert codes. Attention, embeddings, norms and MLP biases are shared.

#include <map>
#include <span>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/rng.hpp"
#include "sslm/core/tensor.hpp"
#include "sslm/model/config.hpp"
#include "sslm/model/loss.hpp"
#include "sslm/model/slm.hpp"
#include "sslm/model/transformer.hpp"

namespace sslm {

template <typename T>
struct PnLayer {
  Tensor<T> t_up;    // {h, d, d'}
  Tensor<T> t_down;  // {h, d', d}
  Tensor<T> mix;     // M: {m, h}
};

template <typename T>
struct PnParams {
  ModelConfig config;
  PnConfig pn;
  SlmParams<T> shared;  // MLP weight matrices left empty
  std::vector<PnLayer<T>> layers;
  Tensor<T> codes;  // E: {k, m}

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

  PnParams zeros_like() const {
    PnParams z = *this;
    z.for_each([](const std::string&, Tensor<T>& t) { t.zero(); });
    return z;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    s.shared.for_each(f);
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".mlp.";
      f(p + "up.T", s.layers[l].t_up);
      f(p + "down.T", s.layers[l].t_down);
      f(p + "M", s.layers[l].mix);
    }
    f(std::string("experts.E"), s.codes);
  }
};

enum class PnInit {
  random,        // truncated normal; T scaled by 1/sqrt(h)
  ones,          // E and M all ones
  hard_mixture,  // E = I, M = I; requires h = k = m
};

template <typename T>
PnParams<T> build_pn(const ModelConfig& config, const PnConfig& pn, std::uint64_t seed,
                     PnInit init = PnInit::random) {
  config.validate();
  pn.validate();
  if (init == PnInit::hard_mixture && !(pn.h == pn.k && pn.m == pn.k)) {
    throw ConfigError("hard-mixture initialization needs h = k = m");
  }
  Rng rng(seed);
  PnParams<T> p;
  p.config = config;
  p.pn = pn;
  p.shared = detail::allocate_slm<T>(config, rng, false);
  const std::size_t d = config.model_dim, di = config.inner_dim;
  const double t_std = kInitStddev / std::sqrt(static_cast<double>(pn.h));
  p.layers.resize(config.num_layers);
  for (auto& l : p.layers) {
    l.t_up = Tensor<T>({pn.h, d, di});
    l.t_down = Tensor<T>({pn.h, di, d});
    l.mix = Tensor<T>({pn.m, pn.h});
    fill_truncated_normal(l.t_up, rng, t_std);
    fill_truncated_normal(l.t_down, rng, t_std);
  }
  p.codes = Tensor<T>({pn.k, pn.m});
  switch (init) {
    case PnInit::random:
      // Unit-variance expert codes; M scaled by 1/sqrt(m) so projection coefficients are O(1).
      for (auto& l : p.layers) fill_truncated_normal(l.mix, rng, 1.0 / std::sqrt(static_cast<double>(pn.m)));
      fill_truncated_normal(p.codes, rng, 1.0);
      break;
    case PnInit::ones:
      for (auto& l : p.layers) std::fill(l.mix.data.begin(), l.mix.data.end(), T(1));
      std::fill(p.codes.data.begin(), p.codes.data.end(), T(1));
      break;
    case PnInit::hard_mixture:
      for (auto& l : p.layers) {
        for (std::size_t q = 0; q < pn.m; ++q) l.mix.data[q * pn.h + q] = T(1);
      }
      for (std::size_t i = 0; i < pn.k; ++i) p.codes.data[i * pn.m + i] = T(1);
      // T slices are independent experts; use the SLM scale rather than 1/sqrt(h).
      for (auto& l : p.layers) {
        fill_truncated_normal(l.t_up, rng, kInitStddev);
        fill_truncated_normal(l.t_down, rng, kInitStddev);
      }
      break;
  }
  return p;
}

// coef[r] = sum_q E[i, q] * M(l)[q, r]
template <typename T>
std::vector<T> projection_coefficients(const PnParams<T>& p, std::size_t layer, std::size_t expert) {
  const std::size_t h = p.pn.h, m = p.pn.m;
  std::vector<T> coef(h, T(0));
  const T* e = p.codes.ptr() + expert * m;
  const T* mix = p.layers[layer].mix.ptr();
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t r = 0; r < h; ++r) coef[r] += e[q] * mix[q * h + r];
  }
  return coef;
}

template <typename T>
Tensor<T> combine_slices(const Tensor<T>& slices, std::span<const T> coef) {
  const std::size_t h = slices.shape[0];
  Tensor<T> w({slices.shape[1], slices.shape[2]});
  const std::size_t sz = w.numel();
  auto out = w.vec();
  for (std::size_t r = 0; r < h; ++r) {
    out += coef[r] * ConstVectorMap<T>(slices.ptr() + r * sz, static_cast<Eigen::Index>(sz));
  }
  return w;
}

template <typename T>
struct ExpertMlp {
  std::vector<Tensor<T>> up, down;  // per layer
  std::vector<std::vector<T>> coef;  // per layer
};

template <typename T>
ExpertMlp<T> materialize_mlp(const PnParams<T>& p, std::size_t expert) {
  if (expert >= p.pn.k) {
    throw IndexError("expert " + std::to_string(expert) + " >= k = " + std::to_string(p.pn.k));
  }
  ExpertMlp<T> out;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    out.coef.push_back(projection_coefficients(p, l, expert));
    out.up.push_back(combine_slices(p.layers[l].t_up, std::span<const T>(out.coef.back())));
    out.down.push_back(combine_slices(p.layers[l].t_down, std::span<const T>(out.coef.back())));
  }
  return out;
}

// Materializes expert i as a standalone SLM with no projected structure.
template <typename T>
SlmParams<T> project_expert(const PnParams<T>& p, std::size_t expert) {
  auto mlp = materialize_mlp(p, expert);
  SlmParams<T> out = p.shared;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.layers[l].w_up = std::move(mlp.up[l]);
    out.layers[l].w_down = std::move(mlp.down[l]);
  }
  return out;
}

namespace detail {

template <typename T>
std::map<std::size_t, std::vector<std::size_t>> group_by_cluster(const Batch& batch, std::size_t k) {
  if (batch.clusters.size() != batch.size) throw ConfigError("projected network needs one cluster id per sequence");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t s = 0; s < batch.size; ++s) {
    if (batch.clusters[s] >= k) {
      throw IndexError("cluster " + std::to_string(batch.clusters[s]) + " >= k = " + std::to_string(k));
    }
    groups[batch.clusters[s]].push_back(s);
  }
  return groups;
}

template <typename T>
std::vector<LayerWeights<T>> expert_weights(const PnParams<T>& p, const ExpertMlp<T>& mlp) {
  std::vector<LayerWeights<T>> w;
  for (std::size_t l = 0; l < p.shared.layers.size(); ++l) {
    const auto& sl = p.shared.layers[l];
    w.push_back({&sl.w_qkv, &sl.w_o, &mlp.up[l], &mlp.down[l]});
  }
  return w;
}

}  // namespace detail

// Logits for a batch where sequence s is routed to expert batch.clusters[s]. Row order
// matches the batch.
template <typename T>
RowMatrix<T> pn_forward(const PnParams<T>& p, const Batch& batch) {
  const auto groups = detail::group_by_cluster<T>(batch, p.pn.k);
  RowMatrix<T> logits(static_cast<Eigen::Index>(batch.rows()), static_cast<Eigen::Index>(p.config.vocab_size));
  const auto t = static_cast<Eigen::Index>(batch.length);
  for (const auto& [cluster, seqs] : groups) {
    const auto mlp = materialize_mlp(p, cluster);
    const auto w = detail::expert_weights(p, mlp);
    ForwardCache<T> cache;
    forward<T>(p.shared, w, batch.select(seqs), cache);
    for (std::size_t j = 0; j < seqs.size(); ++j) {
      logits.middleRows(static_cast<Eigen::Index>(seqs[j]) * t, t) =
          cache.logits.middleRows(static_cast<Eigen::Index>(j) * t, t);
    }
  }
  return logits;
}

// Forward + backward for a routed batch. The per-group loss callback gets the group's
// sub-batch and logits and must fill dlogits; gradients accumulate into grad.
template <typename T, typename LossFn>
LossSum pn_loss_and_grad(const PnParams<T>& p, const Batch& batch, PnParams<T>& grad, LossFn&& loss_fn) {
  const auto groups = detail::group_by_cluster<T>(batch, p.pn.k);
  const std::size_t h = p.pn.h, m = p.pn.m;
  LossSum total;
  RowMatrix<T> dlogits;
  for (const auto& [cluster, seqs] : groups) {
    const auto mlp = materialize_mlp(p, cluster);
    const auto w = detail::expert_weights(p, mlp);
    const Batch sub = batch.select(seqs);
    ForwardCache<T> cache;
    forward<T>(p.shared, w, sub, cache);
    total += loss_fn(sub, cache.logits, dlogits);

    std::vector<Tensor<T>> dup, ddown;
    std::vector<LayerWeightGrads<T>> wg;
    dup.reserve(p.layers.size());
    ddown.reserve(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      dup.push_back(mlp.up[l].zeros_like());
      ddown.push_back(mlp.down[l].zeros_like());
      auto& gl = grad.shared.layers[l];
      wg.push_back({&gl.w_qkv, &gl.w_o, &dup.back(), &ddown.back()});
    }
    backward<T>(p.shared, w, cache, dlogits, grad.shared, wg);

    // Chain rule through W = sum_r coef_r T_r and coef = E_i M.
    T* de = grad.codes.ptr() + cluster * m;
    const T* e = p.codes.ptr() + cluster * m;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const auto& pl = p.layers[l];
      auto& gl = grad.layers[l];
      const std::size_t up_sz = dup[l].numel(), down_sz = ddown[l].numel();
      std::vector<T> dcoef(h);
      for (std::size_t r = 0; r < h; ++r) {
        ConstVectorMap<T> tu(pl.t_up.ptr() + r * up_sz, static_cast<Eigen::Index>(up_sz));
        ConstVectorMap<T> td(pl.t_down.ptr() + r * down_sz, static_cast<Eigen::Index>(down_sz));
        dcoef[r] = tu.dot(dup[l].vec()) + td.dot(ddown[l].vec());
        VectorMap<T>(gl.t_up.ptr() + r * up_sz, static_cast<Eigen::Index>(up_sz)) += mlp.coef[l][r] * dup[l].vec();
        VectorMap<T>(gl.t_down.ptr() + r * down_sz, static_cast<Eigen::Index>(down_sz)) +=
            mlp.coef[l][r] * ddown[l].vec();
      }
      const T* mix = pl.mix.ptr();
      T* dmix = gl.mix.ptr();
      for (std::size_t q = 0; q < m; ++q) {
        for (std::size_t r = 0; r < h; ++r) {
          dmix[q * h + r] += e[q] * dcoef[r];
          de[q] += mix[q * h + r] * dcoef[r];
        }
      }
    }
  }
  return total;
}

}  // namespace sslm
