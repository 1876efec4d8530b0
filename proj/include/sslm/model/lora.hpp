// SPDX-License-Identifier: Apache-2.0
#pragma once

// Low-rank adapters: an adapted matrix W (rows x cols) is used as W + B * A with
// A: r x cols and B: rows x r. The base model stays frozen.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/core/error.hpp"
#include "sslm/core/rng.hpp"
#include "sslm/core/tensor.hpp"
#include "sslm/model/loss.hpp"
#include "sslm/model/slm.hpp"
#include "sslm/model/transformer.hpp"

namespace sslm {

enum class LoraSites { mlp, attention, all };

inline std::string to_string(LoraSites s) {
  switch (s) {
    case LoraSites::mlp: return "mlp";
    case LoraSites::attention: return "attention";
    case LoraSites::all: return "all";
  }
  return "mlp";
}

inline LoraSites parse_lora_sites(const std::string& s) {
  if (s == "mlp") return LoraSites::mlp;
  if (s == "attention") return LoraSites::attention;
  if (s == "all") return LoraSites::all;
  throw ConfigError("lora.sites: unknown value '" + s + "'");
}

struct LoraConfig {
  std::size_t rank = 8;
  LoraSites sites = LoraSites::mlp;
};

inline void to_json(nlohmann::json& j, const LoraConfig& c) { j = {{"rank", c.rank}, {"sites", to_string(c.sites)}}; }
inline void from_json(const nlohmann::json& j, LoraConfig& c) {
  c = LoraConfig{};
  c.rank = j.value("rank", c.rank);
  c.sites = parse_lora_sites(j.value("sites", std::string("mlp")));
}

// Matrix slots inside a layer, in LayerWeights order.
enum class LayerMatrix : std::size_t { qkv = 0, out = 1, up = 2, down = 3 };
inline constexpr std::array<const char*, 4> kLayerMatrixNames = {"attn.qkv", "attn.out", "mlp.up", "mlp.down"};

inline bool site_adapted(LoraSites sites, std::size_t slot) {
  const bool attention = slot < 2;
  return sites == LoraSites::all || (attention ? sites == LoraSites::attention : sites == LoraSites::mlp);
}

template <typename T>
struct LoraPair {
  Tensor<T> a;  // r x cols
  Tensor<T> b;  // rows x r
  bool empty() const { return a.empty(); }
};

template <typename T>
struct LoraAdapters {
  LoraConfig config;
  std::vector<std::array<LoraPair<T>, 4>> layers;

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

  LoraAdapters zeros_like() const {
    LoraAdapters z = *this;
    z.for_each([](const std::string&, Tensor<T>& t) { t.zero(); });
    return z;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& s, F& f) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      for (std::size_t slot = 0; slot < 4; ++slot) {
        auto& pr = s.layers[l][slot];
        if (pr.empty()) continue;
        const std::string p = "layers." + std::to_string(l) + "." + kLayerMatrixNames[slot] + ".lora_";
        f(p + "A", pr.a);
        f(p + "B", pr.b);
      }
    }
  }
};

inline std::size_t lora_trainable_per_matrix(std::size_t rank, std::size_t rows, std::size_t cols) {
  return rank * (rows + cols);
}

// Trainable adapter parameters for a config, without allocating.
inline std::uint64_t lora_param_count(const ModelConfig& c, const LoraConfig& lc) {
  const std::uint64_t d = c.model_dim, di = c.inner_dim, r = lc.rank;
  std::uint64_t per_layer = 0;
  if (site_adapted(lc.sites, 0)) per_layer += r * (d + 3 * d);
  if (site_adapted(lc.sites, 1)) per_layer += r * (d + d);
  if (site_adapted(lc.sites, 2)) per_layer += r * (d + di);
  if (site_adapted(lc.sites, 3)) per_layer += r * (di + d);
  return c.num_layers * per_layer;
}

template <typename T>
LoraAdapters<T> build_lora(const SlmParams<T>& base, const LoraConfig& lc, std::uint64_t seed) {
  const auto& c = base.config;
  if (lc.rank < 1) throw ConfigError("lora.rank must be >= 1");
  if (lc.rank > std::min(c.model_dim, c.inner_dim)) {
    throw ConfigError("lora.rank " + std::to_string(lc.rank) + " exceeds min(model_dim, inner_dim) = " +
                      std::to_string(std::min(c.model_dim, c.inner_dim)));
  }
  Rng rng(seed);
  LoraAdapters<T> ad;
  ad.config = lc;
  ad.layers.resize(base.layers.size());
  const double a_std = 1.0 / std::sqrt(static_cast<double>(lc.rank));
  for (std::size_t l = 0; l < base.layers.size(); ++l) {
    const auto& bl = base.layers[l];
    const std::array<const Tensor<T>*, 4> mats = {&bl.w_qkv, &bl.w_o, &bl.w_up, &bl.w_down};
    for (std::size_t slot = 0; slot < 4; ++slot) {
      if (!site_adapted(lc.sites, slot)) continue;
      auto& pr = ad.layers[l][slot];
      pr.a = Tensor<T>({lc.rank, mats[slot]->cols()});
      pr.b = Tensor<T>({mats[slot]->rows(), lc.rank});
      fill_truncated_normal(pr.a, rng, a_std);
    }
  }
  return ad;
}

namespace detail {

template <typename T>
Tensor<T> adapted(const Tensor<T>& w, const LoraPair<T>& pr) {
  Tensor<T> out = w;
  if (!pr.empty()) out.mat().noalias() += pr.b.mat() * pr.a.mat();
  return out;
}

}  // namespace detail

// Folds every adapter into its base matrix.
template <typename T>
SlmParams<T> merge_lora(const SlmParams<T>& base, const LoraAdapters<T>& ad) {
  SlmParams<T> out = base;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& ol = out.layers[l];
    const std::array<Tensor<T>*, 4> mats = {&ol.w_qkv, &ol.w_o, &ol.w_up, &ol.w_down};
    for (std::size_t slot = 0; slot < 4; ++slot) {
      const auto& pr = ad.layers[l][slot];
      if (!pr.empty()) mats[slot]->mat().noalias() += pr.b.mat() * pr.a.mat();
    }
  }
  return out;
}

template <typename T>
RowMatrix<T> lora_forward(const SlmParams<T>& base, const LoraAdapters<T>& ad, const Batch& batch) {
  return forward<T>(merge_lora(base, ad), batch);
}

// Forward + backward; only adapter gradients are produced. The loss callback fills dlogits.
template <typename T, typename LossFn>
LossSum lora_loss_and_grad(const SlmParams<T>& base, const LoraAdapters<T>& ad, const Batch& batch,
                           LoraAdapters<T>& grad, LossFn&& loss_fn) {
  const SlmParams<T> merged = merge_lora(base, ad);
  const auto w = own_weights(merged);
  ForwardCache<T> cache;
  forward<T>(merged, w, batch, cache);
  RowMatrix<T> dlogits;
  const LossSum loss = loss_fn(batch, cache.logits, dlogits);

  SlmParams<T> scratch = merged.zeros_like();
  backward<T>(merged, w, cache, dlogits, scratch, own_weight_grads(scratch));
  // W_eff = W + B A: dB = dW A^T, dA = B^T dW.
  for (std::size_t l = 0; l < scratch.layers.size(); ++l) {
    const auto& sl = scratch.layers[l];
    const std::array<const Tensor<T>*, 4> dws = {&sl.w_qkv, &sl.w_o, &sl.w_up, &sl.w_down};
    for (std::size_t slot = 0; slot < 4; ++slot) {
      const auto& pr = ad.layers[l][slot];
      if (pr.empty()) continue;
      auto& gp = grad.layers[l][slot];
      gp.b.mat().noalias() += dws[slot]->mat() * pr.a.mat().transpose();
      gp.a.mat().noalias() += pr.b.mat().transpose() * dws[slot]->mat();
    }
  }
  return loss;
}

}  // namespace sslm
