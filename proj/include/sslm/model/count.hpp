// SPDX-License-Identifier: Apache-2.0
#pragma once

// Closed-form parameter counts. These never allocate, so configs far beyond desk scale
// can be counted.

#include <cstdint>

#include "sslm/model/config.hpp"
#include "sslm/model/mixture.hpp"
#include "sslm/model/pn.hpp"
#include "sslm/model/slm.hpp"

namespace sslm {

struct ParamCount {
  std::uint64_t pretrain = 0;
  std::uint64_t inference = 0;

  friend bool operator==(const ParamCount&, const ParamCount&) = default;
};

// Parameters of one decoder layer excluding the two MLP weight matrices.
inline std::uint64_t layer_shared_count(const ModelConfig& c) {
  const std::uint64_t d = c.model_dim, di = c.inner_dim;
  return 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + di + d;
}

inline std::uint64_t mlp_matrix_count(const ModelConfig& c) {
  return 2 * static_cast<std::uint64_t>(c.model_dim) * c.inner_dim;
}

inline std::uint64_t embedding_count(const ModelConfig& c) {
  const std::uint64_t d = c.model_dim;
  std::uint64_t n = c.vocab_size * d + c.context_length * d + 2 * d;
  if (!c.tie_embeddings) n += d * c.vocab_size;
  return n;
}

inline std::uint64_t slm_param_count(const ModelConfig& c) {
  return embedding_count(c) + c.num_layers * (layer_shared_count(c) + mlp_matrix_count(c));
}

inline std::uint64_t pn_param_count(const ModelConfig& c, const PnConfig& pn) {
  const std::uint64_t per_layer = layer_shared_count(c) + pn.h * mlp_matrix_count(c) + pn.m * pn.h;
  return embedding_count(c) + c.num_layers * per_layer + pn.k * pn.m;
}

inline ParamCount count_params(const ModelConfig& c) { return {slm_param_count(c), slm_param_count(c)}; }

inline ParamCount count_params(const ModelConfig& c, const PnConfig& pn) {
  return {pn_param_count(c, pn), slm_param_count(c)};
}

inline ParamCount count_mixture(const ModelConfig& c, std::size_t k) {
  return {k * slm_param_count(c), slm_param_count(c)};
}

template <typename T>
ParamCount count_params(const SlmParams<T>& p) {
  return {p.numel(), p.numel()};
}

template <typename T>
ParamCount count_params(const PnParams<T>& p) {
  return {p.numel(), slm_param_count(p.config)};
}

template <typename T>
ParamCount count_params(const MixtureParams<T>& m) {
  return {m.numel(), m.experts.empty() ? 0 : m.experts.front().numel()};
}

}  // namespace sslm
