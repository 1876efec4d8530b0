// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/rng.hpp"
#include "sslm/model/slm.hpp"

namespace sslm {

// Hard mixture: k independent SLMs, one per cluster.
template <typename T>
struct MixtureParams {
  std::vector<SlmParams<T>> experts;

  std::size_t k() const { return experts.size(); }
  const ModelConfig& config() const { return experts.front().config; }

  void validate() const {
    if (experts.empty()) throw ConfigError("mixture needs at least one expert");
    for (const auto& e : experts) {
      if (!(e.config == experts.front().config)) throw ConfigError("mixture experts disagree on ModelConfig");
    }
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& e : experts) n += e.numel();
    return n;
  }
};

// Expert i is seeded with derive_seed(seed, i).
template <typename T>
MixtureParams<T> build_mix(const ModelConfig& config, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("mixture k must be >= 1");
  MixtureParams<T> m;
  m.experts.reserve(k);
  for (std::size_t i = 0; i < k; ++i) m.experts.push_back(build_slm<T>(config, derive_seed(seed, i)));
  return m;
}

}  // namespace sslm
