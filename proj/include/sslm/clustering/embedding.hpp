// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/hash.hpp"
#include "sslm/corpus/tokenizer.hpp"

namespace sslm {

using EmbeddingVector = std::vector<double>;

// Any callable mapping a token sequence to a fixed-dimension vector can back clustering.
using Embedder = std::function<EmbeddingVector(std::span<const TokenId>)>;

// Hashed token n-gram counts (TF), L2-normalized.
struct HashedNgramEmbedder {
  std::size_t dim = 256;
  std::size_t min_n = 1;
  std::size_t max_n = 3;

  std::size_t bucket(std::span<const TokenId> gram) const {
    Fnv1a h;
    const auto n = static_cast<std::uint32_t>(gram.size());
    h.update(&n, sizeof(n));
    h.update_values(gram);
    return static_cast<std::size_t>(h.digest() % dim);
  }

  EmbeddingVector operator()(std::span<const TokenId> tokens) const {
    if (tokens.empty()) throw EmptyInput("cannot embed an empty token sequence");
    if (dim == 0 || min_n < 1 || max_n < min_n) throw ConfigError("invalid embedder settings");
    EmbeddingVector v(dim, 0.0);
    for (std::size_t n = min_n; n <= max_n; ++n) {
      if (tokens.size() < n) break;
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) v[bucket(tokens.subspan(i, n))] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace sslm
