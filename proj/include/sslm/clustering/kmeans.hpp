// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sslm/clustering/embedding.hpp"
#include "sslm/core/error.hpp"
#include "sslm/core/rng.hpp"

namespace sslm {

struct Clustering {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;                 // k x dim, row-major
  std::map<std::string, std::size_t> assignments;  // window id -> cluster
  std::vector<std::size_t> labels;               // cluster per input vector, input order
  double inertia = 0.0;                          // sum of squared distances to centroids
  std::vector<double> inertia_history;           // after every assignment step
  std::size_t iterations = 0;

  std::span<const double> centroid(std::size_t c) const {
    return std::span<const double>(centroids).subspan(c * dim, dim);
  }
};

// Nearest centroid under L2; ties go to the lowest cluster id.
inline std::size_t nearest_centroid(std::span<const double> v, std::span<const double> centroids,
                                    std::size_t k, std::size_t dim, double* dist_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(v, centroids.subspan(c * dim, dim));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

inline std::size_t assign(std::span<const double> v, const Clustering& clustering) {
  if (v.size() != clustering.dim) {
    throw ConfigError("embedding dimension " + std::to_string(v.size()) +
                      " does not match clustering dimension " + std::to_string(clustering.dim));
  }
  return nearest_centroid(v, clustering.centroids, clustering.k, clustering.dim);
}

inline std::size_t count_distinct(std::span<const EmbeddingVector> vectors) {
  std::set<EmbeddingVector> distinct(vectors.begin(), vectors.end());
  return distinct.size();
}

// k-means++ seeding: first centre uniform, then each next centre drawn with probability
// proportional to the squared distance to the closest centre chosen so far.
inline std::vector<double> kmeans_plus_plus(std::span<const EmbeddingVector> vectors, std::size_t k,
                                            Rng& rng) {
  const std::size_t n = vectors.size();
  const std::size_t dim = vectors.front().size();
  std::vector<double> centroids;
  centroids.reserve(k * dim);
  const auto first = static_cast<std::size_t>(rng.below(n));
  centroids.insert(centroids.end(), vectors[first].begin(), vectors[first].end());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(vectors[i], vectors[first]);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    double u = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      if (u < d2[i]) {
        pick = i;
        break;
      }
      u -= d2[i];
    }
    if (pick == n) {  // rounding fell off the end: take the last positive-distance point
      for (std::size_t i = n; i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.insert(centroids.end(), vectors[pick].begin(), vectors[pick].end());
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(vectors[i], vectors[pick]));
    }
  }
  return centroids;
}

namespace detail {

inline double assign_all(std::span<const EmbeddingVector> vectors, std::span<const double> centroids,
                         std::size_t k, std::size_t dim, std::vector<std::size_t>& labels,
                         std::vector<double>& dists) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    labels[i] = nearest_centroid(vectors[i], centroids, k, dim, &dists[i]);
    inertia += dists[i];
  }
  return inertia;
}

}  // namespace detail

// Lloyd iterations from the given initial centroids. Stops after max_iters updates or
// once assignments no longer change. An empty cluster is reseeded at the point farthest
// from its current centroid.
inline Clustering lloyd(std::span<const EmbeddingVector> vectors, std::vector<double> centroids,
                        std::size_t max_iters) {
  if (vectors.empty()) throw EmptyInput("no vectors to cluster");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  const std::size_t n = vectors.size();
  const std::size_t dim = vectors.front().size();
  const std::size_t k = centroids.size() / dim;
  Clustering out;
  out.k = k;
  out.dim = dim;
  std::vector<std::size_t> labels(n);
  std::vector<double> dists(n);
  double inertia = detail::assign_all(vectors, centroids, k, dim, labels, dists);
  out.inertia_history.push_back(inertia);

  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::fill(counts.begin(), counts.end(), 0);
    std::vector<double> sums(k * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[labels[i] * dim + j] += vectors[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
      }
    }
    std::vector<char> taken(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || counts[labels[i]] == 0) continue;
        const double d = squared_distance(vectors[i],
                                          std::span<const double>(centroids).subspan(labels[i] * dim, dim));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) continue;
      taken[far] = 1;
      std::copy(vectors[far].begin(), vectors[far].end(),
                centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
    const auto previous = labels;
    inertia = detail::assign_all(vectors, centroids, k, dim, labels, dists);
    out.inertia_history.push_back(inertia);
    out.iterations = it + 1;
    if (labels == previous) break;
  }
  out.centroids = std::move(centroids);
  out.labels = std::move(labels);
  out.inertia = inertia;
  return out;
}

inline Clustering kmeans(std::span<const EmbeddingVector> vectors, std::size_t k,
                         std::size_t max_iters, std::uint64_t seed) {
  if (vectors.empty()) throw EmptyInput("no vectors to cluster");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw ConfigError("embedding dimensions differ");
  }
  const std::size_t distinct = count_distinct(vectors);
  if (k > distinct) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                      " distinct vectors");
  }
  Rng rng(seed);
  return lloyd(vectors, kmeans_plus_plus(vectors, k, rng), max_iters);
}

// Same, recording an id -> cluster table alongside the positional labels.
inline Clustering kmeans(std::span<const EmbeddingVector> vectors, std::span<const std::string> ids,
                         std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (ids.size() != vectors.size()) throw ConfigError("ids and vectors differ in length");
  Clustering c = kmeans(vectors, k, max_iters, seed);
  for (std::size_t i = 0; i < ids.size(); ++i) c.assignments[ids[i]] = c.labels[i];
  return c;
}

}  // namespace sslm
