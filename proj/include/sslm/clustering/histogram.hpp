// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sslm/clustering/embedding.hpp"
#include "sslm/clustering/kmeans.hpp"
#include "sslm/core/error.hpp"
#include "sslm/corpus/corpus.hpp"

namespace sslm {

struct ClusterHistogram {
  std::vector<std::size_t> counts;
  std::vector<double> frequencies;

  std::size_t k() const { return counts.size(); }
  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  static ClusterHistogram from_counts(std::vector<std::size_t> counts) {
    ClusterHistogram h;
    h.counts = std::move(counts);
    const double total = static_cast<double>(h.total());
    if (total == 0.0) throw EmptyCorpus("histogram over zero windows");
    h.frequencies.reserve(h.counts.size());
    for (auto c : h.counts) h.frequencies.push_back(static_cast<double>(c) / total);
    return h;
  }

  // Histogram given directly as frequencies (e.g. a target plan); counts stay empty-valued.
  static ClusterHistogram from_frequencies(std::vector<double> freqs) {
    ClusterHistogram h;
    h.counts.assign(freqs.size(), 0);
    h.frequencies = std::move(freqs);
    return h;
  }
};

inline ClusterHistogram histogram_from_labels(std::span<const std::size_t> labels, std::size_t k) {
  if (labels.empty()) throw EmptyCorpus("histogram over zero windows");
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) {
    if (l >= k) throw IndexError("cluster id " + std::to_string(l) + " >= k");
    ++counts[l];
  }
  return ClusterHistogram::from_counts(std::move(counts));
}

// Assigns every window (embedding it unless it already carries a cluster) and counts.
inline ClusterHistogram histogram(std::span<const Window> windows, const Clustering& clustering,
                                  const Embedder& embed) {
  if (windows.empty()) throw EmptyCorpus("histogram over an empty corpus");
  std::vector<std::size_t> counts(clustering.k, 0);
  for (const auto& w : windows) {
    const std::size_t c = w.cluster ? *w.cluster : assign(embed(w.tokens), clustering);
    ++counts.at(c);
  }
  return ClusterHistogram::from_counts(std::move(counts));
}

// Sets Window::cluster on every window from its embedding.
inline void assign_windows(std::span<Window> windows, const Clustering& clustering,
                           const Embedder& embed) {
  for (auto& w : windows) w.cluster = assign(embed(w.tokens), clustering);
}

// Shannon entropy in nats, with 0 ln 0 = 0.
inline double entropy(const ClusterHistogram& hist) {
  double h = 0.0;
  for (double p : hist.frequencies) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

inline double top_cluster_fraction(const ClusterHistogram& hist) {
  if (hist.frequencies.empty()) return 0.0;
  return *std::max_element(hist.frequencies.begin(), hist.frequencies.end());
}

}  // namespace sslm
