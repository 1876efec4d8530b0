// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/core/error.hpp"

namespace sslm {

// w(c) = P(c | specialization) / P(c | generic), one entry per cluster.
struct ImportanceWeights {
  std::vector<double> weights;

  std::size_t k() const { return weights.size(); }

  nlohmann::json to_json() const { return {{"weights", weights}}; }
  static ImportanceWeights from_json(const nlohmann::json& j) {
    return {j.at("weights").get<std::vector<double>>()};
  }
};

inline ImportanceWeights importance_weights(const ClusterHistogram& spec,
                                            const ClusterHistogram& generic) {
  if (spec.k() != generic.k()) {
    throw ConfigError("histograms disagree on k (" + std::to_string(spec.k()) + " vs " +
                      std::to_string(generic.k()) + ")");
  }
  ImportanceWeights w;
  w.weights.resize(spec.k(), 0.0);
  for (std::size_t c = 0; c < spec.k(); ++c) {
    const double ps = spec.frequencies[c];
    const double pg = generic.frequencies[c];
    if (ps <= 0.0) continue;
    if (pg <= 0.0) throw UnsupportedCluster(c);
    w.weights[c] = ps / pg;
  }
  return w;
}

// Mean over windows of w(c(x)) * loss(x): the generic-set estimate of the
// specialization loss.
inline double weighted_loss(std::span<const std::pair<std::size_t, double>> per_window,
                            const ImportanceWeights& w) {
  if (per_window.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [cluster, loss] : per_window) {
    if (cluster >= w.k()) throw IndexError("cluster id " + std::to_string(cluster) + " >= k");
    sum += w.weights[cluster] * loss;
  }
  return sum / static_cast<double>(per_window.size());
}

}  // namespace sslm
