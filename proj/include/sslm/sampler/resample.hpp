// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/core/error.hpp"
#include "sslm/core/hash.hpp"
#include "sslm/core/rng.hpp"
#include "sslm/corpus/corpus.hpp"

namespace sslm {

// Target cluster distribution for resampling the generic windows.
struct ResamplePlan {
  std::vector<double> probabilities;
  std::size_t target_size = 0;
  std::uint64_t seed = 0;

  std::size_t k() const { return probabilities.size(); }

  nlohmann::json to_json() const {
    return {{"probabilities", probabilities}, {"target_size", target_size}, {"seed", seed}};
  }
  static ResamplePlan from_json(const nlohmann::json& j) {
    ResamplePlan p;
    p.probabilities = j.at("probabilities").get<std::vector<double>>();
    p.target_size = j.at("target_size").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
  }
};

// Plan whose probabilities are the specialization histogram. With laplace_alpha > 0 the
// counts are smoothed over clusters the generic histogram supports (for tiny
// specialization sets); by default no smoothing is applied.
inline ResamplePlan make_plan(const ClusterHistogram& spec, std::size_t target_size,
                              std::uint64_t seed, const ClusterHistogram* generic = nullptr,
                              double laplace_alpha = 0.0) {
  ResamplePlan plan;
  plan.target_size = target_size;
  plan.seed = seed;
  if (laplace_alpha <= 0.0) {
    plan.probabilities = spec.frequencies;
    return plan;
  }
  if (!generic || generic->k() != spec.k()) {
    throw ConfigError("laplace smoothing needs the generic histogram over the same k");
  }
  plan.probabilities.assign(spec.k(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < spec.k(); ++c) {
    if (generic->counts[c] == 0) continue;
    plan.probabilities[c] = static_cast<double>(spec.counts[c]) + laplace_alpha;
    total += plan.probabilities[c];
  }
  for (auto& p : plan.probabilities) p /= total;
  return plan;
}

struct ResampledSet {
  std::vector<Window> windows;
  std::vector<std::size_t> source_index;  // index into the generic window list, per draw
};

// Two-stage draw per position i: a cluster c with probability plan[c], then a window
// uniformly (with replacement) inside c. Each draw depends only on (seed, i).
inline ResampledSet resample(std::span<const Window> generic, const ResamplePlan& plan) {
  const std::size_t k = plan.k();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < generic.size(); ++i) {
    if (!generic[i].cluster) throw ConfigError("generic window " + generic[i].id() + " has no cluster");
    const std::size_t c = *generic[i].cluster;
    if (c >= k) throw IndexError("window cluster " + std::to_string(c) + " >= plan k");
    members[c].push_back(i);
  }
  std::vector<double> cumulative(k);
  double acc = 0.0;
  std::size_t last_positive = k;
  for (std::size_t c = 0; c < k; ++c) {
    if (plan.probabilities[c] < 0.0) throw ConfigError("negative plan probability");
    if (plan.probabilities[c] > 0.0) {
      if (members[c].empty()) throw UnsupportedCluster(c);
      last_positive = c;
    }
    acc += plan.probabilities[c];
    cumulative[c] = acc;
  }
  if (last_positive == k) throw ConfigError("plan has no positive probability");

  ResampledSet out;
  out.windows.reserve(plan.target_size);
  out.source_index.reserve(plan.target_size);
  for (std::size_t i = 0; i < plan.target_size; ++i) {
    const double u1 = counter_uniform(plan.seed, 2 * i) * acc;
    std::size_t c = last_positive;
    for (std::size_t j = 0; j < k; ++j) {
      if (plan.probabilities[j] > 0.0 && u1 < cumulative[j]) {
        c = j;
        break;
      }
    }
    const double u2 = counter_uniform(plan.seed, 2 * i + 1);
    const auto& pool = members[c];
    const std::size_t pick = std::min(pool.size() - 1, static_cast<std::size_t>(u2 * static_cast<double>(pool.size())));
    out.source_index.push_back(pool[pick]);
    out.windows.push_back(generic[pool[pick]]);
  }
  return out;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

// Resampled windows as a corpus: one document per draw, id "<window id>@<draw>".
inline Corpus windows_to_corpus(std::span<const Window> windows, const Corpus& source) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : source.documents) by_id.emplace(d.id, &d);
  Corpus out;
  out.vocab_size = source.vocab_size;
  out.role = source.role;
  out.split = Split::train;
  out.documents.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    auto it = by_id.find(w.doc_id);
    Document d;
    d.id = w.id() + "@" + std::to_string(i);
    d.domain = it == by_id.end() ? "unknown" : it->second->domain;
    d.tokens = w.tokens;
    out.documents.push_back(std::move(d));
  }
  return out;
}

inline std::uint64_t corpus_hash(const Corpus& corpus) {
  Fnv1a h;
  for (const auto& d : corpus.documents) {
    h.update(d.id);
    h.update_values(std::span<const TokenId>(d.tokens));
  }
  return h.digest();
}

}  // namespace sslm
