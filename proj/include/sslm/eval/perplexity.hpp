// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/corpus/corpus.hpp"
#include "sslm/model/batch.hpp"
#include "sslm/model/loss.hpp"
#include "sslm/model/pn.hpp"
#include "sslm/model/slm.hpp"
#include "sslm/model/transformer.hpp"

namespace sslm {

// Windows hold one token more than the model context so every input position predicts.
inline std::size_t window_length(const ModelConfig& c) { return c.context_length + 1; }

inline constexpr std::size_t kEvalBatch = 32;

// Summed NLL over every target position of the windows, in fixed batches.
template <typename T>
LossSum windows_loss(const SlmParams<T>& p, std::span<const Window> windows, std::size_t batch_size = kEvalBatch) {
  LossSum total;
  std::vector<const Window*> ptrs;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&windows[i]);
    const Batch b = make_batch(std::span<const Window* const>(ptrs), 0);
    total += cross_entropy<T>(forward<T>(p, b), b.targets);
  }
  return total;
}

// Routed variant: every window must carry its cluster.
template <typename T>
LossSum windows_loss(const PnParams<T>& p, std::span<const Window> windows, std::size_t batch_size = kEvalBatch) {
  LossSum total;
  std::vector<const Window*> ptrs;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&windows[i]);
    const Batch b = make_batch(std::span<const Window* const>(ptrs), 0, true);
    total += cross_entropy<T>(pn_forward(p, b), b.targets);
  }
  return total;
}

struct NllResult {
  double nll = 0.0;
  double ppl = 0.0;
  std::size_t tokens = 0;
};

inline NllResult to_result(const LossSum& s) {
  if (s.count == 0) throw ConfigError("heldout set has no predictable tokens");
  return {s.mean(), std::exp(s.mean()), s.count};
}

// Token-weighted mean NLL over all heldout windows; pad positions excluded.
template <typename T>
NllResult perplexity(const SlmParams<T>& p, const Corpus& heldout) {
  if (heldout.empty()) throw ConfigError("heldout corpus is empty");
  const auto windows = window_corpus(heldout, window_length(p.config));
  return to_result(windows_loss(p, std::span<const Window>(windows)));
}

// Per-domain results, keyed by domain name.
template <typename T>
std::map<std::string, NllResult> perplexity_by_domain(const SlmParams<T>& p, const Corpus& heldout) {
  if (heldout.empty()) throw ConfigError("heldout corpus is empty");
  std::map<std::string, Corpus> parts;
  for (const auto& d : heldout.documents) {
    auto& c = parts[d.domain];
    c.vocab_size = heldout.vocab_size;
    c.documents.push_back(d);
  }
  std::map<std::string, NllResult> out;
  for (const auto& [domain, c] : parts) out.emplace(domain, perplexity(p, c));
  return out;
}

// exp of the unweighted mean of per-domain NLLs.
inline double macro_average(const std::map<std::string, double>& per_domain_nll) {
  if (per_domain_nll.empty()) throw ConfigError("macro average needs at least one domain");
  double s = 0.0;
  for (const auto& [_, v] : per_domain_nll) s += v;
  return std::exp(s / static_cast<double>(per_domain_nll.size()));
}

}  // namespace sslm
