// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/hash.hpp"
#include "sslm/corpus/corpus.hpp"

namespace sslm {

inline constexpr TokenId kIgnoreTarget = -1;

// Next-token batch: inputs are window[0..n-1), targets window[1..n). Shorter windows are
// right-padded with the pad token and an ignored target.
struct Batch {
  std::size_t size = 0;
  std::size_t length = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<std::size_t> clusters;  // routing id per sequence; empty when unused

  std::size_t rows() const { return size * length; }

  std::size_t valid_targets() const {
    return static_cast<std::size_t>(
        std::count_if(targets.begin(), targets.end(), [](TokenId t) { return t != kIgnoreTarget; }));
  }

  // Sub-batch of the given sequences, same padded length.
  Batch select(std::span<const std::size_t> seqs) const {
    Batch out;
    out.size = seqs.size();
    out.length = length;
    out.inputs.reserve(out.rows());
    out.targets.reserve(out.rows());
    for (auto s : seqs) {
      const auto off = static_cast<std::ptrdiff_t>(s * length);
      out.inputs.insert(out.inputs.end(), inputs.begin() + off, inputs.begin() + off + static_cast<std::ptrdiff_t>(length));
      out.targets.insert(out.targets.end(), targets.begin() + off, targets.begin() + off + static_cast<std::ptrdiff_t>(length));
      if (!clusters.empty()) out.clusters.push_back(clusters[s]);
    }
    return out;
  }

  std::uint64_t hash() const {
    Fnv1a h;
    h.update_values(std::span<const TokenId>(inputs));
    h.update_values(std::span<const TokenId>(targets));
    return h.digest();
  }
};

inline Batch make_batch(std::span<const std::span<const TokenId>> sequences, TokenId pad,
                        std::span<const std::size_t> clusters = {}) {
  if (sequences.empty()) throw EmptyInput("batch needs at least one sequence");
  if (!clusters.empty() && clusters.size() != sequences.size()) {
    throw ConfigError("one cluster id per sequence is required");
  }
  Batch b;
  b.size = sequences.size();
  for (const auto& s : sequences) {
    if (s.size() < 2) throw ConfigError("sequences need at least two tokens");
    b.length = std::max(b.length, s.size() - 1);
  }
  b.inputs.assign(b.rows(), pad);
  b.targets.assign(b.rows(), kIgnoreTarget);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    for (std::size_t p = 0; p + 1 < s.size(); ++p) {
      b.inputs[i * b.length + p] = s[p];
      b.targets[i * b.length + p] = s[p + 1];
    }
  }
  b.clusters.assign(clusters.begin(), clusters.end());
  return b;
}

// Windows must all carry a cluster when with_clusters is set.
inline Batch make_batch(std::span<const Window* const> windows, TokenId pad, bool with_clusters = false) {
  std::vector<std::span<const TokenId>> seqs;
  std::vector<std::size_t> clusters;
  seqs.reserve(windows.size());
  for (const Window* w : windows) {
    seqs.emplace_back(w->tokens);
    if (with_clusters) {
      if (!w->cluster) throw ConfigError("window " + w->id() + " has no cluster id");
      clusters.push_back(*w->cluster);
    }
  }
  return make_batch(seqs, pad, clusters);
}

}  // namespace sslm
