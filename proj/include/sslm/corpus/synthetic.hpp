// SPDX-License-Identifier: Apache-2.0
#pragma once

// Offline stand-in for web-scale corpora: every domain is a word-level Markov chain
// over its own lexicon, and every lexicon is spelled with its own subset of letters.
// Character models must memorize the lexicons, so small models feel capacity pressure,
// and hashed character n-grams separate the domains cleanly.

#include <algorithm>
#include <string>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/rng.hpp"

namespace sslm {

struct SyntheticConfig {
  std::size_t num_domains = 4;
  std::size_t alphabet_size = 10;
  std::size_t lexicon_size = 120;
  std::size_t successors = 3;
  std::size_t min_words = 40;
  std::size_t max_words = 90;
  std::uint64_t seed = 7;
};

class MarkovSource {
 public:
  MarkovSource(std::string name, const SyntheticConfig& cfg, std::uint64_t seed)
      : name_(std::move(name)) {
    if (cfg.alphabet_size < 2 || cfg.alphabet_size > 26) {
      throw ConfigError("synthetic.alphabet_size must be in [2, 26]");
    }
    if (cfg.lexicon_size < 2 || cfg.successors < 1 || cfg.min_words < 1 ||
        cfg.max_words < cfg.min_words) {
      throw ConfigError("synthetic: invalid lexicon or document length settings");
    }
    min_words_ = cfg.min_words;
    max_words_ = cfg.max_words;
    Rng rng(seed);
    std::string letters = "abcdefghijklmnopqrstuvwxyz";
    rng.shuffle(std::span<char>(letters.data(), letters.size()));
    const std::string alphabet = letters.substr(0, cfg.alphabet_size);

    while (lexicon_.size() < cfg.lexicon_size) {
      const std::size_t len = 2 + static_cast<std::size_t>(rng.below(5));
      std::string w;
      for (std::size_t i = 0; i < len; ++i) w.push_back(alphabet[rng.below(alphabet.size())]);
      if (std::find(lexicon_.begin(), lexicon_.end(), w) == lexicon_.end()) lexicon_.push_back(w);
    }
    next_.resize(lexicon_.size());
    weights_.resize(lexicon_.size());
    for (std::size_t i = 0; i < lexicon_.size(); ++i) {
      double total = 0.0;
      for (std::size_t s = 0; s < cfg.successors; ++s) {
        next_[i].push_back(static_cast<std::size_t>(rng.below(lexicon_.size())));
        const double w = 1.0 / static_cast<double>(s + 1);
        weights_[i].push_back(w);
        total += w;
      }
      for (auto& w : weights_[i]) w /= total;
    }
  }

  const std::string& name() const { return name_; }
  const std::vector<std::string>& lexicon() const { return lexicon_; }

  std::string generate(Rng& rng) const {
    const std::size_t n = min_words_ + static_cast<std::size_t>(rng.below(max_words_ - min_words_ + 1));
    std::size_t cur = static_cast<std::size_t>(rng.below(lexicon_.size()));
    std::string out = lexicon_[cur];
    for (std::size_t i = 1; i < n; ++i) {
      double u = rng.uniform();
      std::size_t pick = next_[cur].size() - 1;
      for (std::size_t s = 0; s < next_[cur].size(); ++s) {
        if (u < weights_[cur][s]) {
          pick = s;
          break;
        }
        u -= weights_[cur][s];
      }
      cur = next_[cur][pick];
      out.push_back(' ');
      out += lexicon_[cur];
    }
    return out;
  }

 private:
  std::string name_;
  std::size_t min_words_ = 1;
  std::size_t max_words_ = 1;
  std::vector<std::string> lexicon_;
  std::vector<std::vector<std::size_t>> next_;
  std::vector<std::vector<double>> weights_;
};

inline std::vector<MarkovSource> make_synthetic_sources(const SyntheticConfig& cfg) {
  static const char* kNames[] = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta",
                                 "eta",   "theta", "iota", "kappa", "lambda",  "mu"};
  if (cfg.num_domains < 1) throw ConfigError("synthetic.num_domains must be >= 1");
  std::vector<MarkovSource> sources;
  for (std::size_t d = 0; d < cfg.num_domains; ++d) {
    std::string name = d < std::size(kNames) ? kNames[d] : "domain" + std::to_string(d);
    sources.emplace_back(std::move(name), cfg, derive_seed(cfg.seed, d));
  }
  return sources;
}

// Documents drawn from a mixture of sources; returns (domain index, text) pairs.
inline std::vector<std::pair<std::size_t, std::string>> sample_mixture(
    const std::vector<MarkovSource>& sources, std::span<const double> mixture, std::size_t n_docs,
    std::uint64_t seed) {
  if (mixture.size() != sources.size()) throw ConfigError("mixture size must match sources");
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::string>> docs;
  docs.reserve(n_docs);
  double total = 0.0;
  for (double p : mixture) total += p;
  for (std::size_t i = 0; i < n_docs; ++i) {
    double u = rng.uniform() * total;
    std::size_t d = sources.size() - 1;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      if (u < mixture[s]) {
        d = s;
        break;
      }
      u -= mixture[s];
    }
    docs.emplace_back(d, sources[d].generate(rng));
  }
  return docs;
}

}  // namespace sslm
