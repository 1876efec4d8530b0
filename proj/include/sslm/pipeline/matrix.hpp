// SPDX-License-Identifier: Apache-2.0
#pragma once

// The full method matrix on one (generic, specialization) corpus pair: every method is
// pretrained once per seed, then specialized and evaluated for every specialization-set
// size. Pretraining steps and fine-tuning settings are shared so budgets are equal.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/clustering/embedding.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/clustering/kmeans.hpp"
#include "sslm/corpus/corpus.hpp"
#include "sslm/corpus/synthetic.hpp"
#include "sslm/corpus/tokenizer.hpp"
#include "sslm/eval/cost.hpp"
#include "sslm/eval/perplexity.hpp"
#include "sslm/model/count.hpp"
#include "sslm/model/lora.hpp"
#include "sslm/specialize/specializer.hpp"
#include "sslm/train/trainer.hpp"

namespace sslm {

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m = {"slm", "slm_nopt", "slm_is", "slm_pn", "slm_mix", "slm_d", "lora"};
  return m;
}

inline void check_method(const std::string& m) {
  if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end()) {
    throw ConfigError("method: unknown value '" + m + "'");
  }
}

struct ClusterConfig {
  std::size_t k = 4;
  std::uint64_t seed = 0;
  std::size_t max_iters = 50;
  HashedNgramEmbedder embedder;
};

struct MatrixConfig {
  ModelConfig model;
  ModelConfig teacher;  // larger model for slm_d
  PnConfig pn;
  TrainConfig train;
  FinetuneConfig finetune;
  DistillConfig distill;
  LoraConfig lora;
  ClusterConfig clustering;
  SelectionStrategy strategy = SelectionStrategy::most_frequent_cluster;
  std::vector<std::string> methods = {"slm", "slm_nopt", "slm_is", "slm_pn"};
  std::vector<std::size_t> spec_sizes = {20};  // documents in the specialization train set
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct MatrixInputs {
  Corpus generic;
  Corpus spec_pool;  // specialization training documents; the first n form the size-n set
  Corpus spec_val;   // early stopping
  Corpus spec_test;  // reported heldout
};

struct MatrixRow {
  std::string method;
  std::size_t spec_size = 0;
  double pretrain_cost = 0.0;  // C_generic
  double spec_cost = 0.0;      // C_specialization
  std::optional<double> pretrained_nll;  // before any specialization training
  double nll = 0.0;
  double ppl = 0.0;
};

struct MatrixResult {
  std::vector<MatrixRow> rows;
  ClusterHistogram generic_hist;
  std::map<std::size_t, ClusterHistogram> spec_hist;  // per spec size

  const MatrixRow& row(const std::string& method, std::size_t spec_size) const {
    for (const auto& r : rows) {
      if (r.method == method && r.spec_size == spec_size) return r;
    }
    throw IndexError("no row for " + method + " at size " + std::to_string(spec_size));
  }
};

struct ClusteredWindows {
  Clustering clustering;
  std::vector<Window> windows;
};

// k-means over the embedded windows; every window gets its cluster.
inline ClusteredWindows cluster_windows(std::vector<Window> windows, const ClusterConfig& cc) {
  if (windows.empty()) throw EmptyCorpus("no windows to cluster");
  std::vector<EmbeddingVector> vecs;
  std::vector<std::string> ids;
  vecs.reserve(windows.size());
  for (const auto& w : windows) {
    vecs.push_back(cc.embedder(w.tokens));
    ids.push_back(w.id());
  }
  ClusteredWindows out;
  out.clustering = kmeans(std::span<const EmbeddingVector>(vecs), std::span<const std::string>(ids), cc.k,
                          cc.max_iters, cc.seed);
  for (std::size_t i = 0; i < windows.size(); ++i) windows[i].cluster = out.clustering.labels[i];
  out.windows = std::move(windows);
  return out;
}

inline Embedder as_embedder(const HashedNgramEmbedder& e) {
  return [e](std::span<const TokenId> t) { return e(t); };
}

template <typename T>
MatrixResult run_matrix(const MatrixInputs& in, const MatrixConfig& cfg) {
  for (const auto& m : cfg.methods) check_method(m);
  const auto has = [&](const std::string& m) {
    return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
  };
  TrainConfig train = cfg.train;
  train.seed = cfg.seed;
  ClusterConfig cc = cfg.clustering;
  cc.seed = derive_seed(cfg.seed, 0xC1);
  if (has("slm_pn")) cc.k = cfg.pn.k;
  const Embedder embed = as_embedder(cc.embedder);

  MatrixResult result;
  auto clustered = cluster_windows(prepare_windows(in.generic, cfg.model), cc);
  const std::span<const Window> generic(clustered.windows);
  result.generic_hist = histogram_from_labels(clustered.clustering.labels, cc.k);
  const auto val = prepare_windows(in.spec_val, cfg.model);
  const auto test = prepare_windows(in.spec_test, cfg.model);
  const std::span<const Window> val_span(val), test_span(test);

  auto test_nll = [&](const SlmParams<T>& p) { return windows_loss(p, test_span).mean(); };

  // Pretraining, shared across specialization sizes.
  std::optional<TrainResult<SlmParams<T>>> slm, teacher;
  std::optional<TrainResult<PnParams<T>>> pn;
  std::optional<TrainResult<MixtureParams<T>>> mix;
  if (has("slm") || has("slm_d") || has("lora")) {
    slm = pretrain(build_slm<T>(cfg.model, derive_seed(cfg.seed, 1)), generic, train);
  }
  if (has("slm_d")) {
    teacher = pretrain(build_slm<T>(cfg.teacher, derive_seed(cfg.seed, 2)),
                       std::span<const Window>(prepare_windows(in.generic, cfg.teacher)), train);
  }
  if (has("slm_pn")) {
    pn = pretrain(build_pn<T>(cfg.model, cfg.pn, derive_seed(cfg.seed, 3)), generic, train);
  }
  if (has("slm_mix")) {
    mix = pretrain(build_mix<T>(cfg.model, cc.k, derive_seed(cfg.seed, 4)), generic, train);
  }

  for (std::size_t n : cfg.spec_sizes) {
    const Corpus spec_train = take_documents(in.spec_pool, n);
    auto spec_windows = prepare_windows(spec_train, cfg.model, &clustered.clustering, &embed);
    const std::span<const Window> tw(spec_windows);
    const auto spec_hist = histogram(tw, clustered.clustering, embed);
    result.spec_hist.emplace(n, spec_hist);

    auto add = [&](const std::string& method, double c_gen, double c_spec, std::optional<double> pre, double nll) {
      result.rows.push_back({method, n, c_gen, c_spec, pre, nll, std::exp(nll)});
    };

    for (const auto& method : cfg.methods) {
      if (method == "slm") {
        auto ft = finetune(slm->params, tw, val_span, cfg.finetune, train);
        add(method, slm->log.cost_units(), ft.log.cost_units(), test_nll(slm->params), test_nll(ft.params));
      } else if (method == "slm_nopt") {
        auto ft = finetune(build_slm<T>(cfg.model, derive_seed(cfg.seed, 1)), tw, val_span, cfg.finetune, train);
        add(method, 0.0, ft.log.cost_units(), std::nullopt, test_nll(ft.params));
      } else if (method == "slm_is") {
        auto is = pretrain_is<T>(cfg.model, generic, spec_hist, train);
        auto ft = finetune(is.params, tw, val_span, cfg.finetune, train);
        add(method, 0.0, is.log.cost_units() + ft.log.cost_units(), test_nll(is.params), test_nll(ft.params));
      } else if (method == "slm_pn") {
        SpecializeInputs si{tw, val_span, &spec_hist, cfg.finetune, train, cfg.threads};
        auto sp = specialize(pn->params, cfg.strategy, si);
        const auto chosen = project_expert(pn->params, sp.selection.chosen_index);
        add(method, pn->log.cost_units(), sp.log.cost_units() * sp.selection.cost_multiplier, test_nll(chosen),
            test_nll(sp.params));
      } else if (method == "slm_mix") {
        SpecializeInputs si{tw, val_span, &spec_hist, cfg.finetune, train, cfg.threads};
        auto sp = specialize(mix->params, cfg.strategy, si);
        add(method, mix->log.cost_units(), sp.log.cost_units() * sp.selection.cost_multiplier,
            test_nll(mix->params.experts[sp.selection.chosen_index]), test_nll(sp.params));
      } else if (method == "slm_d") {
        const auto teacher_tw = prepare_windows(spec_train, cfg.teacher);
        const auto teacher_val = prepare_windows(in.spec_val, cfg.teacher);
        auto tft = finetune(teacher->params, std::span<const Window>(teacher_tw), std::span<const Window>(teacher_val),
                            cfg.finetune, train);
        auto st = distill(slm->params, tft.params, tw, val_span, cfg.distill, cfg.finetune, train);
        add(method, slm->log.cost_units() + teacher->log.cost_units(), tft.log.cost_units() + st.log.cost_units(),
            test_nll(slm->params), test_nll(st.params));
      } else if (method == "lora") {
        auto ad = finetune_lora(slm->params, cfg.lora, tw, val_span, cfg.finetune, train);
        add(method, slm->log.cost_units(), ad.log.cost_units(), test_nll(slm->params),
            test_nll(merge_lora(slm->params, ad.params)));
      }
    }
  }
  return result;
}

// Method choice by number of target domains, stated as a recommendation rather than a measurement.
inline std::string recommendation(std::size_t n_domains) {
  if (n_domains <= 1) {
    return "one target domain: importance sampling (slm_is) is the recommended route when its "
           "specialization cost is affordable";
  }
  return "many target domains: a projected network (slm_pn) amortizes pretraining and specializes "
         "each domain cheaply";
}

inline std::string to_csv(const MatrixResult& r) {
  std::ostringstream s;
  s.precision(10);
  s << "method,spec_size,pretrain_cost,spec_cost,pretrained_nll,nll,ppl\n";
  for (const auto& row : r.rows) {
    s << row.method << "," << row.spec_size << "," << row.pretrain_cost << "," << row.spec_cost << ",";
    if (row.pretrained_nll) s << *row.pretrained_nll;
    s << "," << row.nll << "," << row.ppl << "\n";
  }
  return s.str();
}

// ---------------------------------------------------------------------------------------
// Synthetic corpus pair: a generic mixture over all domains and one target domain.

struct SyntheticPairConfig {
  SyntheticConfig sources;
  std::vector<double> generic_mixture = {0.4, 0.3, 0.2, 0.1};
  std::size_t generic_docs = 1200;
  std::size_t target_domain = 3;
  std::size_t spec_pool_docs = 200;
  std::size_t spec_val_docs = 20;
  std::size_t spec_test_docs = 40;
  std::uint64_t seed = 11;
};

inline Corpus corpus_from_texts(const std::vector<std::pair<std::size_t, std::string>>& docs,
                                const std::vector<MarkovSource>& sources, const std::string& prefix,
                                const Tokenizer& tok, CorpusRole role, Split split) {
  Corpus c;
  c.vocab_size = tok.vocab_size();
  c.role = role;
  c.split = split;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& name = sources[docs[i].first].name();
    c.documents.push_back(make_document(name + ":" + prefix + ":" + std::to_string(i), name, docs[i].second, tok));
  }
  return c;
}

inline MatrixInputs synthetic_pair(const SyntheticPairConfig& cfg, const Tokenizer& tok = Tokenizer::byte_level()) {
  const auto sources = make_synthetic_sources(cfg.sources);
  if (cfg.target_domain >= sources.size()) throw ConfigError("synthetic target_domain out of range");
  std::vector<double> target(sources.size(), 0.0);
  target[cfg.target_domain] = 1.0;
  MatrixInputs in;
  in.generic = corpus_from_texts(sample_mixture(sources, cfg.generic_mixture, cfg.generic_docs, derive_seed(cfg.seed, 0)),
                                 sources, "generic", tok, CorpusRole::generic, Split::train);
  in.spec_pool = corpus_from_texts(sample_mixture(sources, target, cfg.spec_pool_docs, derive_seed(cfg.seed, 1)),
                                   sources, "train", tok, CorpusRole::specialization, Split::train);
  in.spec_val = corpus_from_texts(sample_mixture(sources, target, cfg.spec_val_docs, derive_seed(cfg.seed, 2)),
                                  sources, "val", tok, CorpusRole::specialization, Split::heldout);
  in.spec_test = corpus_from_texts(sample_mixture(sources, target, cfg.spec_test_docs, derive_seed(cfg.seed, 3)),
                                   sources, "test", tok, CorpusRole::specialization, Split::heldout);
  return in;
}

}  // namespace sslm
