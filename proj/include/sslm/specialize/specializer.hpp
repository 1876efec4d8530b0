// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/core/error.hpp"
#include "sslm/core/parallel.hpp"
#include "sslm/eval/perplexity.hpp"
#include "sslm/model/mixture.hpp"
#include "sslm/model/pn.hpp"
#include "sslm/train/trainer.hpp"

namespace sslm {

enum class SelectionStrategy { most_frequent_cluster, best_pretrained, best_finetuned };

inline std::string to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::most_frequent_cluster: return "most_frequent_cluster";
    case SelectionStrategy::best_pretrained: return "best_pretrained";
    case SelectionStrategy::best_finetuned: return "best_finetuned";
  }
  return "most_frequent_cluster";
}

inline SelectionStrategy parse_strategy(const std::string& s) {
  if (s == "most_frequent_cluster" || s == "most_frequent") return SelectionStrategy::most_frequent_cluster;
  if (s == "best_pretrained") return SelectionStrategy::best_pretrained;
  if (s == "best_finetuned") return SelectionStrategy::best_finetuned;
  throw ConfigError("strategy: unknown value '" + s + "'");
}

struct ExpertSelection {
  SelectionStrategy strategy = SelectionStrategy::most_frequent_cluster;
  std::size_t chosen_index = 0;
  std::vector<double> scores;  // frequencies, or per-expert validation NLL
  double cost_multiplier = 1.0;
  bool uninformative = false;  // all scores tie

  nlohmann::json to_json() const {
    return {{"strategy", to_string(strategy)},
            {"chosen_index", chosen_index},
            {"scores", scores},
            {"cost_multiplier", cost_multiplier},
            {"uninformative", uninformative}};
  }
};

// Argmax of the histogram; ties go to the lowest index.
inline ExpertSelection select_most_frequent(const ClusterHistogram& spec_hist) {
  if (spec_hist.k() == 0) throw ConfigError("empty histogram");
  ExpertSelection s;
  s.strategy = SelectionStrategy::most_frequent_cluster;
  s.scores = spec_hist.frequencies;
  for (std::size_t c = 1; c < s.scores.size(); ++c) {
    if (s.scores[c] > s.scores[s.chosen_index]) s.chosen_index = c;
  }
  s.uninformative = std::all_of(s.scores.begin(), s.scores.end(), [&](double f) { return f == s.scores.front(); });
  return s;
}

namespace detail {

inline std::size_t argmin(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

}  // namespace detail

// Expert with the lowest validation NLL before any fine-tuning.
template <typename T>
ExpertSelection select_best_pretrained(std::span<const SlmParams<T>> experts, std::span<const Window> val,
                                       std::size_t threads = 1) {
  if (experts.empty()) throw ConfigError("no experts to select from");
  if (val.empty()) throw ConfigError("validation set is empty");
  ExpertSelection s;
  s.strategy = SelectionStrategy::best_pretrained;
  s.scores.assign(experts.size(), 0.0);
  parallel_for(experts.size(), threads, [&](std::size_t i) { s.scores[i] = windows_loss(experts[i], val).mean(); });
  s.chosen_index = detail::argmin(s.scores);
  return s;
}

template <typename T>
struct FinetunedSelection {
  ExpertSelection selection;
  TrainResult<SlmParams<T>> chosen;
  std::vector<TrainLog> logs;  // one per expert
  double cost_units = 0.0;     // sum over every expert's fine-tune
};

// Fine-tunes every expert and keeps the one with the lowest post-fine-tuning validation NLL.
template <typename T>
FinetunedSelection<T> select_best_finetuned(std::span<const SlmParams<T>> experts, std::span<const Window> train,
                                            std::span<const Window> val, const FinetuneConfig& ft,
                                            const TrainConfig& base, std::size_t threads = 1) {
  if (experts.empty()) throw ConfigError("no experts to select from");
  std::vector<TrainResult<SlmParams<T>>> results(experts.size());
  parallel_for(experts.size(), threads,
               [&](std::size_t i) { results[i] = finetune(experts[i], train, val, ft, base); });
  FinetunedSelection<T> out;
  out.selection.strategy = SelectionStrategy::best_finetuned;
  out.selection.cost_multiplier = static_cast<double>(experts.size());
  for (auto& r : results) {
    out.selection.scores.push_back(windows_loss(r.params, val).mean());
    out.cost_units += r.log.cost_units();
    out.logs.push_back(r.log);
  }
  out.selection.chosen_index = detail::argmin(out.selection.scores);
  out.chosen = std::move(results[out.selection.chosen_index]);
  return out;
}

template <typename T>
std::vector<SlmParams<T>> materialize_all(const PnParams<T>& pn) {
  std::vector<SlmParams<T>> out;
  out.reserve(pn.pn.k);
  for (std::size_t i = 0; i < pn.pn.k; ++i) out.push_back(project_expert(pn, i));
  return out;
}

template <typename T>
struct SpecializeResult {
  SlmParams<T> params;
  ExpertSelection selection;
  TrainLog log;
  nlohmann::json report;
};

struct SpecializeInputs {
  std::span<const Window> train;
  std::span<const Window> val;
  const ClusterHistogram* spec_hist = nullptr;  // required by most_frequent_cluster
  FinetuneConfig finetune;
  TrainConfig base;
  std::size_t threads = 1;
};

// Picks one expert, fine-tunes it and returns a plain SLM. Takes no generic data.
template <typename T>
SpecializeResult<T> specialize_experts(std::span<const SlmParams<T>> experts, SelectionStrategy strategy,
                                       const SpecializeInputs& in) {
  if (experts.empty()) throw ConfigError("no experts to select from");
  SpecializeResult<T> out;
  if (strategy == SelectionStrategy::best_finetuned) {
    auto r = select_best_finetuned(experts, in.train, in.val, in.finetune, in.base, in.threads);
    out.params = std::move(r.chosen.params);
    out.selection = r.selection;
    out.log = std::move(r.chosen.log);
    out.report["fine_tune_cost_units_all_experts"] = r.cost_units;
  } else {
    if (strategy == SelectionStrategy::most_frequent_cluster) {
      if (!in.spec_hist) throw ConfigError("most_frequent_cluster needs the specialization histogram");
      if (in.spec_hist->k() != experts.size()) {
        throw ConfigError("histogram k (" + std::to_string(in.spec_hist->k()) + ") differs from expert count (" +
                          std::to_string(experts.size()) + ")");
      }
      out.selection = select_most_frequent(*in.spec_hist);
    } else {
      out.selection = select_best_pretrained(experts, in.val, in.threads);
    }
    auto r = finetune(experts[out.selection.chosen_index], in.train, in.val, in.finetune, in.base);
    out.params = std::move(r.params);
    out.log = std::move(r.log);
  }
  out.report["selection"] = out.selection.to_json();
  out.report["fine_tune"] = summary_json(out.log);
  out.report["parameters"] = out.params.numel();
  return out;
}

template <typename T>
SpecializeResult<T> specialize(const PnParams<T>& pn, SelectionStrategy strategy, const SpecializeInputs& in) {
  const auto experts = materialize_all(pn);
  auto out = specialize_experts(std::span<const SlmParams<T>>(experts), strategy, in);
  out.report["artifact"] = "pn";
  return out;
}

template <typename T>
SpecializeResult<T> specialize(const MixtureParams<T>& mix, SelectionStrategy strategy, const SpecializeInputs& in) {
  mix.validate();
  auto out = specialize_experts(std::span<const SlmParams<T>>(mix.experts), strategy, in);
  out.report["artifact"] = "mixture";
  return out;
}

}  // namespace sslm
