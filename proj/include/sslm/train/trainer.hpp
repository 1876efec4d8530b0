// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "sslm/clustering/histogram.hpp"
#include "sslm/core/error.hpp"
#include "sslm/corpus/corpus.hpp"
#include "sslm/eval/cost.hpp"
#include "sslm/eval/perplexity.hpp"
#include "sslm/model/batch.hpp"
#include "sslm/model/count.hpp"
#include "sslm/model/lora.hpp"
#include "sslm/model/loss.hpp"
#include "sslm/model/mixture.hpp"
#include "sslm/model/pn.hpp"
#include "sslm/model/slm.hpp"
#include "sslm/model/transformer.hpp"
#include "sslm/sampler/resample.hpp"
#include "sslm/train/config.hpp"
#include "sslm/train/early_stopping.hpp"
#include "sslm/train/log.hpp"
#include "sslm/train/optimizer.hpp"
#include "sslm/train/sampler.hpp"

namespace sslm {

template <typename P>
struct TrainResult {
  P params;
  TrainLog log;
};

template <typename P>
using CheckpointHook = std::function<void(std::size_t step, const P&)>;

// One optimizer bound to a parameter pack owned by the caller.
template <typename T, typename P>
class Trainer {
 public:
  Trainer(P& params, const TrainConfig& cfg, double lr, std::size_t warmup)
      : params_(params),
        grad_(params.zeros_like()),
        ptensors_(tensor_list<T>(params_)),
        gtensors_(tensor_list<T>(grad_)),
        opt_(ptensors_, AdamConfig{cfg.beta1, cfg.beta2, cfg.epsilon}),
        clip_(cfg.clip_norm),
        lr_(lr),
        warmup_(warmup) {}

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // fn(params, grad) accumulates the gradient of the mean loss and returns the loss sum.
  template <typename GradFn>
  double step(std::uint64_t batch_hash, GradFn&& fn) {
    ++step_;
    for (auto* g : gtensors_) g->zero();
    const LossSum loss = fn(static_cast<const P&>(params_), grad_);
    const double mean = loss.mean();
    if (!std::isfinite(mean)) throw TrainingDiverged(step_, batch_hash);
    const double norm = clip_global_norm(gtensors_, clip_);
    if (!std::isfinite(norm)) throw TrainingDiverged(step_, batch_hash);
    last_lr_ = learning_rate_at(step_, lr_, warmup_);
    opt_.step(ptensors_, gtensors_, last_lr_);
    return mean;
  }

  std::size_t steps() const { return step_; }
  double last_lr() const { return last_lr_; }
  const P& grad() const { return grad_; }

 private:
  P& params_;
  P grad_;
  std::vector<Tensor<T>*> ptensors_, gtensors_;
  Adam<T> opt_;
  double clip_;
  double lr_;
  std::size_t warmup_;
  std::size_t step_ = 0;
  double last_lr_ = 0.0;
};

struct LoopSpec {
  TrainConfig cfg;
  double lr = 1e-4;
  std::size_t warmup = 0;
  std::size_t max_steps = 0;
  std::size_t eval_every = 0;          // 0: no validation passes
  std::optional<std::size_t> patience;  // set: early stopping on validation loss
  CostCategory category = CostCategory::generic;
};

// Generic loop. With early stopping the parameters with the lowest validation loss are
// returned; the evaluation before the first step is a candidate.
template <typename T, typename P, typename BatchFn, typename GradFn>
TrainResult<P> run_loop(P params, const LoopSpec& spec, BatchFn&& next_batch, GradFn&& grad_fn,
                        const std::function<double(const P&)>& eval, const std::function<double(const Batch&)>& step_cost,
                        const CheckpointHook<P>& on_checkpoint = {}) {
  TrainResult<P> out;
  out.log.category = spec.category;
  const bool validating = spec.eval_every > 0 && static_cast<bool>(eval);
  std::optional<EarlyStopping> stopper;
  if (spec.patience) {
    if (!eval) throw ConfigError("early stopping needs a validation set");
    stopper.emplace(*spec.patience);
  }
  std::optional<P> best;
  double cost = 0.0;

  auto validate = [&](std::size_t step, LogRow& row) {
    const double v = eval(params);
    row.val_loss = v;
    if (stopper && stopper->observe(v)) {
      best = params;
      out.log.best_step = step;
      out.log.best_val_loss = v;
    }
  };

  if (validating || stopper) {
    LogRow row{0, std::nullopt, std::nullopt, 0.0, 0.0};
    validate(0, row);
    out.log.rows.push_back(row);
  }

  Trainer<T, P> trainer(params, spec.cfg, spec.lr, spec.warmup);
  for (std::size_t step = 1; step <= spec.max_steps; ++step) {
    const Batch batch = next_batch(step);
    const double loss = trainer.step(batch.hash(), [&](const P& p, P& g) { return grad_fn(p, batch, g); });
    cost += step_cost(batch);
    LogRow row{step, loss, std::nullopt, trainer.last_lr(), cost};
    const bool eval_now = (validating || stopper) && (step % std::max<std::size_t>(spec.eval_every, 1) == 0 ||
                                                      step == spec.max_steps);
    if (eval_now) validate(step, row);
    out.log.rows.push_back(row);
    if (on_checkpoint && spec.cfg.checkpoint_every > 0 && step % spec.cfg.checkpoint_every == 0) {
      on_checkpoint(step, params);
    }
    out.log.steps = step;
    if (eval_now && stopper && stopper->should_stop()) {
      out.log.stopped_early = true;
      break;
    }
  }
  out.params = best ? std::move(*best) : std::move(params);
  return out;
}

// ---------------------------------------------------------------------------------------
// Per-model gradient functions: gradient of the mean next-token loss over the batch.

template <typename T>
LossSum slm_grad(const SlmParams<T>& p, const Batch& b, SlmParams<T>& g) {
  const auto w = own_weights(p);
  ForwardCache<T> cache;
  forward<T>(p, w, b, cache);
  RowMatrix<T> dlogits;
  const T scale = T(1) / static_cast<T>(std::max<std::size_t>(b.valid_targets(), 1));
  const LossSum loss = cross_entropy<T>(cache.logits, b.targets, &dlogits, scale);
  backward<T>(p, w, cache, dlogits, g, own_weight_grads(g));
  return loss;
}

template <typename T>
LossSum pn_grad(const PnParams<T>& p, const Batch& b, PnParams<T>& g) {
  const T scale = T(1) / static_cast<T>(std::max<std::size_t>(b.valid_targets(), 1));
  return pn_loss_and_grad(p, b, g, [&](const Batch& sub, const RowMatrix<T>& logits, RowMatrix<T>& d) {
    return cross_entropy<T>(logits, sub.targets, &d, scale);
  });
}

template <typename T>
LossSum distill_grad(const SlmParams<T>& p, const SlmParams<T>& teacher, const DistillConfig& dcfg, const Batch& b,
                     SlmParams<T>& g) {
  const auto w = own_weights(p);
  ForwardCache<T> cache;
  forward<T>(p, w, b, cache);
  RowMatrix<T> dlogits;
  const T scale = T(1) / static_cast<T>(std::max<std::size_t>(b.valid_targets(), 1));
  LossSum loss;
  if (dcfg.mix_weight == 0.0) {
    loss = cross_entropy<T>(cache.logits, b.targets, &dlogits, scale);
  } else {
    const RowMatrix<T> teacher_logits = forward<T>(teacher, b);
    loss = distill_loss<T>(cache.logits, teacher_logits, b.targets, dcfg, &dlogits, scale);
  }
  backward<T>(p, w, cache, dlogits, g, own_weight_grads(g));
  return loss;
}

template <typename T>
LossSum lora_grad(const SlmParams<T>& base, const LoraAdapters<T>& ad, const Batch& b, LoraAdapters<T>& g) {
  const T scale = T(1) / static_cast<T>(std::max<std::size_t>(b.valid_targets(), 1));
  return lora_loss_and_grad(base, ad, b, g, [&](const Batch& sub, const RowMatrix<T>& logits, RowMatrix<T>& d) {
    return cross_entropy<T>(logits, sub.targets, &d, scale);
  });
}

// ---------------------------------------------------------------------------------------
// Window preparation.

// Windows sized for the model; clusters assigned when a clustering is given.
inline std::vector<Window> prepare_windows(const Corpus& corpus, const ModelConfig& c,
                                           const Clustering* clustering = nullptr, const Embedder* embed = nullptr) {
  auto windows = window_corpus(corpus, window_length(c));
  if (clustering) {
    if (!embed) throw ConfigError("assigning clusters needs the clustering's embedder");
    assign_windows(std::span<Window>(windows), *clustering, *embed);
  }
  return windows;
}

namespace detail {

inline Batch batch_from(std::span<const Window> windows, std::span<const std::size_t> idx, bool with_clusters) {
  std::vector<const Window*> ptrs;
  ptrs.reserve(idx.size());
  for (auto i : idx) ptrs.push_back(&windows[i]);
  return make_batch(std::span<const Window* const>(ptrs), 0, with_clusters);
}

inline LoopSpec pretrain_spec(const TrainConfig& cfg, CostCategory category = CostCategory::generic) {
  cfg.validate();
  LoopSpec s;
  s.cfg = cfg;
  s.lr = cfg.learning_rate;
  s.warmup = cfg.warmup_steps;
  s.max_steps = cfg.max_steps;
  s.category = category;
  return s;
}

inline LoopSpec finetune_spec(const TrainConfig& base, const FinetuneConfig& ft) {
  ft.validate();
  LoopSpec s;
  s.cfg = base;
  s.lr = base.learning_rate / ft.lr_divisor;
  s.warmup = ft.warmup_steps;
  s.max_steps = ft.max_steps;
  s.eval_every = ft.eval_every;
  s.patience = ft.patience;
  s.category = CostCategory::specialization;
  return s;
}

inline void require_disjoint(std::span<const Window> train, std::span<const Window> val) {
  if (val.empty()) throw ConfigError("validation set is empty");
  if (train.empty()) throw EmptyCorpus("fine-tuning set is empty");
  std::unordered_set<std::string> train_docs;
  for (const auto& w : train) train_docs.insert(w.doc_id);
  for (const auto& w : val) {
    if (train_docs.count(w.doc_id)) throw ConfigError("document '" + w.doc_id + "' is in both train and validation");
  }
}

inline std::size_t distinct_clusters(const Batch& b) {
  return std::set<std::size_t>(b.clusters.begin(), b.clusters.end()).size();
}

}  // namespace detail

struct PretrainOptions {
  std::span<const Window> validation;  // optional monitoring set
  std::size_t eval_every = 0;
};

// ---------------------------------------------------------------------------------------
// Pretraining.

template <typename T>
TrainResult<SlmParams<T>> pretrain(SlmParams<T> params, std::span<const Window> windows, const TrainConfig& cfg,
                                   const PretrainOptions& opts = {}, const CheckpointHook<SlmParams<T>>& hook = {},
                                   CostCategory category = CostCategory::generic) {
  auto spec = detail::pretrain_spec(cfg, category);
  spec.eval_every = opts.validation.empty() ? 0 : opts.eval_every;
  EpochSampler sampler(windows.size(), derive_seed(cfg.seed, 0x5A3));
  const double unit = cost_units(1, cfg.batch_size, params.config.context_length, slm_param_count(params.config));
  std::function<double(const SlmParams<T>&)> eval;
  if (!opts.validation.empty()) eval = [&](const SlmParams<T>& p) { return windows_loss(p, opts.validation).mean(); };
  return run_loop<T>(
      std::move(params), spec,
      [&](std::size_t) {
        const auto idx = sampler.next(cfg.batch_size);
        return detail::batch_from(windows, idx, false);
      },
      [](const SlmParams<T>& p, const Batch& b, SlmParams<T>& g) { return slm_grad(p, b, g); }, eval,
      [unit](const Batch&) { return unit; }, hook);
}

// Joint training of all experts; each window is routed to its cluster's expert.
template <typename T>
TrainResult<PnParams<T>> pretrain(PnParams<T> params, std::span<const Window> windows, const TrainConfig& cfg,
                                  const PretrainOptions& opts = {}, const CheckpointHook<PnParams<T>>& hook = {}) {
  for (const auto& w : windows) {
    if (!w.cluster) throw ConfigError("projected-network pretraining needs clustered windows");
  }
  auto spec = detail::pretrain_spec(cfg);
  spec.eval_every = opts.validation.empty() ? 0 : opts.eval_every;
  EpochSampler sampler(windows.size(), derive_seed(cfg.seed, 0x5A3));
  const ModelConfig mc = params.config;
  const PnConfig pc = params.pn;
  std::function<double(const PnParams<T>&)> eval;
  if (!opts.validation.empty()) eval = [&](const PnParams<T>& p) { return windows_loss(p, opts.validation).mean(); };
  return run_loop<T>(
      std::move(params), spec,
      [&](std::size_t) {
        const auto idx = sampler.next(cfg.batch_size);
        return detail::batch_from(windows, idx, true);
      },
      [](const PnParams<T>& p, const Batch& b, PnParams<T>& g) { return pn_grad(p, b, g); }, eval,
      [&](const Batch& b) { return pn_step_units(mc, pc, cfg.batch_size, detail::distinct_clusters(b)); }, hook);
}

enum class MixtureMode { round_robin, independent };

// Expert i trains cfg.max_steps steps on the windows of cluster i, with its own optimizer
// and window stream. Round-robin interleaves the experts step by step; independent runs
// them one after another. Experts are independent, so both yield identical parameters.
// An expert whose cluster has no windows stays at its initialization.
template <typename T>
TrainResult<MixtureParams<T>> pretrain(MixtureParams<T> params, std::span<const Window> windows, const TrainConfig& cfg,
                                       MixtureMode mode = MixtureMode::round_robin) {
  params.validate();
  auto spec = detail::pretrain_spec(cfg);
  const std::size_t k = params.k();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!windows[i].cluster) throw ConfigError("mixture pretraining needs clustered windows");
    if (*windows[i].cluster >= k) throw IndexError("cluster id outside the expert pool");
    members[*windows[i].cluster].push_back(i);
  }
  const double unit = cost_units(1, cfg.batch_size, params.config().context_length, slm_param_count(params.config()));

  std::vector<std::unique_ptr<Trainer<T, SlmParams<T>>>> trainers;
  std::vector<std::unique_ptr<EpochSampler>> samplers;
  for (std::size_t e = 0; e < k; ++e) {
    trainers.push_back(std::make_unique<Trainer<T, SlmParams<T>>>(params.experts[e], cfg, spec.lr, spec.warmup));
    samplers.push_back(members[e].empty() ? nullptr
                                          : std::make_unique<EpochSampler>(members[e].size(), derive_seed(cfg.seed, e)));
  }

  TrainLog log;
  double cost = 0.0;
  std::size_t global = 0;
  auto one_step = [&](std::size_t e) {
    const auto local = samplers[e]->next(cfg.batch_size);
    std::vector<std::size_t> idx;
    idx.reserve(local.size());
    for (auto j : local) idx.push_back(members[e][j]);
    const Batch b = detail::batch_from(windows, idx, false);
    const double loss = trainers[e]->step(
        b.hash(), [&](const SlmParams<T>& p, SlmParams<T>& g) { return slm_grad(p, b, g); });
    cost += unit;
    log.rows.push_back({++global, loss, std::nullopt, trainers[e]->last_lr(), cost});
  };
  if (mode == MixtureMode::round_robin) {
    for (std::size_t s = 0; s < cfg.max_steps; ++s) {
      for (std::size_t e = 0; e < k; ++e) {
        if (samplers[e]) one_step(e);
      }
    }
  } else {
    for (std::size_t e = 0; e < k; ++e) {
      if (!samplers[e]) continue;
      for (std::size_t s = 0; s < cfg.max_steps; ++s) one_step(e);
    }
  }
  log.steps = global;
  trainers.clear();
  return {std::move(params), std::move(log)};
}

// Importance-sampled pretraining: the generic windows are resampled to the specialization
// cluster histogram, then a fresh SLM trains on them. The whole cost is specialization
// cost because the run can only start once the target domain is known.
template <typename T>
TrainResult<SlmParams<T>> pretrain_is(const ModelConfig& config, std::span<const Window> generic,
                                      const ClusterHistogram& spec_hist, const TrainConfig& cfg,
                                      double laplace_alpha = 0.0) {
  cfg.validate();
  std::vector<std::size_t> labels;
  labels.reserve(generic.size());
  for (const auto& w : generic) {
    if (!w.cluster) throw ConfigError("importance sampling needs clustered generic windows");
    labels.push_back(*w.cluster);
  }
  const auto gen_hist = histogram_from_labels(labels, spec_hist.k());
  const auto plan = make_plan(spec_hist, std::max<std::size_t>(cfg.max_steps * cfg.batch_size, 1),
                              derive_seed(cfg.seed, 0x15), &gen_hist, laplace_alpha);
  const auto set = resample(generic, plan);
  return pretrain(build_slm<T>(config, cfg.seed), std::span<const Window>(set.windows), cfg, {}, {},
                  CostCategory::specialization);
}

// ---------------------------------------------------------------------------------------
// Specialization-time training.

template <typename T>
TrainResult<SlmParams<T>> finetune(SlmParams<T> params, std::span<const Window> train, std::span<const Window> val,
                                   const FinetuneConfig& ft, const TrainConfig& base) {
  detail::require_disjoint(train, val);
  const auto spec = detail::finetune_spec(base, ft);
  EpochSampler sampler(train.size(), derive_seed(base.seed, 0xF7));
  const double unit = cost_units(1, base.batch_size, params.config.context_length, slm_param_count(params.config));
  return run_loop<T>(
      std::move(params), spec,
      [&](std::size_t) { return detail::batch_from(train, sampler.next(base.batch_size), false); },
      [](const SlmParams<T>& p, const Batch& b, SlmParams<T>& g) { return slm_grad(p, b, g); },
      std::function<double(const SlmParams<T>&)>([&](const SlmParams<T>& p) { return windows_loss(p, val).mean(); }),
      [unit](const Batch&) { return unit; });
}

template <typename T>
TrainResult<SlmParams<T>> finetune(SlmParams<T> params, const Corpus& train, const Corpus& val,
                                   const FinetuneConfig& ft, const TrainConfig& base) {
  const auto tw = prepare_windows(train, params.config);
  const auto vw = prepare_windows(val, params.config);
  return finetune(std::move(params), std::span<const Window>(tw), std::span<const Window>(vw), ft, base);
}

// Student trained on (1 - lambda) * data loss + lambda * teacher loss; early stopping
// watches the plain data NLL on the validation set.
template <typename T>
TrainResult<SlmParams<T>> distill(SlmParams<T> student, const SlmParams<T>& teacher, std::span<const Window> train,
                                  std::span<const Window> val, const DistillConfig& dcfg, const FinetuneConfig& ft,
                                  const TrainConfig& base) {
  dcfg.validate();
  if (student.config.vocab_size != teacher.config.vocab_size) {
    throw ConfigError("teacher and student vocabularies differ");
  }
  if (teacher.config.context_length < student.config.context_length) {
    throw ConfigError("teacher context is shorter than the student's");
  }
  detail::require_disjoint(train, val);
  const auto spec = detail::finetune_spec(base, ft);
  EpochSampler sampler(train.size(), derive_seed(base.seed, 0xF7));
  const double unit =
      cost_units(1, base.batch_size, student.config.context_length,
                 slm_param_count(student.config) + (dcfg.mix_weight == 0.0 ? 0 : slm_param_count(teacher.config)));
  return run_loop<T>(
      std::move(student), spec,
      [&](std::size_t) { return detail::batch_from(train, sampler.next(base.batch_size), false); },
      [&](const SlmParams<T>& p, const Batch& b, SlmParams<T>& g) { return distill_grad(p, teacher, dcfg, b, g); },
      std::function<double(const SlmParams<T>&)>([&](const SlmParams<T>& p) { return windows_loss(p, val).mean(); }),
      [unit](const Batch&) { return unit; });
}

// Adapters only; the base stays frozen. Returns the adapters with the best validation loss.
template <typename T>
TrainResult<LoraAdapters<T>> finetune_lora(const SlmParams<T>& base_params, const LoraConfig& lcfg,
                                           std::span<const Window> train, std::span<const Window> val,
                                           const FinetuneConfig& ft, const TrainConfig& base) {
  detail::require_disjoint(train, val);
  const auto spec = detail::finetune_spec(base, ft);
  EpochSampler sampler(train.size(), derive_seed(base.seed, 0xF7));
  const double unit =
      cost_units(1, base.batch_size, base_params.config.context_length, slm_param_count(base_params.config));
  return run_loop<T>(
      build_lora(base_params, lcfg, derive_seed(base.seed, 0x10A)), spec,
      [&](std::size_t) { return detail::batch_from(train, sampler.next(base.batch_size), false); },
      [&](const LoraAdapters<T>& a, const Batch& b, LoraAdapters<T>& g) { return lora_grad(base_params, a, b, g); },
      std::function<double(const LoraAdapters<T>&)>(
          [&](const LoraAdapters<T>& a) { return windows_loss(merge_lora(base_params, a), val).mean(); }),
      [unit](const Batch&) { return unit; });
}

}  // namespace sslm
