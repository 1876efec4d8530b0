// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "sslm/core/error.hpp"

namespace sslm {

struct TrainConfig {
  double learning_rate = 1e-4;
  double clip_norm = 5.0;
  std::size_t warmup_steps = 1000;
  std::size_t batch_size = 16;
  std::size_t max_steps = 10000;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t checkpoint_every = 0;  // 0 disables intermediate checkpoints

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be > 0");
    if (batch_size == 0) throw ConfigError("train.batch_size must be > 0");
    if (warmup_steps > max_steps) throw ConfigError("train.warmup_steps must be <= train.max_steps");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train.beta1 and train.beta2 must be in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  }
};

struct FinetuneConfig {
  double lr_divisor = 1.0;
  std::size_t patience = 3;
  std::size_t eval_every = 50;
  std::size_t max_steps = 2000;
  std::size_t warmup_steps = 0;

  void validate() const {
    if (!(lr_divisor >= 1.0)) throw ConfigError("finetune.lr_divisor must be >= 1");
    if (patience < 1) throw ConfigError("finetune.patience must be >= 1");
    if (eval_every < 1) throw ConfigError("finetune.eval_every must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm},   {"warmup_steps", c.warmup_steps},
       {"batch_size", c.batch_size},       {"max_steps", c.max_steps},   {"seed", c.seed},
       {"beta1", c.beta1},                 {"beta2", c.beta2},           {"epsilon", c.epsilon},
       {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

inline void to_json(nlohmann::json& j, const FinetuneConfig& c) {
  j = {{"lr_divisor", c.lr_divisor}, {"patience", c.patience},     {"eval_every", c.eval_every},
       {"max_steps", c.max_steps},   {"warmup_steps", c.warmup_steps}};
}

inline void from_json(const nlohmann::json& j, FinetuneConfig& c) {
  c = FinetuneConfig{};
  c.lr_divisor = j.value("lr_divisor", c.lr_divisor);
  c.patience = j.value("patience", c.patience);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
}

// Linear warmup to the base rate, then constant. Steps count from 1.
inline double learning_rate_at(std::size_t step, double lr, std::size_t warmup) {
  if (warmup == 0 || step >= warmup) return lr;
  return lr * static_cast<double>(step) / static_cast<double>(warmup);
}

}  // namespace sslm
