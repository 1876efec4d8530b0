// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"
#include "sslm/core/error.hpp"

namespace sslm {

enum class Activation { gelu, relu };

// Decoder-only transformer shape. Pre-norm residual blocks, learned absolute positions.
struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t model_dim = 64;
  std::size_t inner_dim = 256;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 257;
  std::size_t context_length = 64;
  bool tie_embeddings = true;
  Activation activation = Activation::gelu;

  std::size_t head_dim() const { return model_dim / num_heads; }

  void validate() const {
    if (num_layers == 0 || model_dim == 0 || inner_dim == 0 || num_heads == 0 || vocab_size == 0) {
      throw ConfigError("model dimensions must all be positive");
    }
    if (model_dim % num_heads != 0) {
      throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (context_length < 2) throw ConfigError("context_length must be >= 2");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Projected-network hyper-parameters: capacity multiplier h, expert count k and
// per-expert code size m.
struct PnConfig {
  std::size_t h = 4;
  std::size_t k = 4;
  std::size_t m = 4;

  void validate() const {
    if (h < 1 || k < 1 || m < 1) throw ConfigError("pn.h, pn.k and pn.m must be >= 1");
  }

  friend bool operator==(const PnConfig&, const PnConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_layers", c.num_layers},         {"model_dim", c.model_dim},
       {"inner_dim", c.inner_dim},           {"num_heads", c.num_heads},
       {"vocab_size", c.vocab_size},         {"context_length", c.context_length},
       {"tie_embeddings", c.tie_embeddings}, {"activation", c.activation == Activation::gelu ? "gelu" : "relu"}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.num_layers = j.value("num_layers", c.num_layers);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.inner_dim = j.value("inner_dim", 4 * c.model_dim);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.context_length = j.value("context_length", c.context_length);
  c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
  const std::string act = j.value("activation", std::string("gelu"));
  if (act == "gelu") {
    c.activation = Activation::gelu;
  } else if (act == "relu") {
    c.activation = Activation::relu;
  } else {
    throw ConfigError("activation: unknown value '" + act + "'");
  }
}

inline void to_json(nlohmann::json& j, const PnConfig& c) { j = {{"h", c.h}, {"k", c.k}, {"m", c.m}}; }

inline void from_json(const nlohmann::json& j, PnConfig& c) {
  c = PnConfig{};
  c.h = j.value("h", c.h);
  c.k = j.value("k", c.k);
  c.m = j.value("m", c.m);
}

}  // namespace sslm
