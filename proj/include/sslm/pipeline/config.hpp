// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pipeline configuration file. Every block is checked against a fixed schema before it is
// converted, so a bad value is reported with its full field path (e.g. train.batch_size).

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/core/error.hpp"
#include "sslm/corpus/corpus.hpp"
#include "sslm/eval/cost.hpp"
#include "sslm/model/config.hpp"
#include "sslm/model/lora.hpp"
#include "sslm/model/loss.hpp"
#include "sslm/pipeline/matrix.hpp"
#include "sslm/specialize/specializer.hpp"
#include "sslm/train/config.hpp"
#include "sslm/train/trainer.hpp"

namespace sslm {

struct CorpusSource {
  std::vector<std::filesystem::path> paths;
  std::string domain;
  DocumentUnit unit = DocumentUnit::line;
};

struct SpecSplitConfig {
  std::size_t val_docs = 20;
  std::size_t test_docs = 40;
  std::size_t train_docs = 20;
};

struct ResampleConfig {
  std::size_t target_size = 0;  // 0: train.max_steps * train.batch_size
  double laplace_alpha = 0.0;
};

struct PipelineConfig {
  std::string method = "slm";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path out = "sslm_out";
  TokenizerMode tokenizer = TokenizerMode::byte;
  std::size_t max_vocab = 8000;
  std::optional<CorpusSource> generic;
  std::optional<CorpusSource> specialization;
  std::optional<SyntheticPairConfig> synthetic;
  SpecSplitConfig split;
  ModelConfig model;
  ModelConfig teacher_model;
  std::optional<PnConfig> pn;
  TrainConfig train;
  FinetuneConfig finetune;
  DistillConfig distill;
  LoraConfig lora;
  ClusterConfig clustering;
  ResampleConfig resample;
  SelectionStrategy strategy = SelectionStrategy::most_frequent_cluster;
  MixtureMode mixture_mode = MixtureMode::round_robin;
  std::vector<std::string> compare_methods = {"slm", "slm_nopt", "slm_is", "slm_pn"};
  std::vector<std::size_t> compare_spec_sizes = {20};
  std::map<std::string, CostModel> cost_models;  // explicit overrides for the cost stage
  nlohmann::json raw;                            // snapshot for provenance
};

namespace detail {

enum class Kind { uint, number, boolean, string, array, object };

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::uint: return "a non-negative integer";
    case Kind::number: return "a number";
    case Kind::boolean: return "a boolean";
    case Kind::string: return "a string";
    case Kind::array: return "an array";
    case Kind::object: return "an object";
  }
  return "?";
}

inline bool is_kind(const nlohmann::json& v, Kind k) {
  switch (k) {
    case Kind::uint: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case Kind::number: return v.is_number();
    case Kind::boolean: return v.is_boolean();
    case Kind::string: return v.is_string();
    case Kind::array: return v.is_array();
    case Kind::object: return v.is_object();
  }
  return false;
}

inline std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline void check_fields(const nlohmann::json& j, const std::string& path, const std::map<std::string, Kind>& schema) {
  if (!j.is_object()) throw ConfigError((path.empty() ? "<root>" : path) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError(join_path(path, key) + ": unknown field");
    if (!is_kind(value, it->second)) {
      throw ConfigError(join_path(path, key) + ": expected " + kind_name(it->second));
    }
  }
}

// Runs a block's own validate(), prefixing the block path onto its message.
template <typename F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    const std::string prefix = "config error: ";
    throw ConfigError(path + ": " + (msg.rfind(prefix, 0) == 0 ? msg.substr(prefix.size()) : msg));
  }
}

inline CorpusSource parse_source(const nlohmann::json& j, const std::string& path) {
  check_fields(j, path, {{"paths", Kind::array}, {"domain", Kind::string}, {"unit", Kind::string}});
  CorpusSource s;
  if (!j.contains("paths") || j.at("paths").empty()) throw ConfigError(path + ".paths: at least one path is required");
  for (std::size_t i = 0; i < j.at("paths").size(); ++i) {
    const auto& p = j.at("paths")[i];
    if (!p.is_string()) throw ConfigError(path + ".paths[" + std::to_string(i) + "]: expected a string");
    s.paths.emplace_back(p.get<std::string>());
  }
  s.domain = j.value("domain", std::string(path));
  const std::string unit = j.value("unit", std::string("line"));
  if (unit == "line") {
    s.unit = DocumentUnit::line;
  } else if (unit == "file") {
    s.unit = DocumentUnit::file;
  } else {
    throw ConfigError(path + ".unit: expected 'line' or 'file'");
  }
  return s;
}

inline const std::map<std::string, Kind> kModelSchema = {
    {"num_layers", Kind::uint}, {"model_dim", Kind::uint},      {"inner_dim", Kind::uint},
    {"num_heads", Kind::uint},  {"vocab_size", Kind::uint},     {"context_length", Kind::uint},
    {"tie_embeddings", Kind::boolean}, {"activation", Kind::string}};

inline ModelConfig parse_model(const nlohmann::json& j, const std::string& path, std::size_t vocab) {
  check_fields(j, path, kModelSchema);
  ModelConfig c;
  with_path(path, [&] {
    c = j.get<ModelConfig>();
    if (!j.contains("vocab_size")) c.vocab_size = vocab;
    c.validate();
  });
  return c;
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  using detail::Kind;
  detail::check_fields(j, "", {{"method", Kind::string},        {"seed", Kind::uint},
                               {"threads", Kind::uint},         {"out", Kind::string},
                               {"tokenizer", Kind::object},     {"generic", Kind::object},
                               {"specialization", Kind::object}, {"synthetic", Kind::object},
                               {"split", Kind::object},         {"model", Kind::object},
                               {"teacher_model", Kind::object}, {"pn", Kind::object},
                               {"train", Kind::object},         {"finetune", Kind::object},
                               {"distill", Kind::object},       {"lora", Kind::object},
                               {"clustering", Kind::object},    {"resample", Kind::object},
                               {"strategy", Kind::string},      {"mixture_mode", Kind::string},
                               {"compare", Kind::object},       {"cost_models", Kind::object}});
  PipelineConfig c;
  c.raw = j;
  c.method = j.value("method", c.method);
  check_method(c.method);
  c.seed = j.value("seed", c.seed);
  c.threads = std::max<std::size_t>(1, j.value("threads", c.threads));
  c.out = j.value("out", c.out.string());

  if (j.contains("tokenizer")) {
    const auto& t = j.at("tokenizer");
    detail::check_fields(t, "tokenizer", {{"mode", Kind::string}, {"max_vocab", Kind::uint}});
    const std::string mode = t.value("mode", std::string("byte"));
    if (mode == "byte") {
      c.tokenizer = TokenizerMode::byte;
    } else if (mode == "word") {
      c.tokenizer = TokenizerMode::word;
    } else {
      throw ConfigError("tokenizer.mode: expected 'byte' or 'word'");
    }
    c.max_vocab = t.value("max_vocab", c.max_vocab);
  }
  if (j.contains("generic")) c.generic = detail::parse_source(j.at("generic"), "generic");
  if (j.contains("specialization")) c.specialization = detail::parse_source(j.at("specialization"), "specialization");
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    detail::check_fields(s, "synthetic",
                         {{"num_domains", Kind::uint}, {"alphabet_size", Kind::uint}, {"lexicon_size", Kind::uint},
                          {"successors", Kind::uint}, {"min_words", Kind::uint}, {"max_words", Kind::uint},
                          {"generic_mixture", Kind::array}, {"generic_docs", Kind::uint},
                          {"target_domain", Kind::uint}, {"spec_pool_docs", Kind::uint}, {"seed", Kind::uint}});
    SyntheticPairConfig sp;
    sp.sources.num_domains = s.value("num_domains", sp.sources.num_domains);
    sp.sources.alphabet_size = s.value("alphabet_size", sp.sources.alphabet_size);
    sp.sources.lexicon_size = s.value("lexicon_size", sp.sources.lexicon_size);
    sp.sources.successors = s.value("successors", sp.sources.successors);
    sp.sources.min_words = s.value("min_words", sp.sources.min_words);
    sp.sources.max_words = s.value("max_words", sp.sources.max_words);
    sp.seed = s.value("seed", sp.seed);
    sp.sources.seed = derive_seed(sp.seed, 0x5F);
    if (s.contains("generic_mixture")) {
      sp.generic_mixture.clear();
      for (const auto& v : s.at("generic_mixture")) {
        if (!v.is_number() || v.get<double>() < 0) throw ConfigError("synthetic.generic_mixture: expected numbers >= 0");
        sp.generic_mixture.push_back(v.get<double>());
      }
    } else {
      sp.generic_mixture.clear();
      for (std::size_t d = 0; d < sp.sources.num_domains; ++d) {
        sp.generic_mixture.push_back(static_cast<double>(sp.sources.num_domains - d));
      }
    }
    if (sp.generic_mixture.size() != sp.sources.num_domains) {
      throw ConfigError("synthetic.generic_mixture: needs one entry per domain");
    }
    sp.generic_docs = s.value("generic_docs", sp.generic_docs);
    sp.target_domain = s.value("target_domain", sp.sources.num_domains - 1);
    sp.spec_pool_docs = s.value("spec_pool_docs", sp.spec_pool_docs);
    if (sp.target_domain >= sp.sources.num_domains) throw ConfigError("synthetic.target_domain: out of range");
    c.synthetic = sp;
  }
  if (!c.synthetic && !(c.generic && c.specialization)) {
    throw ConfigError("generic: either a 'synthetic' block or both 'generic' and 'specialization' sources are required");
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::check_fields(s, "split", {{"val_docs", Kind::uint}, {"test_docs", Kind::uint}, {"train_docs", Kind::uint}});
    c.split.val_docs = s.value("val_docs", c.split.val_docs);
    c.split.test_docs = s.value("test_docs", c.split.test_docs);
    c.split.train_docs = s.value("train_docs", c.split.train_docs);
    if (c.split.val_docs == 0 || c.split.test_docs == 0) throw ConfigError("split: val_docs and test_docs must be > 0");
  }
  const std::size_t vocab = c.tokenizer == TokenizerMode::byte ? 257 : c.max_vocab;
  c.model = detail::parse_model(j.value("model", nlohmann::json::object()), "model", vocab);
  c.teacher_model = c.model;
  if (j.contains("teacher_model")) c.teacher_model = detail::parse_model(j.at("teacher_model"), "teacher_model", vocab);
  if (j.contains("pn")) {
    const auto& p = j.at("pn");
    detail::check_fields(p, "pn", {{"h", Kind::uint}, {"k", Kind::uint}, {"m", Kind::uint}});
    detail::with_path("pn", [&] {
      c.pn = p.get<PnConfig>();
      c.pn->validate();
    });
  }
  if (c.method == "slm_pn" && !c.pn) throw ConfigError("pn: method slm_pn requires a 'pn' block");
  if (j.contains("train")) {
    detail::check_fields(j.at("train"), "train",
                         {{"learning_rate", Kind::number}, {"clip_norm", Kind::number}, {"warmup_steps", Kind::uint},
                          {"batch_size", Kind::uint}, {"max_steps", Kind::uint}, {"seed", Kind::uint},
                          {"beta1", Kind::number}, {"beta2", Kind::number}, {"epsilon", Kind::number},
                          {"checkpoint_every", Kind::uint}});
    c.train = j.at("train").get<TrainConfig>();
  }
  if (!j.contains("train") || !j.at("train").contains("seed")) c.train.seed = c.seed;
  detail::with_path("train", [&] { c.train.validate(); });
  if (j.contains("finetune")) {
    detail::check_fields(j.at("finetune"), "finetune",
                         {{"lr_divisor", Kind::number}, {"patience", Kind::uint}, {"eval_every", Kind::uint},
                          {"max_steps", Kind::uint}, {"warmup_steps", Kind::uint}});
    c.finetune = j.at("finetune").get<FinetuneConfig>();
  }
  detail::with_path("finetune", [&] { c.finetune.validate(); });
  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    detail::check_fields(d, "distill", {{"mix_weight", Kind::number}, {"temperature", Kind::number}});
    c.distill.mix_weight = d.value("mix_weight", c.distill.mix_weight);
    c.distill.temperature = d.value("temperature", c.distill.temperature);
  }
  detail::with_path("distill", [&] { c.distill.validate(); });
  if (j.contains("lora")) {
    detail::check_fields(j.at("lora"), "lora", {{"rank", Kind::uint}, {"sites", Kind::string}});
    detail::with_path("lora", [&] { c.lora = j.at("lora").get<LoraConfig>(); });
    if (c.lora.rank < 1 || c.lora.rank > std::min(c.model.model_dim, c.model.inner_dim)) {
      throw ConfigError("lora.rank: must be in [1, min(model_dim, inner_dim)]");
    }
  }
  if (j.contains("clustering")) {
    const auto& k = j.at("clustering");
    detail::check_fields(k, "clustering",
                         {{"k", Kind::uint}, {"seed", Kind::uint}, {"max_iters", Kind::uint}, {"dim", Kind::uint},
                          {"min_n", Kind::uint}, {"max_n", Kind::uint}});
    c.clustering.k = k.value("k", c.clustering.k);
    c.clustering.seed = k.value("seed", c.seed);
    c.clustering.max_iters = k.value("max_iters", c.clustering.max_iters);
    c.clustering.embedder.dim = k.value("dim", c.clustering.embedder.dim);
    c.clustering.embedder.min_n = k.value("min_n", c.clustering.embedder.min_n);
    c.clustering.embedder.max_n = k.value("max_n", c.clustering.embedder.max_n);
  } else {
    c.clustering.seed = c.seed;
  }
  if (c.pn) c.clustering.k = c.pn->k;
  if (c.clustering.k < 1) throw ConfigError("clustering.k: must be >= 1");
  if (j.contains("resample")) {
    const auto& r = j.at("resample");
    detail::check_fields(r, "resample", {{"target_size", Kind::uint}, {"laplace_alpha", Kind::number}});
    c.resample.target_size = r.value("target_size", c.resample.target_size);
    c.resample.laplace_alpha = r.value("laplace_alpha", c.resample.laplace_alpha);
  }
  if (j.contains("strategy")) detail::with_path("strategy", [&] { c.strategy = parse_strategy(j.at("strategy").get<std::string>()); });
  if (j.contains("mixture_mode")) {
    const std::string m = j.at("mixture_mode").get<std::string>();
    if (m == "round_robin") {
      c.mixture_mode = MixtureMode::round_robin;
    } else if (m == "independent") {
      c.mixture_mode = MixtureMode::independent;
    } else {
      throw ConfigError("mixture_mode: expected 'round_robin' or 'independent'");
    }
  }
  if (j.contains("compare")) {
    const auto& cm = j.at("compare");
    detail::check_fields(cm, "compare", {{"methods", Kind::array}, {"spec_sizes", Kind::array}});
    if (cm.contains("methods")) {
      c.compare_methods.clear();
      for (const auto& m : cm.at("methods")) {
        if (!m.is_string()) throw ConfigError("compare.methods: expected strings");
        detail::with_path("compare.methods", [&] { check_method(m.get<std::string>()); });
        c.compare_methods.push_back(m.get<std::string>());
      }
    }
    if (cm.contains("spec_sizes")) {
      c.compare_spec_sizes.clear();
      for (const auto& n : cm.at("spec_sizes")) {
        if (!detail::is_kind(n, Kind::uint) || n.get<std::size_t>() == 0) {
          throw ConfigError("compare.spec_sizes: expected positive integers");
        }
        c.compare_spec_sizes.push_back(n.get<std::size_t>());
      }
    }
  }
  if (j.contains("cost_models")) {
    for (const auto& [name, v] : j.at("cost_models").items()) {
      const std::string path = "cost_models." + name;
      detail::check_fields(v, path, {{"c_generic", Kind::number}, {"c_specialization", Kind::number}});
      if (!v.contains("c_generic") || !v.contains("c_specialization")) {
        throw ConfigError(path + ": needs c_generic and c_specialization");
      }
      CostModel cm = v.get<CostModel>();
      detail::with_path(path, [&] { cm.validate(); });
      c.cost_models.emplace(name, cm);
    }
  }
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  return parse_pipeline_config(j);
}

}  // namespace sslm
