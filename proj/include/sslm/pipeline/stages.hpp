// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pipeline stages. Each one reads its upstream artifacts from the output directory,
// writes its own artifact and a sibling "<artifact>.provenance.json" holding the hashes
// of every input and output, the seed and the config snapshot.
//
//   <out>/corpus/       generic.jsonl spec_train.jsonl spec_val.jsonl spec_test.jsonl
//                       vocab.json resampled.jsonl resample_plan.json
//   <out>/clusters/     clustering.bin histograms.json
//   <out>/checkpoints/  pretrain_<method>.ckpt pretrain_teacher.ckpt final_<method>.ckpt
//                       lora_adapters.ckpt
//   <out>/reports/      pretrain_<method>.{csv,json} finetune_<method>.{csv,json}
//                       specialize_<method>.json eval_<method>.{json,csv} ledger.json
//                       cost_curve.csv crossovers.json compare.csv compare.json

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "sslm/clustering/artifact.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/core/hash.hpp"
#include "sslm/corpus/archive.hpp"
#include "sslm/eval/cost.hpp"
#include "sslm/eval/perplexity.hpp"
#include "sslm/eval/report.hpp"
#include "sslm/model/checkpoint.hpp"
#include "sslm/pipeline/config.hpp"
#include "sslm/pipeline/matrix.hpp"
#include "sslm/sampler/resample.hpp"
#include "sslm/specialize/specializer.hpp"
#include "sslm/train/trainer.hpp"

namespace sslm {

using PipelineScalar = float;

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

  const PipelineConfig& config() const { return cfg_; }
  std::filesystem::path dir(const std::string& sub) const { return cfg_.out / sub; }
  std::filesystem::path corpus_path(const std::string& name) const { return dir("corpus") / (name + ".jsonl"); }
  std::filesystem::path checkpoint_path(const std::string& name) const { return dir("checkpoints") / (name + ".ckpt"); }
  std::filesystem::path report_path(const std::string& name) const { return dir("reports") / name; }

  // -------------------------------------------------------------------------------------
  void ingest() const {
    Tokenizer tok = Tokenizer::byte_level();
    Corpus generic, spec;
    std::vector<std::filesystem::path> inputs;
    if (cfg_.synthetic) {
      auto sp = *cfg_.synthetic;
      sp.spec_val_docs = cfg_.split.val_docs;
      sp.spec_test_docs = cfg_.split.test_docs;
      auto pair = synthetic_pair(sp);
      if (cfg_.tokenizer == TokenizerMode::word) {
        std::vector<std::string> texts;
        for (const auto& d : pair.generic.documents) texts.push_back(d.text);
        tok = Tokenizer::learn_words(texts, cfg_.max_vocab);
        pair = synthetic_pair(sp, tok);
      }
      generic = std::move(pair.generic);
      spec = std::move(pair.spec_pool);
      // Validation and test splits come from the generator's own heldout streams.
      spec_val_ = std::move(pair.spec_val);
      spec_test_ = std::move(pair.spec_test);
    } else {
      if (cfg_.tokenizer == TokenizerMode::word) {
        std::vector<std::string> texts;
        for (const auto& p : cfg_.generic->paths) {
          std::ifstream in(p);
          if (!in) throw IoError(p.string(), "cannot open");
          std::string line;
          while (std::getline(in, line)) texts.push_back(line);
        }
        tok = Tokenizer::learn_words(texts, cfg_.max_vocab);
      }
      generic = sslm::ingest(cfg_.generic->paths, cfg_.generic->domain, tok,
                             {cfg_.generic->unit, CorpusRole::generic});
      spec = sslm::ingest(cfg_.specialization->paths, cfg_.specialization->domain, tok,
                          {cfg_.specialization->unit, CorpusRole::specialization});
      inputs.insert(inputs.end(), cfg_.generic->paths.begin(), cfg_.generic->paths.end());
      inputs.insert(inputs.end(), cfg_.specialization->paths.begin(), cfg_.specialization->paths.end());
      auto held = split_heldout(spec, cfg_.split.test_docs, derive_seed(cfg_.seed, 0x7E57));
      spec_test_ = std::move(held.heldout);
      auto val = split_heldout(held.train, cfg_.split.val_docs, derive_seed(cfg_.seed, 0x7A1));
      spec_val_ = std::move(val.heldout);
      spec = std::move(val.train);
    }
    spec_val_.split = spec_test_.split = Split::heldout;
    if (cfg_.split.train_docs > 0) spec = take_documents(spec, cfg_.split.train_docs);
    write_tokenizer(dir("corpus") / "vocab.json", tok);
    write_corpus(corpus_path("generic"), generic);
    write_corpus(corpus_path("spec_train"), spec);
    write_corpus(corpus_path("spec_val"), spec_val_);
    write_corpus(corpus_path("spec_test"), spec_test_);
    for (const auto* name : {"generic", "spec_train", "spec_val", "spec_test"}) {
      write_provenance(corpus_path(name), "ingest", inputs);
    }
  }

  // -------------------------------------------------------------------------------------
  void cluster() const {
    const auto generic = load_corpus("generic", "ingest");
    const auto model = model_config();
    auto clustered = cluster_windows(prepare_windows(generic, model), cfg_.clustering);
    const auto path = dir("clusters") / "clustering.bin";
    save_clustering(path, clustered.clustering, cfg_.clustering.embedder);
    const auto spec = load_corpus("spec_train", "ingest");
    const auto embed = as_embedder(cfg_.clustering.embedder);
    const auto spec_windows = prepare_windows(spec, model);
    const auto gen_hist = histogram_from_labels(clustered.clustering.labels, cfg_.clustering.k);
    const auto spec_hist = histogram(std::span<const Window>(spec_windows), clustered.clustering, embed);
    nlohmann::json h = {{"k", cfg_.clustering.k},
                        {"inertia", clustered.clustering.inertia},
                        {"iterations", clustered.clustering.iterations},
                        {"generic", {{"counts", gen_hist.counts}, {"frequencies", gen_hist.frequencies},
                                     {"entropy", entropy(gen_hist)}}},
                        {"specialization", {{"counts", spec_hist.counts}, {"frequencies", spec_hist.frequencies},
                                            {"entropy", entropy(spec_hist)},
                                            {"top_cluster_fraction", top_cluster_fraction(spec_hist)}}}};
    write_json(dir("clusters") / "histograms.json", h);
    const std::vector<std::filesystem::path> inputs = {corpus_path("generic"), corpus_path("spec_train")};
    write_provenance(path, "cluster", inputs);
    write_provenance(dir("clusters") / "histograms.json", "cluster", inputs);
  }

  // -------------------------------------------------------------------------------------
  void resample() const {
    const auto generic = load_corpus("generic", "ingest");
    const auto art = load_clusters();
    const auto model = model_config();
    const auto embed = as_embedder(art.embedder);
    auto gw = prepare_windows(generic, model, &art.clustering, &embed);
    const auto spec = load_corpus("spec_train", "ingest");
    auto sw = prepare_windows(spec, model, &art.clustering, &embed);
    const auto spec_hist = histogram(std::span<const Window>(sw), art.clustering, embed);
    std::vector<std::size_t> labels;
    for (const auto& w : gw) labels.push_back(*w.cluster);
    const auto gen_hist = histogram_from_labels(labels, art.clustering.k);
    const std::size_t target =
        cfg_.resample.target_size > 0 ? cfg_.resample.target_size : cfg_.train.max_steps * cfg_.train.batch_size;
    const auto plan = make_plan(spec_hist, std::max<std::size_t>(target, 1), derive_seed(cfg_.seed, 0x15), &gen_hist,
                                cfg_.resample.laplace_alpha);
    const auto set = sslm::resample(std::span<const Window>(gw), plan);
    write_corpus(corpus_path("resampled"), windows_to_corpus(std::span<const Window>(set.windows), generic));
    auto pj = plan.to_json();
    pj["generic_frequencies"] = gen_hist.frequencies;
    write_json(dir("corpus") / "resample_plan.json", pj);
    const std::vector<std::filesystem::path> inputs = {corpus_path("generic"), corpus_path("spec_train"),
                                                       dir("clusters") / "clustering.bin"};
    write_provenance(corpus_path("resampled"), "resample", inputs);
    write_provenance(dir("corpus") / "resample_plan.json", "resample", inputs);
  }

  // -------------------------------------------------------------------------------------
  void pretrain() const {
    using T = PipelineScalar;
    const auto& m = cfg_.method;
    const auto model = model_config();
    const auto ckpt = checkpoint_path("pretrain_" + m);
    auto hook_for = [&](const std::string& name) {
      return [this, name](std::size_t step, const auto& p) {
        const auto path = checkpoint_path(name + "_step" + std::to_string(step));
        save_any(path, p);
      };
    };
    if (m == "slm_nopt") {
      save_slm(ckpt, build_slm<T>(model, derive_seed(cfg_.seed, 1)), meta());
      write_provenance(ckpt, "pretrain", {});
      update_ledger(m, "generic", "pretrain", 0.0);
      return;
    }
    if (m == "slm" || m == "slm_d" || m == "lora") {
      const auto generic = load_corpus("generic", "ingest");
      const auto windows = prepare_windows(generic, model);
      CheckpointHook<SlmParams<T>> hook = hook_for("pretrain_" + m);
      auto r = sslm::pretrain(build_slm<T>(model, derive_seed(cfg_.seed, 1)), std::span<const Window>(windows),
                              cfg_.train, {}, hook);
      save_slm(ckpt, r.params, meta());
      write_log(report_path("pretrain_" + m), r.log);
      write_provenance(ckpt, "pretrain", {corpus_path("generic")});
      update_ledger(m, "generic", "pretrain", r.log.cost_units());
      if (m == "slm_d") {
        const auto tw = prepare_windows(generic, teacher_config());
        auto t = sslm::pretrain(build_slm<T>(teacher_config(), derive_seed(cfg_.seed, 2)), std::span<const Window>(tw),
                                cfg_.train);
        save_slm(checkpoint_path("pretrain_teacher"), t.params, meta());
        write_log(report_path("pretrain_teacher"), t.log);
        write_provenance(checkpoint_path("pretrain_teacher"), "pretrain", {corpus_path("generic")});
        update_ledger(m, "generic", "teacher_pretrain", t.log.cost_units());
      }
      return;
    }
    if (m == "slm_is") {
      require(corpus_path("resampled"), "resample");
      const auto resampled = read_corpus(corpus_path("resampled")).corpus;
      const auto windows = prepare_windows(resampled, model);
      CheckpointHook<SlmParams<T>> hook = hook_for("pretrain_" + m);
      auto r = sslm::pretrain(build_slm<T>(model, derive_seed(cfg_.seed, 1)), std::span<const Window>(windows), cfg_.train, {},
                              hook, CostCategory::specialization);
      save_slm(ckpt, r.params, meta());
      write_log(report_path("pretrain_" + m), r.log);
      write_provenance(ckpt, "pretrain", {corpus_path("resampled")});
      update_ledger(m, "generic", "pretrain", 0.0);
      update_ledger(m, "specialization", "pretrain_is", r.log.cost_units());
      return;
    }
    const auto generic = load_corpus("generic", "ingest");
    const auto art = load_clusters();
    const auto embed = as_embedder(art.embedder);
    const auto windows = prepare_windows(generic, model, &art.clustering, &embed);
    const std::vector<std::filesystem::path> inputs = {corpus_path("generic"), dir("clusters") / "clustering.bin"};
    if (m == "slm_pn") {
      if (art.clustering.k != cfg_.pn->k) throw ConfigError("pn.k differs from the clustering's k");
      CheckpointHook<PnParams<T>> hook = hook_for("pretrain_" + m);
      auto r = sslm::pretrain(build_pn<T>(model, *cfg_.pn, derive_seed(cfg_.seed, 3)), std::span<const Window>(windows),
                              cfg_.train, {}, hook);
      save_pn(ckpt, r.params, meta());
      write_log(report_path("pretrain_" + m), r.log);
      write_provenance(ckpt, "pretrain", inputs);
      update_ledger(m, "generic", "pretrain", r.log.cost_units());
    } else if (m == "slm_mix") {
      auto r = sslm::pretrain(build_mix<T>(model, art.clustering.k, derive_seed(cfg_.seed, 4)),
                              std::span<const Window>(windows), cfg_.train, cfg_.mixture_mode);
      save_mixture(ckpt, r.params, meta());
      write_log(report_path("pretrain_" + m), r.log);
      write_provenance(ckpt, "pretrain", inputs);
      update_ledger(m, "generic", "pretrain", r.log.cost_units());
    }
  }

  // -------------------------------------------------------------------------------------
  void finetune() const {
    using T = PipelineScalar;
    const auto& m = cfg_.method;
    if (m == "slm_pn" || m == "slm_mix") throw ConfigError("method: " + m + " is specialized with the 'specialize' stage");
    if (m == "slm_d") throw ConfigError("method: slm_d is specialized with the 'distill' stage");
    const std::string source = m == "lora" ? "pretrain_lora" : "pretrain_" + m;
    require(checkpoint_path(source), "pretrain");
    const auto base = load_slm<T>(checkpoint_path(source));
    const auto tw = prepare_windows(load_corpus("spec_train", "ingest"), base.config);
    const auto vw = prepare_windows(load_corpus("spec_val", "ingest"), base.config);
    const std::vector<std::filesystem::path> inputs = {checkpoint_path(source), corpus_path("spec_train"),
                                                       corpus_path("spec_val")};
    const auto final_path = checkpoint_path("final_" + m);
    if (m == "lora") {
      auto r = finetune_lora(base, cfg_.lora, std::span<const Window>(tw), std::span<const Window>(vw), cfg_.finetune,
                             cfg_.train);
      save_lora(checkpoint_path("lora_adapters"), r.params, base.config, meta());
      save_slm(final_path, merge_lora(base, r.params), meta());
      write_log(report_path("finetune_" + m), r.log);
      write_provenance(checkpoint_path("lora_adapters"), "finetune", inputs);
      write_provenance(final_path, "finetune", inputs);
      update_ledger(m, "specialization", "finetune", r.log.cost_units());
      return;
    }
    auto r = sslm::finetune(base, std::span<const Window>(tw), std::span<const Window>(vw), cfg_.finetune, cfg_.train);
    save_slm(final_path, r.params, meta());
    write_log(report_path("finetune_" + m), r.log);
    write_provenance(final_path, "finetune", inputs);
    update_ledger(m, "specialization", "finetune", r.log.cost_units());
  }

  // -------------------------------------------------------------------------------------
  // Fine-tunes the larger teacher on the specialization set, then distills the student.
  void distill() const {
    using T = PipelineScalar;
    if (cfg_.method != "slm_d") throw ConfigError("method: the distill stage needs method slm_d");
    require(checkpoint_path("pretrain_slm_d"), "pretrain");
    require(checkpoint_path("pretrain_teacher"), "pretrain");
    const auto student = load_slm<T>(checkpoint_path("pretrain_slm_d"));
    const auto teacher = load_slm<T>(checkpoint_path("pretrain_teacher"));
    const auto train = load_corpus("spec_train", "ingest");
    const auto val = load_corpus("spec_val", "ingest");
    const auto ttw = prepare_windows(train, teacher.config);
    const auto tvw = prepare_windows(val, teacher.config);
    auto tft = sslm::finetune(teacher, std::span<const Window>(ttw), std::span<const Window>(tvw), cfg_.finetune,
                              cfg_.train);
    save_slm(checkpoint_path("finetuned_teacher"), tft.params, meta());
    const auto tw = prepare_windows(train, student.config);
    const auto vw = prepare_windows(val, student.config);
    auto r = sslm::distill(student, tft.params, std::span<const Window>(tw), std::span<const Window>(vw), cfg_.distill,
                           cfg_.finetune, cfg_.train);
    const auto final_path = checkpoint_path("final_slm_d");
    save_slm(final_path, r.params, meta());
    write_log(report_path("finetune_teacher"), tft.log);
    write_log(report_path("finetune_slm_d"), r.log);
    const std::vector<std::filesystem::path> inputs = {checkpoint_path("pretrain_slm_d"),
                                                       checkpoint_path("pretrain_teacher"), corpus_path("spec_train"),
                                                       corpus_path("spec_val")};
    write_provenance(checkpoint_path("finetuned_teacher"), "distill", inputs);
    write_provenance(final_path, "distill", inputs);
    update_ledger("slm_d", "specialization", "teacher_finetune", tft.log.cost_units());
    update_ledger("slm_d", "specialization", "distill", r.log.cost_units());
  }

  // -------------------------------------------------------------------------------------
  void specialize() const {
    using T = PipelineScalar;
    const auto& m = cfg_.method;
    if (m != "slm_pn" && m != "slm_mix") throw ConfigError("method: the specialize stage needs slm_pn or slm_mix");
    require(checkpoint_path("pretrain_" + m), "pretrain");
    const auto art = load_clusters();
    const auto embed = as_embedder(art.embedder);
    const auto model = model_config();
    const auto tw = prepare_windows(load_corpus("spec_train", "ingest"), model, &art.clustering, &embed);
    const auto vw = prepare_windows(load_corpus("spec_val", "ingest"), model);
    const auto spec_hist = histogram(std::span<const Window>(tw), art.clustering, embed);
    SpecializeInputs in{std::span<const Window>(tw), std::span<const Window>(vw), &spec_hist, cfg_.finetune,
                        cfg_.train, cfg_.threads};
    SpecializeResult<T> r = m == "slm_pn" ? sslm::specialize(load_pn<T>(checkpoint_path("pretrain_" + m)), cfg_.strategy, in)
                                          : sslm::specialize(load_mixture<T>(checkpoint_path("pretrain_" + m)),
                                                             cfg_.strategy, in);
    const auto final_path = checkpoint_path("final_" + m);
    save_slm(final_path, r.params, meta());
    r.report["seed"] = cfg_.seed;
    r.report["checkpoint"] = final_path.filename().string();
    r.report["source_checkpoint"] = ("pretrain_" + m + ".ckpt");
    r.report["cost_units"] = r.log.cost_units() * r.selection.cost_multiplier;
    write_json(report_path("specialize_" + m + ".json"), r.report);
    write_log(report_path("finetune_" + m), r.log);
    const std::vector<std::filesystem::path> inputs = {checkpoint_path("pretrain_" + m), dir("clusters") / "clustering.bin",
                                                       corpus_path("spec_train"), corpus_path("spec_val")};
    write_provenance(final_path, "specialize", inputs);
    write_provenance(report_path("specialize_" + m + ".json"), "specialize", inputs);
    update_ledger(m, "specialization", "finetune", r.log.cost_units() * r.selection.cost_multiplier);
  }

  // -------------------------------------------------------------------------------------
  EvalReport evaluate() const {
    using T = PipelineScalar;
    const auto& m = cfg_.method;
    const auto path = checkpoint_path("final_" + m);
    const std::string upstream = m == "slm_d" ? "distill" : (m == "slm_pn" || m == "slm_mix") ? "specialize" : "finetune";
    require(path, upstream);
    const auto params = load_slm<T>(path);
    const auto test = load_corpus("spec_test", "ingest");
    nlohmann::json cost = nlohmann::json::object();
    const auto ledger = read_ledger();
    if (ledger.contains(m)) cost = ledger.at(m);
    auto report = make_report(m, perplexity_by_domain(params, test), cost);
    write_json(report_path("eval_" + m + ".json"), to_json(report));
    write_text(report_path("eval_" + m + ".csv"), to_csv(report));
    const std::vector<std::filesystem::path> inputs = {path, corpus_path("spec_test")};
    write_provenance(report_path("eval_" + m + ".json"), "evaluate", inputs);
    write_provenance(report_path("eval_" + m + ".csv"), "evaluate", inputs);
    return report;
  }

  // -------------------------------------------------------------------------------------
  // Cost curves for the given methods: explicit cost_models in the config win, otherwise
  // the run ledger supplies them.
  std::string cost(const std::vector<std::string>& methods, const std::vector<double>& tasks) const {
    std::map<std::string, CostModel> models;
    const auto ledger = read_ledger();
    for (const auto& m : methods) {
      if (const auto it = cfg_.cost_models.find(m); it != cfg_.cost_models.end()) {
        models.emplace(m, it->second);
      } else if (ledger.contains(m)) {
        models.emplace(m, ledger_model(ledger.at(m)));
      } else {
        throw StageDependencyError("pretrain", "cost ledger entry for method '" + m + "'");
      }
    }
    const std::string csv = cost_curve_csv(models, tasks);
    write_text(report_path("cost_curve.csv"), csv);
    nlohmann::json cross = nlohmann::json::array();
    for (auto a = models.begin(); a != models.end(); ++a) {
      for (auto b = std::next(a); b != models.end(); ++b) {
        const double n = crossover_tasks(a->second, b->second);
        cross.push_back({{"a", a->first}, {"b", b->first}, {"crossover", std::isinf(n) ? nlohmann::json("inf") : nlohmann::json(n)}});
      }
    }
    nlohmann::json models_json = nlohmann::json::object();
    for (const auto& [name, c] : models) models_json[name] = c;
    write_json(report_path("crossovers.json"),
               {{"unit", kCostUnitFormula}, {"models", models_json}, {"crossovers", cross}});
    std::vector<std::filesystem::path> inputs;
    if (std::filesystem::exists(report_path("ledger.json"))) inputs.push_back(report_path("ledger.json"));
    write_provenance(report_path("cost_curve.csv"), "cost", inputs);
    return csv;
  }

  // -------------------------------------------------------------------------------------
  // Full method matrix on the ingested corpus pair.
  MatrixResult compare() const {
    MatrixInputs in;
    in.generic = load_corpus("generic", "ingest");
    in.spec_pool = load_corpus("spec_train", "ingest");
    in.spec_val = load_corpus("spec_val", "ingest");
    in.spec_test = load_corpus("spec_test", "ingest");
    MatrixConfig mc;
    mc.model = model_config();
    mc.teacher = teacher_config();
    mc.pn = cfg_.pn.value_or(PnConfig{cfg_.clustering.k, cfg_.clustering.k, cfg_.clustering.k});
    mc.train = cfg_.train;
    mc.finetune = cfg_.finetune;
    mc.distill = cfg_.distill;
    mc.lora = cfg_.lora;
    mc.clustering = cfg_.clustering;
    mc.strategy = cfg_.strategy;
    mc.methods = cfg_.compare_methods;
    mc.spec_sizes = cfg_.compare_spec_sizes;
    mc.seed = cfg_.seed;
    mc.threads = cfg_.threads;
    const auto r = run_matrix<PipelineScalar>(in, mc);
    std::set<std::string> domains;
    for (const auto& d : in.spec_test.documents) domains.insert(d.domain);
    std::string csv = to_csv(r);
    csv += "# cost unit: " + std::string(kCostUnitFormula) + "\n";
    csv += "# recommendation (decision rule, not a measurement): " + recommendation(domains.size()) + "\n";
    write_text(report_path("compare.csv"), csv);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
      nlohmann::json jr = {{"method", row.method}, {"spec_size", row.spec_size}, {"pretrain_cost", row.pretrain_cost},
                           {"spec_cost", row.spec_cost}, {"nll", row.nll}, {"ppl", row.ppl}};
      if (row.pretrained_nll) jr["pretrained_nll"] = *row.pretrained_nll;
      rows.push_back(jr);
    }
    write_json(report_path("compare.json"),
               {{"rows", rows},
                {"generic_histogram", r.generic_hist.frequencies},
                {"target_domains", std::vector<std::string>(domains.begin(), domains.end())},
                {"recommendation", recommendation(domains.size())}});
    const std::vector<std::filesystem::path> inputs = {corpus_path("generic"), corpus_path("spec_train"),
                                                       corpus_path("spec_val"), corpus_path("spec_test")};
    write_provenance(report_path("compare.csv"), "compare", inputs);
    write_provenance(report_path("compare.json"), "compare", inputs);
    return r;
  }

  // Model config with the vocabulary taken from the ingested tokenizer.
  ModelConfig model_config() const { return with_vocab(cfg_.model); }
  ModelConfig teacher_config() const { return with_vocab(cfg_.teacher_model); }

 private:
  static void require(const std::filesystem::path& p, const std::string& stage) {
    if (!std::filesystem::exists(p)) throw StageDependencyError(stage, p.string());
  }

  ModelConfig with_vocab(ModelConfig c) const {
    const auto vocab = dir("corpus") / "vocab.json";
    require(vocab, "ingest");
    c.vocab_size = read_tokenizer(vocab).vocab_size();
    return c;
  }

  Corpus load_corpus(const std::string& name, const std::string& stage) const {
    require(corpus_path(name), stage);
    return read_corpus(corpus_path(name)).corpus;
  }

  ClusteringArtifact load_clusters() const {
    require(dir("clusters") / "clustering.bin", "cluster");
    return load_clustering(dir("clusters") / "clustering.bin");
  }

  nlohmann::json meta() const { return {{"seed", cfg_.seed}, {"method", cfg_.method}}; }

  template <typename P>
  void save_any(const std::filesystem::path& path, const P& p) const {
    if constexpr (std::is_same_v<P, SlmParams<PipelineScalar>>) {
      save_slm(path, p, meta());
    } else {
      save_pn(path, p, meta());
    }
  }

  static void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << text;
  }

  static void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

  void write_provenance(const std::filesystem::path& artifact, const std::string& stage,
                        const std::vector<std::filesystem::path>& inputs) const {
    nlohmann::json in = nlohmann::json::object();
    for (const auto& p : inputs) in[p.lexically_relative(cfg_.out).generic_string()] = hex64(hash_file(p));
    nlohmann::json j = {{"stage", stage},
                        {"artifact", artifact.lexically_relative(cfg_.out).generic_string()},
                        {"artifact_hash", hex64(hash_file(artifact))},
                        {"inputs", in},
                        {"seed", cfg_.seed},
                        {"config", cfg_.raw}};
    write_json(std::filesystem::path(artifact.string() + ".provenance.json"), j);
  }

  nlohmann::json read_ledger() const {
    const auto p = report_path("ledger.json");
    if (!std::filesystem::exists(p)) return nlohmann::json::object();
    std::ifstream in(p);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(p.string(), std::string("malformed ledger: ") + e.what());
    }
  }

  void update_ledger(const std::string& method, const std::string& category, const std::string& item,
                     double units) const {
    auto ledger = read_ledger();
    ledger[method][category][item] = units;
    write_json(report_path("ledger.json"), ledger);
  }

  static CostModel ledger_model(const nlohmann::json& entry) {
    CostModel c;
    for (const auto& [category, items] : entry.items()) {
      double s = 0.0;
      for (const auto& [_, v] : items.items()) s += v.get<double>();
      (category == "generic" ? c.c_generic : c.c_specialization) += s;
    }
    return c;
  }

  PipelineConfig cfg_;
  mutable Corpus spec_val_, spec_test_;
};

}  // namespace sslm
