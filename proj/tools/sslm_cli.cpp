// SPDX-License-Identifier: Apache-2.0
// sslm: command-line driver for the specialized-model pipeline.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sslm/pipeline/stages.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_tasks(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) throw sslm::ConfigError("--tasks: expected non-negative numbers, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw sslm::ConfigError("--tasks: at least one value is required");
  return out;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sslm::IoError(path, "cannot open config");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw sslm::ConfigError(path + ": not valid JSON (" + e.what() + ")");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Specialized small language models: ingest, cluster, train, specialize, evaluate"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string method;
  app.add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides config 'out')");
  auto* seed_opt = app.add_option("--seed", seed, "global seed (overrides config 'seed')");
  app.add_option("--threads", threads, "worker threads; 1 is deterministic")->check(CLI::PositiveNumber);
  app.add_option("--method", method, "method (overrides config 'method')");

  const std::vector<std::pair<const char*, const char*>> stages = {
      {"ingest", "tokenize and split the corpora"},
      {"cluster", "k-means over generic windows"},
      {"resample", "importance-resample generic windows to the specialization histogram"},
      {"pretrain", "pretrain the configured method"},
      {"finetune", "fine-tune slm, slm_nopt, slm_is or lora on the specialization set"},
      {"distill", "fine-tune the teacher and distill into the student (slm_d)"},
      {"specialize", "select and fine-tune a PN or mixture expert"},
      {"evaluate", "per-domain perplexity on the specialization test split"},
      {"cost", "cost curves and crossovers"},
      {"compare", "run the full method matrix"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : stages) subs[name] = app.add_subcommand(name, help);

  std::string cost_methods;
  std::string cost_tasks = "1,2,5,10,20,50,100";
  subs["cost"]->add_option("--methods", cost_methods, "comma-separated methods")->required();
  subs["cost"]->add_option("--tasks", cost_tasks, "comma-separated task counts N");

  CLI11_PARSE(app, argc, argv);

  try {
    auto j = read_json(config_path);
    if (!out_dir.empty()) j["out"] = out_dir;
    if (*seed_opt) j["seed"] = seed;
    if (threads > 0) j["threads"] = threads;
    if (!method.empty()) j["method"] = method;
    sslm::Pipeline p(sslm::parse_pipeline_config(j));

    const std::string stage = app.get_subcommands().front()->get_name();
    if (stage == "ingest") {
      p.ingest();
    } else if (stage == "cluster") {
      p.cluster();
    } else if (stage == "resample") {
      p.resample();
    } else if (stage == "pretrain") {
      p.pretrain();
    } else if (stage == "finetune") {
      p.finetune();
    } else if (stage == "distill") {
      p.distill();
    } else if (stage == "specialize") {
      p.specialize();
    } else if (stage == "evaluate") {
      const auto r = p.evaluate();
      std::cout << sslm::to_csv(r);
      std::cout << "macro_ppl " << r.macro_ppl << "\n";
    } else if (stage == "cost") {
      const auto methods = split_list(cost_methods);
      for (const auto& m : methods) sslm::check_method(m);
      std::cout << p.cost(methods, parse_tasks(cost_tasks));
    } else if (stage == "compare") {
      const auto r = p.compare();
      std::cout << sslm::to_csv(r);
    }
    std::cerr << stage << ": ok (" << p.config().out.string() << ")\n";
    return 0;
  } catch (const sslm::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const sslm::StageDependencyError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
