#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sslm/core/hash.hpp"
#include "sslm/pipeline/stages.hpp"

namespace sslm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json tiny_pipeline(const fs::path& out, const std::string& method) {
  return {{"method", method},
          {"seed", 5},
          {"threads", 1},
          {"out", out.string()},
          {"synthetic", {{"num_domains", 3}, {"generic_docs", 60}, {"seed", 2}}},
          {"split", {{"val_docs", 4}, {"test_docs", 4}, {"train_docs", 6}}},
          {"model", {{"context_length", 12}, {"model_dim", 8}, {"num_layers", 1}, {"num_heads", 2}, {"inner_dim", 16}}},
          {"pn", {{"h", 2}, {"k", 2}, {"m", 2}}},
          {"train", {{"learning_rate", 0.003}, {"warmup_steps", 0}, {"batch_size", 4}, {"max_steps", 4}}},
          {"finetune", {{"patience", 2}, {"eval_every", 2}, {"max_steps", 4}}},
          {"clustering", {{"k", 2}, {"max_iters", 10}}},
          {"compare", {{"methods", {"slm", "slm_nopt"}}, {"spec_sizes", {3}}}}};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sslm_pipe_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const json& j) {
  try {
    parse_pipeline_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(PipelineConfig, ErrorsNameTheField) {
  const auto base = tiny_pipeline("x", "slm");
  auto j = base;
  j["model"]["num_heads"] = "two";
  EXPECT_NE(config_error(j).find("model.num_heads"), std::string::npos);
  j = base;
  j["train"]["learning_rat"] = 0.1;
  EXPECT_NE(config_error(j).find("train.learning_rat"), std::string::npos);
  j = base;
  j["model"]["num_heads"] = 3;
  EXPECT_NE(config_error(j).find("model"), std::string::npos);
  j = base;
  j["method"] = "gpt";
  EXPECT_FALSE(config_error(j).empty());
  j = tiny_pipeline("x", "slm_pn");
  j.erase("pn");
  EXPECT_NE(config_error(j).find("pn"), std::string::npos);
  j = base;
  j.erase("synthetic");
  EXPECT_FALSE(config_error(j).empty());
  EXPECT_TRUE(config_error(base).empty());
}

TEST(PipelineStages, MissingUpstreamArtifactNamesTheStage) {
  const auto out = scratch("deps");
  auto expect_stage = [](auto&& fn, const std::string& stage) {
    try {
      fn();
      ADD_FAILURE() << "expected a dependency error on " << stage;
    } catch (const StageDependencyError& e) {
      EXPECT_EQ(e.stage(), stage);
    }
  };
  Pipeline slm(parse_pipeline_config(tiny_pipeline(out, "slm")));
  expect_stage([&] { slm.cluster(); }, "ingest");
  expect_stage([&] { slm.pretrain(); }, "ingest");
  slm.ingest();
  expect_stage([&] { slm.resample(); }, "cluster");
  expect_stage([&] { slm.finetune(); }, "pretrain");
  expect_stage([&] { slm.evaluate(); }, "finetune");
  expect_stage([&] { slm.cost({"slm"}, {1}); }, "pretrain");
  Pipeline is(parse_pipeline_config(tiny_pipeline(out, "slm_is")));
  expect_stage([&] { is.pretrain(); }, "resample");
  Pipeline pn(parse_pipeline_config(tiny_pipeline(out, "slm_pn")));
  expect_stage([&] { pn.pretrain(); }, "cluster");
  expect_stage([&] { pn.evaluate(); }, "specialize");
  Pipeline d(parse_pipeline_config(tiny_pipeline(out, "slm_d")));
  expect_stage([&] { d.distill(); }, "pretrain");
  expect_stage([&] { d.evaluate(); }, "distill");
}

TEST(PipelineStages, EndToEndWritesHashedProvenance) {
  const auto out = scratch("e2e");
  Pipeline p(parse_pipeline_config(tiny_pipeline(out, "slm_pn")));
  p.ingest();
  p.cluster();
  p.pretrain();
  p.specialize();
  const auto r = p.evaluate();
  EXPECT_TRUE(std::isfinite(r.macro_ppl));
  std::size_t checked = 0;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    const auto name = e.path().filename().string();
    const std::string suffix = ".provenance.json";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    const auto prov = json::parse(slurp(e.path()));
    const auto artifact = out / prov.at("artifact").get<std::string>();
    ASSERT_TRUE(fs::exists(artifact)) << artifact;
    EXPECT_EQ(prov.at("artifact_hash"), hex64(hash_file(artifact)));
    for (const auto& [rel, h] : prov.at("inputs").items()) {
      ASSERT_TRUE(fs::exists(out / rel)) << rel;
      EXPECT_EQ(h, hex64(hash_file(out / rel))) << rel;
    }
    EXPECT_EQ(prov.at("seed"), 5);
    EXPECT_TRUE(prov.contains("config"));
    ++checked;
  }
  EXPECT_GE(checked, 8u);
  const auto spec = json::parse(slurp(p.report_path("specialize_slm_pn.json")));
  EXPECT_TRUE(spec.contains("cost_units"));
  const auto ledger = json::parse(slurp(p.report_path("ledger.json")));
  EXPECT_TRUE(ledger.at("slm_pn").contains("generic"));
  EXPECT_TRUE(ledger.at("slm_pn").contains("specialization"));
}

#ifdef SSLM_CLI_PATH
int run(const std::string& cmd, std::string* stdout_text = nullptr) {
  const auto capture = fs::temp_directory_path() / "sslm_cli_capture.txt";
  const int rc = std::system((cmd + " > " + capture.string() + " 2>/dev/null").c_str());
  if (stdout_text) *stdout_text = slurp(capture);
  return WEXITSTATUS(rc);
}

TEST(Cli, StagesAreDeterministicAndCostMatchesTotals) {
  const auto cfg_path = fs::temp_directory_path() / "sslm_cli_config.json";
  const auto a = scratch("cli_a"), b = scratch("cli_b");
  std::ofstream(cfg_path) << tiny_pipeline(a, "slm").dump();
  const std::string cli = std::string(SSLM_CLI_PATH) + " --config " + cfg_path.string();
  for (const auto& out : {a, b}) {
    for (const char* stage : {"ingest", "pretrain", "finetune"}) {
      ASSERT_EQ(run(cli + " --out " + out.string() + " " + stage), 0) << stage;
    }
  }
  std::string ea, eb;
  ASSERT_EQ(run(cli + " --out " + a.string() + " evaluate", &ea), 0);
  ASSERT_EQ(run(cli + " --out " + b.string() + " evaluate", &eb), 0);
  EXPECT_EQ(ea, eb);
  EXPECT_EQ(slurp(a / "checkpoints" / "final_slm.ckpt"), slurp(b / "checkpoints" / "final_slm.ckpt"));

  auto cj = tiny_pipeline(a, "slm");
  cj["cost_models"] = {{"slm_pn", {{"c_generic", 650}, {"c_specialization", 0.02}}},
                       {"slm_is", {{"c_generic", 0}, {"c_specialization", 130}}}};
  std::ofstream(cfg_path) << cj.dump();
  std::string csv;
  ASSERT_EQ(run(cli + " cost --methods slm_pn,slm_is --tasks 1,7,50", &csv), 0);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    const double n = std::stod(line.substr(0, c1));
    const std::string m = line.substr(c1 + 1, c2 - c1 - 1);
    const CostModel model = m == "slm_pn" ? CostModel{650, 0.02} : CostModel{0, 130};
    EXPECT_NEAR(std::stod(line.substr(c2 + 1)), total_cost(model, n), 1e-9) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 6u);
  const auto cross = json::parse(slurp(a / "reports" / "crossovers.json"));
  ASSERT_EQ(cross.at("crossovers").size(), 1u);
  EXPECT_NEAR(cross.at("crossovers")[0].at("crossover").get<double>(), 5.0, 0.01);

  EXPECT_EQ(run(cli + " --out " + scratch("cli_empty").string() + " finetune"), 3);
  EXPECT_EQ(run(cli + " cost --methods bogus"), 2);
  EXPECT_EQ(run(cli + " cost --methods slm --tasks x"), 2);
}
#endif

}  // namespace
}  // namespace sslm
