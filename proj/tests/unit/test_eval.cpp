#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "sslm/eval/cost.hpp"
#include "sslm/eval/perplexity.hpp"
#include "sslm/eval/report.hpp"
#include "sslm/model/checkpoint.hpp"
#include "sslm/model/count.hpp"
#include "sslm/specialize/specializer.hpp"
#include "support.hpp"

namespace sslm {
namespace {

using testing::tiny_config;

ModelConfig reference_slm() {
  ModelConfig c;
  c.num_layers = 7;
  c.model_dim = 1024;
  c.inner_dim = 4096;
  c.num_heads = 8;
  c.vocab_size = 32000;
  c.context_length = 1024;
  return c;
}

TEST(MacroAverage, GeometricMeanOfPerplexities) {
  const std::map<std::string, double> nll = {{"a", 0.5}, {"b", 1.5}, {"c", 2.2}};
  const double geo = std::cbrt(std::exp(0.5) * std::exp(1.5) * std::exp(2.2));
  EXPECT_NEAR(macro_average(nll), geo, 1e-12);
  EXPECT_THROW(macro_average({}), ConfigError);
}

TEST(MacroAverage, DomainsWeighEquallyRegardlessOfTokens) {
  auto p = build_slm<double>(tiny_config(), 3);
  const auto tok = Tokenizer::byte_level();
  Corpus c;
  c.vocab_size = 11;
  c.documents.push_back({"a1", "a", "", {1, 2, 3, 4, 5, 6, 7}});
  c.documents.push_back({"b1", "b", "", {9, 8, 7}});
  const auto base = make_report("m", perplexity_by_domain(p, c));
  Corpus dup = c;
  for (int i = 0; i < 5; ++i) dup.documents.push_back({"a_copy" + std::to_string(i), "a", "", {1, 2, 3, 4, 5, 6, 7}});
  const auto doubled = make_report("m", perplexity_by_domain(p, dup));
  EXPECT_NEAR(doubled.macro_ppl, base.macro_ppl, 1e-12);
  EXPECT_GT(doubled.domains.at("a").tokens, base.domains.at("a").tokens);
}

TEST(Perplexity, TokenWeightedAndExcludesPadding) {
  auto p = build_slm<double>(tiny_config(11, 8, 2, 1, 12, 4), 4);
  Corpus c;
  c.vocab_size = 11;
  c.documents.push_back({"x", "d", "", {1, 2, 3, 4, 5, 6, 7}});  // windows of 5 and 2 tokens
  const auto r = perplexity(p, c);
  EXPECT_EQ(r.tokens, 4u + 1u);
  EXPECT_NEAR(r.ppl, std::exp(r.nll), 1e-12);
  Corpus empty;
  EXPECT_THROW(perplexity(p, empty), ConfigError);
}

TEST(Cost, AffineInTasks) {
  const CostModel c{650, 0.02};
  for (double n : {0.0, 1.0, 7.0, 123.5}) EXPECT_DOUBLE_EQ(total_cost(c, n), 650 + 0.02 * n);
  EXPECT_NEAR(total_cost(c, 10) - total_cost(c, 9), total_cost(c, 3) - total_cost(c, 2), 1e-12);
  EXPECT_THROW(total_cost(c, -1), ConfigError);
}

TEST(Cost, CrossoverCases) {
  EXPECT_NEAR(crossover_tasks({650, 0.02}, {0, 130}), 5.0, 0.01);
  EXPECT_EQ(crossover_tasks({1, 2}, {1, 2}), 0.0);
  EXPECT_TRUE(std::isinf(crossover_tasks({1, 2}, {3, 2})));
  EXPECT_NEAR(crossover_tasks({5, 2}, {1, 3}), 4.0, 1e-12);
  EXPECT_TRUE(std::isinf(crossover_tasks({1, 2}, {5, 3})));  // would meet at N < 0
}

TEST(Cost, CurveCsvUsesTotalCost) {
  const std::string csv = cost_curve_csv({{"a", {10, 1}}, {"b", {0, 3}}}, {1, 7});
  EXPECT_EQ(csv, "N,method,total_cost\n1,a,11\n1,b,3\n7,a,17\n7,b,21\n");
}

TEST(Cost, ProjectionStepUnits) {
  const auto c = tiny_config();
  const PnConfig pn{3, 4, 2};
  const double macs = c.num_layers * (2.0 * 3 + 2.0 * 3 * c.model_dim * c.inner_dim);
  EXPECT_DOUBLE_EQ(projection_macs(c, pn), macs);
  EXPECT_DOUBLE_EQ(pn_step_units(c, pn, 4, 2), cost_units(1, 4, c.context_length, slm_param_count(c)) + 2 * macs);
}

TEST(Count, ReferenceAnchorsWithinFivePercent) {
  const auto c = reference_slm();
  const double slm = static_cast<double>(slm_param_count(c)) / 1e6;
  EXPECT_NEAR(slm / 126.0, 1.0, 0.05);
  const double mix = static_cast<double>(count_mixture(c, 16).pretrain) / 1e6;
  EXPECT_NEAR(mix / 2016.0, 1.0, 0.05);
  EXPECT_EQ(count_mixture(c, 16).inference, slm_param_count(c));
}

TEST(Report, CsvAndJsonCarryEveryDomain) {
  const auto r = make_report("slm", {{"law", {1.0, std::exp(1.0), 10}}, {"med", {2.0, std::exp(2.0), 30}}});
  EXPECT_NEAR(r.macro_ppl, std::exp(1.5), 1e-12);
  EXPECT_EQ(to_csv(r).substr(0, 22), "domain,tokens,nll,ppl\n");
  EXPECT_EQ(to_json(r).at("domains").size(), 2u);
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sslm_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <typename P>
bool same_tensors(const P& a, const P& b) {
  std::vector<const Tensor<float>*> x, y;
  a.for_each([&](const std::string&, const Tensor<float>& t) { x.push_back(&t); });
  b.for_each([&](const std::string&, const Tensor<float>& t) { y.push_back(&t); });
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(*x[i] == *y[i])) return false;
  }
  return true;
}

TEST(Checkpoint, RoundTripsEveryKind) {
  const auto dir = scratch("ckpt");
  auto c = tiny_config();
  c.tie_embeddings = false;
  const auto slm = build_slm<float>(c, 1);
  save_slm(dir / "s.ckpt", slm, {{"note", "x"}});
  EXPECT_TRUE(same_tensors(load_slm<float>(dir / "s.ckpt"), slm));
  const auto pn = build_pn<float>(c, PnConfig{2, 3, 2}, 2);
  save_pn(dir / "p.ckpt", pn);
  EXPECT_TRUE(same_tensors(load_pn<float>(dir / "p.ckpt"), pn));
  const auto mix = build_mix<float>(c, 2, 3);
  save_mixture(dir / "m.ckpt", mix);
  const auto mix2 = load_mixture<float>(dir / "m.ckpt");
  ASSERT_EQ(mix2.k(), 2u);
  EXPECT_TRUE(same_tensors(mix2.experts[1], mix.experts[1]));
  auto ad = build_lora(slm, LoraConfig{2, LoraSites::all}, 4);
  testing::jitter(ad, 5, 0.1);
  save_lora(dir / "l.ckpt", ad, c);
  EXPECT_TRUE(same_tensors(load_lora(dir / "l.ckpt", slm), ad));
}

TEST(Checkpoint, RejectsWrongKindAndCorruption) {
  const auto dir = scratch("ckpt_bad");
  const auto slm = build_slm<float>(tiny_config(), 1);
  save_slm(dir / "s.ckpt", slm);
  EXPECT_THROW(load_pn<float>(dir / "s.ckpt"), IoError);
  {
    std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
    out << "SSLMCKPT";
  }
  EXPECT_THROW(load_slm<float>(dir / "trunc.ckpt"), IoError);
  {
    std::ofstream out(dir / "magic.ckpt", std::ios::binary);
    out << "NOTACKPT0000";
  }
  EXPECT_THROW(load_slm<float>(dir / "magic.ckpt"), IoError);
  auto other = build_slm<float>(tiny_config(13), 1);
  auto ad = build_lora(other, LoraConfig{1, LoraSites::mlp}, 1);
  save_lora(dir / "l.ckpt", ad, other.config);
  EXPECT_THROW(load_lora(dir / "l.ckpt", slm), ConfigError);
}

TEST(Specializer, MostFrequentClusterTiesGoLow) {
  const auto s = select_most_frequent(ClusterHistogram::from_counts({2, 5, 5, 1}));
  EXPECT_EQ(s.chosen_index, 1u);
  EXPECT_FALSE(s.uninformative);
  EXPECT_TRUE(select_most_frequent(ClusterHistogram::from_counts({3, 3})).uninformative);
}

TEST(Specializer, BestPretrainedPicksLowestValidationLoss) {
  auto c = tiny_config();
  std::vector<SlmParams<double>> experts = {build_slm<double>(c, 1), build_slm<double>(c, 2), build_slm<double>(c, 3)};
  std::vector<Window> val(1);
  val[0].doc_id = "v";
  val[0].tokens = {1, 2, 3, 4, 5};
  const auto a = select_best_pretrained(std::span<const SlmParams<double>>(experts), std::span<const Window>(val), 1);
  const auto b = select_best_pretrained(std::span<const SlmParams<double>>(experts), std::span<const Window>(val), 3);
  EXPECT_EQ(a.scores, b.scores);
  for (double s : a.scores) EXPECT_GE(s, a.scores[a.chosen_index]);
}

TEST(Specializer, StrategyNames) {
  EXPECT_EQ(parse_strategy("most_frequent"), SelectionStrategy::most_frequent_cluster);
  EXPECT_EQ(parse_strategy(to_string(SelectionStrategy::best_finetuned)), SelectionStrategy::best_finetuned);
  EXPECT_THROW(parse_strategy("bogus"), ConfigError);
}

}  // namespace
}  // namespace sslm
