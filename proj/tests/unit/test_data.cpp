#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "sslm/clustering/artifact.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/clustering/kmeans.hpp"
#include "sslm/corpus/archive.hpp"
#include "sslm/corpus/synthetic.hpp"
#include "sslm/sampler/importance.hpp"
#include "sslm/sampler/resample.hpp"

namespace sslm {
namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("sslm_unit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TEST(Tokenizer, ByteLevelRoundTrip) {
  const auto tok = Tokenizer::byte_level();
  const std::string text = "caf\xc3\xa9 \t\n~";
  EXPECT_EQ(tok.decode(tok.encode(text)), text);
  EXPECT_EQ(tok.vocab_size(), 257u);
}

TEST(Tokenizer, WordVocabularyCapsAndMapsUnknowns) {
  const std::vector<std::string> texts = {"a b b c c c", "c d"};
  const auto tok = Tokenizer::learn_words(texts, 4);
  EXPECT_LE(tok.vocab_size(), 4u);
  const auto ids = tok.encode("c zzz");
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_NE(ids[0], ids[1]);
  const auto j = tok.to_json();
  EXPECT_EQ(Tokenizer::from_json(j).encode("c b a"), tok.encode("c b a"));
}

TEST(Corpus, IngestLinesAndFilesWithDomainTags) {
  const auto dir = scratch("ingest");
  std::ofstream(dir / "a.txt") << "first line\n\nsecond line\n";
  std::ofstream(dir / "b.txt") << "whole file\nstill same doc\n";
  const auto tok = Tokenizer::byte_level();
  const std::vector<std::filesystem::path> a = {dir / "a.txt"}, b = {dir / "b.txt"};
  const auto lines = ingest(a, "news", tok, {DocumentUnit::line, CorpusRole::generic});
  EXPECT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines.documents[1].domain, "news");
  const auto files = ingest(b, "law", tok, {DocumentUnit::file, CorpusRole::specialization});
  EXPECT_EQ(files.size(), 1u);
  EXPECT_EQ(files.role, CorpusRole::specialization);
  const std::vector<std::filesystem::path> missing = {dir / "nope.txt"};
  EXPECT_THROW(ingest(missing, "x", tok, {}), IoError);
  const auto empty = dir / "empty.txt";
  std::ofstream(empty) << "";
  const std::vector<std::filesystem::path> e = {empty};
  EXPECT_THROW(ingest(e, "x", tok, {}), EmptyCorpus);
}

TEST(Corpus, WindowsPartitionTokens) {
  Document d{"doc", "dom", "", {}};
  for (int i = 0; i < 23; ++i) d.tokens.push_back(i % 7);
  const auto ws = window(d, 5);
  std::vector<TokenId> joined;
  for (const auto& w : ws) {
    EXPECT_LE(w.tokens.size(), 5u);
    joined.insert(joined.end(), w.tokens.begin(), w.tokens.end());
  }
  // 23 = 4 * 5 + 3; the trailing 3-token window is kept.
  EXPECT_EQ(joined, d.tokens);
  EXPECT_EQ(ws.back().id(), "doc#4");
  Document tiny{"t", "dom", "", {1, 2, 3, 4, 5, 6}};
  EXPECT_EQ(window(tiny, 5).size(), 1u);  // a 1-token tail carries no target
}

TEST(Corpus, HeldoutSplitIsDisjointAndDeterministic) {
  Corpus c;
  c.vocab_size = 257;
  for (int i = 0; i < 30; ++i) c.documents.push_back({"d" + std::to_string(i), "x", "", {1, 2}});
  const auto a = split_heldout(c, 7, 5), b = split_heldout(c, 7, 5);
  EXPECT_EQ(a.heldout.size(), 7u);
  EXPECT_EQ(a.train.size(), 23u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(a.heldout.documents[i].id, b.heldout.documents[i].id);
  std::set<std::string> ids;
  for (const auto& d : a.train.documents) ids.insert(d.id);
  for (const auto& d : a.heldout.documents) EXPECT_FALSE(ids.count(d.id));
  EXPECT_THROW(split_heldout(c, 30, 1), ConfigError);
}

TEST(Archive, CorpusRoundTripPreservesEverything) {
  const auto dir = scratch("archive");
  const auto tok = Tokenizer::byte_level();
  Corpus c;
  c.vocab_size = tok.vocab_size();
  c.role = CorpusRole::specialization;
  c.split = Split::heldout;
  c.documents.push_back(make_document("x:1", "law", "quoted \"text\"\nwith newline", tok));
  c.documents.push_back(make_document("x:2", "med", "second", tok));
  write_corpus(dir / "c.jsonl", c, {{"seed", 3}});
  const auto back = read_corpus(dir / "c.jsonl", &tok);
  ASSERT_EQ(back.corpus.size(), 2u);
  EXPECT_EQ(back.corpus.documents[0].text, c.documents[0].text);
  EXPECT_EQ(back.corpus.documents[1].tokens, c.documents[1].tokens);
  EXPECT_EQ(back.corpus.role, CorpusRole::specialization);
  EXPECT_EQ(back.corpus.split, Split::heldout);
  EXPECT_EQ(back.provenance.at("seed"), 3);
  EXPECT_EQ(corpus_hash(back.corpus), corpus_hash(c));
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  EXPECT_THROW(read_corpus(dir / "bad.jsonl"), IoError);
}

TEST(Embedding, NormalizedAndDeterministic) {
  HashedNgramEmbedder e;
  e.dim = 32;
  const std::vector<TokenId> t = {1, 2, 3, 1, 2, 3};
  const auto v = e(t);
  double n = 0;
  for (double x : v) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_EQ(v, e(t));
  EXPECT_THROW(e(std::span<const TokenId>()), EmptyInput);
}

std::vector<EmbeddingVector> blobs(std::size_t per, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::vector<double>> centers = {{5, 0}, {0, 5}, {-5, -5}};
  std::vector<EmbeddingVector> out;
  for (const auto& c : centers) {
    for (std::size_t i = 0; i < per; ++i) out.push_back({c[0] + 0.3 * rng.normal(), c[1] + 0.3 * rng.normal()});
  }
  return out;
}

TEST(KMeans, RecoversSeparatedBlobs) {
  const auto v = blobs(40, 3);
  const auto c = kmeans(v, 3, 50, 9);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 1; i < 40; ++i) EXPECT_EQ(c.labels[b * 40 + i], c.labels[b * 40]);
  }
  EXPECT_NE(c.labels[0], c.labels[40]);
  EXPECT_NE(c.labels[40], c.labels[80]);
  for (std::size_t i = 1; i < c.inertia_history.size(); ++i) {
    EXPECT_LE(c.inertia_history[i], c.inertia_history[i - 1] + 1e-12);
  }
}

TEST(KMeans, DeterministicAndValidated) {
  const auto v = blobs(10, 4);
  EXPECT_EQ(kmeans(v, 3, 20, 1).labels, kmeans(v, 3, 20, 1).labels);
  const std::vector<EmbeddingVector> same(5, EmbeddingVector{1.0, 2.0});
  EXPECT_THROW(kmeans(same, 2, 10, 1), ConfigError);
  EXPECT_THROW(kmeans(std::span<const EmbeddingVector>(), 2, 10, 1), EmptyInput);
}

TEST(ClusteringArtifact, RoundTripAssignsIdentically) {
  const auto dir = scratch("clusters");
  HashedNgramEmbedder e;
  e.dim = 16;
  std::vector<EmbeddingVector> vecs;
  std::vector<std::string> ids;
  Rng rng(2);
  std::vector<std::vector<TokenId>> seqs;
  for (int i = 0; i < 30; ++i) {
    std::vector<TokenId> s;
    for (int j = 0; j < 8; ++j) s.push_back(static_cast<TokenId>(rng.below(5) + (i % 3) * 5));
    vecs.push_back(e(s));
    ids.push_back("w" + std::to_string(i));
    seqs.push_back(s);
  }
  const auto c = kmeans(vecs, ids, 3, 30, 5);
  save_clustering(dir / "c.bin", c, e);
  const auto back = load_clustering(dir / "c.bin");
  EXPECT_EQ(back.clustering.k, 3u);
  EXPECT_EQ(back.embedder.dim, 16u);
  EXPECT_EQ(back.clustering.assignments, c.assignments);
  for (const auto& s : seqs) EXPECT_EQ(assign(back.embedder(s), back.clustering), assign(e(s), c));
}

TEST(Histogram, EntropyOfUniformIsLogK) {
  for (std::size_t k : {1u, 2u, 4u, 16u, 1024u}) {
    const auto h = ClusterHistogram::from_counts(std::vector<std::size_t>(k, 3));
    EXPECT_NEAR(entropy(h), std::log(static_cast<double>(k)), 1e-12);
  }
  EXPECT_NEAR(entropy(ClusterHistogram::from_counts({5, 0, 0})), 0.0, 1e-15);
}

// Generic windows 0..n-1 with cluster labels, plus a per-window loss.
struct Enumerable {
  std::vector<Window> windows;
  std::vector<double> loss;
  std::vector<std::size_t> labels;
};

Enumerable enumerable(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  Enumerable e;
  for (std::size_t i = 0; i < n; ++i) {
    Window w;
    w.doc_id = "g" + std::to_string(i);
    w.tokens = {1, 2};
    w.cluster = i < k ? i : rng.below(k);  // every cluster supported
    e.labels.push_back(*w.cluster);
    e.loss.push_back(0.1 + 3.0 * counter_uniform(seed, i));
    e.windows.push_back(std::move(w));
  }
  return e;
}

TEST(Importance, WeightedLossEqualsTwoStageExpectation) {
  const auto e = enumerable(97, 4, 11);
  const auto gen = histogram_from_labels(e.labels, 4);
  const auto spec = ClusterHistogram::from_counts({1, 7, 0, 2});
  const auto w = importance_weights(spec, gen);
  std::vector<std::pair<std::size_t, double>> per;
  for (std::size_t i = 0; i < e.windows.size(); ++i) per.emplace_back(e.labels[i], e.loss[i]);
  // Exact expectation: P(x) = spec(c(x)) / |c(x)|.
  double exact = 0;
  for (std::size_t i = 0; i < e.windows.size(); ++i) {
    exact += spec.frequencies[e.labels[i]] / static_cast<double>(gen.counts[e.labels[i]]) * e.loss[i];
  }
  EXPECT_NEAR(weighted_loss(per, w), exact, 1e-12);
  const auto same = importance_weights(gen, gen);
  for (double x : same.weights) EXPECT_EQ(x, 1.0);
}

TEST(Importance, UnsupportedClusterIsAnError) {
  const auto gen = ClusterHistogram::from_counts({4, 0});
  const auto spec = ClusterHistogram::from_counts({1, 1});
  EXPECT_THROW(importance_weights(spec, gen), UnsupportedCluster);
}

TEST(Resample, EmpiricalHistogramMatchesPlan) {
  const auto e = enumerable(80, 4, 12);
  const auto spec = ClusterHistogram::from_frequencies({0.1, 0.2, 0.3, 0.4});
  const auto plan = make_plan(spec, 100000, 77);
  const auto set = resample(e.windows, plan);
  std::vector<std::size_t> labels;
  for (const auto& w : set.windows) labels.push_back(*w.cluster);
  const auto emp = histogram_from_labels(labels, 4);
  EXPECT_LE(total_variation(emp.frequencies, plan.probabilities), 0.01);
  // Within a cluster draws are uniform over members (six-sigma binomial band).
  const auto gen = histogram_from_labels(e.labels, 4);
  std::map<std::size_t, std::size_t> hits;
  for (auto i : set.source_index) ++hits[i];
  for (std::size_t i = 0; i < e.windows.size(); ++i) {
    const double expected = plan.probabilities[e.labels[i]] / static_cast<double>(gen.counts[e.labels[i]]) * 100000.0;
    EXPECT_LE(std::abs(static_cast<double>(hits[i]) - expected), 6.0 * std::sqrt(expected)) << i;
  }
}

TEST(Resample, DeterministicPerSeedAndPrefixStable) {
  const auto e = enumerable(40, 4, 13);
  const auto spec = ClusterHistogram::from_counts({3, 1, 1, 5});
  const auto a = resample(e.windows, make_plan(spec, 500, 5));
  const auto b = resample(e.windows, make_plan(spec, 200, 5));
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(a.source_index[i], b.source_index[i]);
  EXPECT_NE(resample(e.windows, make_plan(spec, 200, 6)).source_index, b.source_index);
}

TEST(Resample, MissingSupportAndSmoothing) {
  auto e = enumerable(20, 2, 14);
  const auto spec = ClusterHistogram::from_counts({1, 0, 3});
  EXPECT_THROW(resample(e.windows, make_plan(spec, 10, 1)), UnsupportedCluster);
  const auto gen = ClusterHistogram::from_counts({10, 10, 0});
  const auto plan = make_plan(spec, 10, 1, &gen, 1.0);
  EXPECT_NEAR(plan.probabilities[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(plan.probabilities[1], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(plan.probabilities[2], 0.0);
}

TEST(Synthetic, SourcesAreDistinctAndDeterministic) {
  SyntheticConfig cfg;
  const auto a = make_synthetic_sources(cfg), b = make_synthetic_sources(cfg);
  ASSERT_EQ(a.size(), 4u);
  const std::vector<double> mix = {1, 1, 1, 1};
  EXPECT_EQ(sample_mixture(a, mix, 10, 3), sample_mixture(b, mix, 10, 3));
  const auto docs = sample_mixture(a, std::vector<double>{0, 0, 1, 0}, 5, 4);
  for (const auto& [d, text] : docs) {
    EXPECT_EQ(d, 2u);
    EXPECT_FALSE(text.empty());
  }
}

}  // namespace
}  // namespace sslm
