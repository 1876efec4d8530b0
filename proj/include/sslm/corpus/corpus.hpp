// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sslm/core/error.hpp"
#include "sslm/core/rng.hpp"
#include "sslm/corpus/tokenizer.hpp"

namespace sslm {

enum class CorpusRole { generic, specialization };
enum class Split { train, heldout };

inline std::string to_string(CorpusRole r) {
  return r == CorpusRole::generic ? "generic" : "specialization";
}
inline std::string to_string(Split s) { return s == Split::train ? "train" : "heldout"; }

inline CorpusRole parse_role(const std::string& s) {
  if (s == "generic") return CorpusRole::generic;
  if (s == "specialization") return CorpusRole::specialization;
  throw ConfigError("unknown corpus role '" + s + "'");
}
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "heldout") return Split::heldout;
  throw ConfigError("unknown split '" + s + "'");
}

struct Document {
  std::string id;
  std::string domain;
  std::string text;
  std::vector<TokenId> tokens;
};

struct Corpus {
  std::vector<Document> documents;
  std::size_t vocab_size = 0;
  CorpusRole role = CorpusRole::generic;
  Split split = Split::train;

  std::size_t size() const { return documents.size(); }
  bool empty() const { return documents.empty(); }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.tokens.size();
    return n;
  }

  // Throws ConfigError if an id repeats or a token is out of range.
  void validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be > 1");
    std::unordered_set<std::string> seen;
    for (const auto& d : documents) {
      if (!seen.insert(d.id).second) throw ConfigError("duplicate document id '" + d.id + "'");
      if (d.domain.empty()) throw ConfigError("document '" + d.id + "' has no domain tag");
      for (TokenId t : d.tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
          throw ConfigError("document '" + d.id + "' has token " + std::to_string(t) +
                            " outside [0, " + std::to_string(vocab_size) + ")");
        }
      }
    }
  }
};

// A contiguous, non-overlapping slice of one document's tokens.
struct Window {
  std::string doc_id;
  std::size_t index = 0;  // position of this window within its document
  std::vector<TokenId> tokens;
  std::optional<std::size_t> cluster;

  std::string id() const { return doc_id + "#" + std::to_string(index); }
};

enum class DocumentUnit { line, file };

struct IngestOptions {
  DocumentUnit unit = DocumentUnit::line;
  CorpusRole role = CorpusRole::generic;
};

inline Document make_document(std::string id, std::string domain, std::string text,
                              const Tokenizer& tok) {
  Document d{std::move(id), std::move(domain), std::move(text), {}};
  d.tokens = tok.encode(d.text);
  return d;
}

inline Corpus ingest(std::span<const std::filesystem::path> paths, const std::string& domain,
                     const Tokenizer& tok, const IngestOptions& opts = {}) {
  if (paths.empty()) throw EmptyCorpus("no input files");
  if (domain.empty()) throw ConfigError("domain tag must be non-empty");
  Corpus corpus;
  corpus.vocab_size = tok.vocab_size();
  corpus.role = opts.role;
  corpus.split = Split::train;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open");
    const std::string name = path.generic_string();
    if (opts.unit == DocumentUnit::file) {
      std::ostringstream buf;
      buf << in.rdbuf();
      if (in.bad()) throw IoError(path.string(), "read failed");
      std::string text = buf.str();
      if (text.empty()) continue;
      corpus.documents.push_back(make_document(domain + ":" + name, domain, std::move(text), tok));
      continue;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      corpus.documents.push_back(make_document(
          domain + ":" + name + ":" + std::to_string(line_no), domain, std::move(line), tok));
    }
    if (in.bad()) throw IoError(path.string(), "read failed");
  }
  if (corpus.documents.empty()) throw EmptyCorpus("inputs contain no documents");
  corpus.validate();
  return corpus;
}

// Splits tokens into consecutive windows of context_length; the last may be shorter.
// Windows with fewer than two tokens carry no prediction target and are dropped.
inline std::vector<Window> window(const Document& doc, std::size_t context_length) {
  if (context_length < 2) throw ConfigError("context_length must be >= 2");
  std::vector<Window> out;
  const auto& toks = doc.tokens;
  std::size_t index = 0;
  for (std::size_t start = 0; start < toks.size(); start += context_length, ++index) {
    const std::size_t end = std::min(toks.size(), start + context_length);
    if (end - start < 2) continue;
    Window w;
    w.doc_id = doc.id;
    w.index = index;
    w.tokens.assign(toks.begin() + static_cast<std::ptrdiff_t>(start),
                    toks.begin() + static_cast<std::ptrdiff_t>(end));
    out.push_back(std::move(w));
  }
  return out;
}

inline std::vector<Window> window_corpus(const Corpus& corpus, std::size_t context_length) {
  std::vector<Window> out;
  for (const auto& d : corpus.documents) {
    auto ws = window(d, context_length);
    out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return out;
}

struct CorpusSplit {
  Corpus train;
  Corpus heldout;
};

// Holds out exactly n_docs documents chosen by a seeded shuffle; both halves keep the
// input order.
inline CorpusSplit split_heldout(const Corpus& corpus, std::size_t n_docs, std::uint64_t seed) {
  if (n_docs >= corpus.size()) {
    throw ConfigError("heldout size " + std::to_string(n_docs) + " must be < corpus size " +
                      std::to_string(corpus.size()));
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<char> held(corpus.size(), 0);
  for (std::size_t i = 0; i < n_docs; ++i) held[order[i]] = 1;

  CorpusSplit out;
  out.train.vocab_size = out.heldout.vocab_size = corpus.vocab_size;
  out.train.role = out.heldout.role = corpus.role;
  out.train.split = Split::train;
  out.heldout.split = Split::heldout;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    (held[i] ? out.heldout : out.train).documents.push_back(corpus.documents[i]);
  }
  return out;
}

// First n documents (in order); used to build the small specialization training sets.
inline Corpus take_documents(const Corpus& corpus, std::size_t n) {
  Corpus out = corpus;
  if (n < out.documents.size()) out.documents.resize(n);
  return out;
}

}  // namespace sslm
