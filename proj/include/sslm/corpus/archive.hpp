// SPDX-License-Identifier: Apache-2.0
#pragma once

// Corpus archive: JSON lines. The first line is a header object
//   {"format":"sslm.corpus","version":1,"vocab_size":V,"role":...,"split":...,
//    "provenance":{...}}
// and every following line is one document
//   {"id":"...","domain":"...","tokens":[...]}.
// The tokenizer is stored next to the archive as vocab.json.

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "sslm/core/error.hpp"
#include "sslm/corpus/corpus.hpp"
#include "sslm/corpus/tokenizer.hpp"

namespace sslm {

inline constexpr const char* kCorpusFormat = "sslm.corpus";
inline constexpr int kCorpusVersion = 1;

inline void write_corpus(const std::filesystem::path& path, const Corpus& corpus,
                         const nlohmann::json& provenance = nlohmann::json::object()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  nlohmann::json header = {{"format", kCorpusFormat},
                           {"version", kCorpusVersion},
                           {"vocab_size", corpus.vocab_size},
                           {"role", to_string(corpus.role)},
                           {"split", to_string(corpus.split)},
                           {"documents", corpus.size()},
                           {"provenance", provenance}};
  out << header.dump() << '\n';
  for (const auto& d : corpus.documents) {
    nlohmann::json rec = {{"id", d.id}, {"domain", d.domain}, {"tokens", d.tokens}};
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

struct CorpusArchive {
  Corpus corpus;
  nlohmann::json provenance;
};

// Document text is rebuilt from tokens when a tokenizer is supplied.
inline CorpusArchive read_corpus(const std::filesystem::path& path,
                                 const Tokenizer* tok = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string(), "missing header");
  CorpusArchive out;
  try {
    auto header = nlohmann::json::parse(line);
    if (header.at("format") != kCorpusFormat) throw IoError(path.string(), "not a corpus archive");
    if (header.at("version").get<int>() != kCorpusVersion) {
      throw IoError(path.string(), "unsupported corpus archive version");
    }
    out.corpus.vocab_size = header.at("vocab_size").get<std::size_t>();
    out.corpus.role = parse_role(header.at("role").get<std::string>());
    out.corpus.split = parse_split(header.at("split").get<std::string>());
    out.provenance = header.value("provenance", nlohmann::json::object());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto rec = nlohmann::json::parse(line);
      Document d;
      d.id = rec.at("id").get<std::string>();
      d.domain = rec.at("domain").get<std::string>();
      d.tokens = rec.at("tokens").get<std::vector<TokenId>>();
      if (tok) d.text = tok->decode(d.tokens);
      out.corpus.documents.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), std::string("malformed archive: ") + e.what());
  }
  out.corpus.validate();
  return out;
}

inline void write_tokenizer(const std::filesystem::path& path, const Tokenizer& tok) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << tok.to_json().dump(2) << '\n';
}

inline Tokenizer read_tokenizer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open");
  try {
    return Tokenizer::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), std::string("malformed vocab: ") + e.what());
  }
}

}  // namespace sslm
