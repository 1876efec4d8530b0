// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "sslm/core/error.hpp"

namespace sslm {

using TokenId = std::int32_t;

enum class TokenizerMode { byte, word };

// Deterministic text <-> token id mapping.
//
// Byte mode maps each UTF-8 byte to its value and reserves id 256 for padding, so
// V = 257 and decoding is exact. Word mode splits on ASCII whitespace and keeps the
// most frequent words (ties broken lexicographically) up to a vocabulary cap; ids 0
// and 1 are <pad> and <unk>, and decoding yields the words joined by single spaces.
class Tokenizer {
 public:
  static constexpr TokenId kBytePad = 256;

  static Tokenizer byte_level() { return Tokenizer(); }

  static Tokenizer learn_words(std::span<const std::string> texts, std::size_t max_vocab) {
    if (max_vocab < 3) throw ConfigError("word vocabulary cap must be >= 3");
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
      for (auto& w : split_words(text)) ++counts[w];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Tokenizer tok;
    tok.mode_ = TokenizerMode::word;
    tok.words_ = {"<pad>", "<unk>"};
    for (const auto& [word, count] : ranked) {
      if (tok.words_.size() >= max_vocab) break;
      tok.words_.push_back(word);
    }
    tok.rebuild_index();
    return tok;
  }

  TokenizerMode mode() const { return mode_; }

  std::size_t vocab_size() const { return mode_ == TokenizerMode::byte ? 257 : words_.size(); }

  TokenId pad_id() const { return mode_ == TokenizerMode::byte ? kBytePad : 0; }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> ids;
    if (mode_ == TokenizerMode::byte) {
      ids.reserve(text.size());
      for (unsigned char c : text) ids.push_back(static_cast<TokenId>(c));
      return ids;
    }
    for (auto& w : split_words(text)) {
      auto it = index_.find(w);
      ids.push_back(it == index_.end() ? 1 : it->second);
    }
    return ids;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    if (mode_ == TokenizerMode::byte) {
      for (TokenId id : ids) {
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
      }
      return out;
    }
    for (TokenId id : ids) {
      if (id <= 0 || static_cast<std::size_t>(id) >= words_.size()) continue;
      if (!out.empty()) out.push_back(' ');
      out += words_[static_cast<std::size_t>(id)];
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["mode"] = mode_ == TokenizerMode::byte ? "byte" : "word";
    j["vocab_size"] = vocab_size();
    if (mode_ == TokenizerMode::word) j["words"] = words_;
    return j;
  }

  static Tokenizer from_json(const nlohmann::json& j) {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "byte") return byte_level();
    if (mode != "word") throw ConfigError("tokenizer.mode: unknown mode '" + mode + "'");
    Tokenizer tok;
    tok.mode_ = TokenizerMode::word;
    tok.words_ = j.at("words").get<std::vector<std::string>>();
    if (tok.words_.size() < 2) throw ConfigError("tokenizer.words: missing special tokens");
    tok.rebuild_index();
    return tok;
  }

  static std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    auto is_space = [](char c) {
      return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      std::size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      if (j > i) words.emplace_back(text.substr(i, j - i));
      i = j;
    }
    return words;
  }

 private:
  Tokenizer() = default;

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 2; i < words_.size(); ++i) {
      index_.emplace(words_[i], static_cast<TokenId>(i));
    }
  }

  TokenizerMode mode_ = TokenizerMode::byte;
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace sslm
