#pragma once

// Bridges detokenized draft text into the verifier's token space.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssd/error.hpp"

namespace ssd {

// Index into the verifier vocabulary.
using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenSeq encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::size_t size() const = 0;
};

// Whitespace-delimited words, one id per word. decode joins with single
// spaces, so decode(encode(s)) == s for whitespace-normalized s.
class WordTokenizer final : public Tokenizer {
 public:
  explicit WordTokenizer(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
        throw Error(ErrorKind::kInvalidInput, "duplicate word '" + words_[i] + "'");
      }
    }
  }

  TokenSeq encode(std::string_view text) const override {
    TokenSeq out;
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) {
      auto it = index_.find(word);
      if (it == index_.end()) throw Error(ErrorKind::kTokenize, "unknown word '" + word + "'");
      out.push_back(it->second);
    }
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out.push_back(' ');
      out.append(words_.at(static_cast<std::size_t>(ids[i])));
    }
    return out;
  }

  std::size_t size() const override { return words_.size(); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Subword-style tokenizer: greedy longest match over a fixed piece list.
class GreedyMergeTokenizer final : public Tokenizer {
 public:
  explicit GreedyMergeTokenizer(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      if (pieces_[i].empty()) throw Error(ErrorKind::kInvalidInput, "empty piece");
      if (!index_.emplace(pieces_[i], static_cast<TokenId>(i)).second) {
        throw Error(ErrorKind::kInvalidInput, "duplicate piece '" + pieces_[i] + "'");
      }
      max_len_ = std::max(max_len_, pieces_[i].size());
    }
  }

  TokenSeq encode(std::string_view text) const override {
    TokenSeq out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      bool matched = false;
      for (std::size_t len = std::min(max_len_, text.size() - pos); len > 0; --len) {
        auto it = index_.find(std::string(text.substr(pos, len)));
        if (it != index_.end()) {
          out.push_back(it->second);
          pos += len;
          matched = true;
          break;
        }
      }
      if (!matched) {
        throw Error(ErrorKind::kTokenize,
                    "no piece covers '" + std::string(1, text[pos]) + "' at offset " +
                        std::to_string(pos));
      }
    }
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const override {
    std::string out;
    for (TokenId id : ids) out.append(pieces_.at(static_cast<std::size_t>(id)));
    return out;
  }

  std::size_t size() const override { return pieces_.size(); }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_len_ = 0;
};

inline TokenSeq retokenize(std::string_view draft_text, const Tokenizer& tokenizer) {
  return tokenizer.encode(draft_text);
}

}  // namespace ssd
