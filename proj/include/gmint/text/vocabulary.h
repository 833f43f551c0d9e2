#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gmint/text/corpus.h"

namespace gmint::text {

// Lowercased ASCII words; whitespace and ASCII punctuation separate tokens
// and are dropped. Bytes >= 0x80 are kept inside tokens.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  // tokens[0] and tokens[1] must be the PAD and UNK markers.
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;  // kUnk when absent
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Most frequent tokens first, ties broken lexicographically, capped at
// max_size entries including PAD and UNK. max_size must be >= 3.
Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t max_size);
Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size);

// Exactly max_len ids: truncated, right-padded with PAD, unknowns as UNK.
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

}  // namespace gmint::text
