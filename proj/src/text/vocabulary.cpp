#include "gmint/text/vocabulary.h"

#include <algorithm>
#include <map>

#include "gmint/common/errors.h"

namespace gmint::text {
namespace {

bool is_separator(unsigned char c) {
  if (c >= 0x80) return false;
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' ||
         (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
         (c >= 0x7b && c <= 0x7e);
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_separator(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
      continue;
    }
    current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[kPad] != kPadToken || tokens_[kUnk] != kUnkToken)
    throw DataError("vocabulary must start with the PAD and UNK markers");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, std::size_t max_size) {
  if (max_size < 3) throw DataError("vocabulary max_size must be at least 3, got " + std::to_string(max_size));
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[std::move(w)];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is lexicographically ordered, so a stable sort on frequency alone
  // leaves ties in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{std::string(Vocabulary::kPadToken), std::string(Vocabulary::kUnkToken)};
  for (auto& [word, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(word);
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size) {
  std::vector<std::string> texts;
  texts.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) texts.push_back(s.text);
  return build_vocab(texts, max_size);
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw DataError("tokenize: max_len must be at least 1");
  std::vector<int> ids;
  ids.reserve(max_len);
  for (const auto& w : split_words(text)) {
    if (ids.size() == max_len) break;
    ids.push_back(vocab.id(w));
  }
  ids.resize(max_len, Vocabulary::kPad);
  return ids;
}

}  // namespace gmint::text
