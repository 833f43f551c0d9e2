#include "gmint/text/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gmint/common/errors.h"
#include "gmint/common/random.h"

namespace gmint::text {
namespace {

class Categorical {
 public:
  explicit Categorical(const std::vector<double>& weights) : cdf_(weights.size()) {
    std::partial_sum(weights.begin(), weights.end(), cdf_.begin());
    for (auto& c : cdf_) c /= cdf_.back();
  }
  std::size_t draw(Rng& rng) const {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), rng.uniform());
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
  return w;
}

void check(const SynthSpec& s) {
  if (s.num_classes <= 0 || s.samples_per_class <= 0 || s.vocab_size <= 0)
    throw DataError("synthetic corpus: counts must be positive");
  if (s.vocab_size < s.num_classes) throw DataError("synthetic corpus: vocab_size must be >= num_classes");
  if (!(s.class_signal_strength >= 0.0 && s.class_signal_strength <= 1.0))
    throw DataError("synthetic corpus: class_signal_strength must be in [0, 1]");
  if (s.min_tokens <= 0 || s.max_tokens < s.min_tokens)
    throw DataError("synthetic corpus: need 0 < min_tokens <= max_tokens");
  if (s.zipf_exponent < 0.0) throw DataError("synthetic corpus: zipf_exponent must be non-negative");
  if (s.word_prefix.empty()) throw DataError("synthetic corpus: word_prefix must not be empty");
  for (char c : s.word_prefix)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')))
      throw DataError("synthetic corpus: word_prefix must be lowercase alphanumeric");
}

}  // namespace

Corpus synth_corpus(const SynthSpec& spec) {
  check(spec);
  const auto vocab = static_cast<std::size_t>(spec.vocab_size);
  const auto classes = static_cast<std::size_t>(spec.num_classes);
  const std::size_t digits = std::max<std::size_t>(4, std::to_string(vocab - 1).size());
  std::vector<std::string> words(vocab);
  for (std::size_t i = 0; i < vocab; ++i) {
    std::string n = std::to_string(i);
    words[i] = spec.word_prefix + std::string(digits - n.size(), '0') + n;
  }

  Rng rng(spec.seed);
  std::vector<std::size_t> shared_rank(vocab);
  std::iota(shared_rank.begin(), shared_rank.end(), 0);
  rng.shuffle(shared_rank);
  std::vector<std::size_t> block_order(vocab);
  std::iota(block_order.begin(), block_order.end(), 0);
  rng.shuffle(block_order);

  Categorical shared(zipf_weights(vocab, spec.zipf_exponent));
  std::vector<std::vector<std::size_t>> blocks(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t lo = c * vocab / classes, hi = (c + 1) * vocab / classes;
    blocks[c].assign(block_order.begin() + static_cast<long>(lo), block_order.begin() + static_cast<long>(hi));
  }
  std::vector<Categorical> class_dists;
  for (const auto& b : blocks) class_dists.emplace_back(zipf_weights(b.size(), spec.zipf_exponent));

  Corpus corpus;
  corpus.name = spec.name;
  corpus.num_classes = spec.num_classes;
  for (int c = 0; c < spec.num_classes; ++c) corpus.label_names.push_back(std::to_string(c));
  corpus.generation = spec;
  const std::size_t total = classes * static_cast<std::size_t>(spec.samples_per_class);
  corpus.samples.reserve(total);
  const auto span = static_cast<std::uint64_t>(spec.max_tokens - spec.min_tokens + 1);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t c = i % classes;
    const auto len = static_cast<std::size_t>(spec.min_tokens) + static_cast<std::size_t>(rng.below(span));
    std::string text;
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t word = rng.uniform() < spec.class_signal_strength ? blocks[c][class_dists[c].draw(rng)]
                                                                     : shared_rank[shared.draw(rng)];
      if (t) text.push_back(' ');
      text += words[word];
    }
    char index[32];
    std::snprintf(index, sizeof(index), "%06zu", i);
    corpus.samples.push_back({spec.name + "-" + index, std::move(text), static_cast<int>(c)});
  }
  corpus.validate();
  return corpus;
}

}  // namespace gmint::text
