#include "gmint/text/split.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmint/common/errors.h"
#include "gmint/common/random.h"

namespace gmint::text {

std::vector<bool> stratified_assignment(const std::vector<int>& labels, int num_classes, double ratio,
                                        std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("split ratio must be in (0, 1)");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) members.at(static_cast<std::size_t>(labels[i])).push_back(i);
  for (std::size_t c = 0; c < members.size(); ++c)
    if (members[c].size() < 2)
      throw DataError("cannot stratify: class " + std::to_string(c) + " has " + std::to_string(members[c].size()) +
                      " sample(s), need at least 2");

  // floor per class, then hand the remainder to the largest fractional parts.
  const auto total = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(labels.size())));
  std::vector<std::size_t> quota(members.size());
  std::vector<double> frac(members.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    double exact = ratio * static_cast<double>(members[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    frac[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++quota[order[i % order.size()]];

  Rng rng(seed);
  std::vector<bool> train(labels.size(), false);
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto shuffled = members[c];
    rng.shuffle(shuffled);
    for (std::size_t i = 0; i < quota[c]; ++i) train[shuffled[i]] = true;
  }
  return train;
}

CorpusSplit split(const Corpus& corpus, double ratio, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) labels.push_back(s.label);
  auto train = stratified_assignment(labels, corpus.num_classes, ratio, seed);
  CorpusSplit out;
  out.ratio = ratio;
  out.seed = seed;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i)
    (train[i] ? out.train_ids : out.test_ids).push_back(corpus.samples[i].id);
  return out;
}

}  // namespace gmint::text
