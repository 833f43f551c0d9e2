#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmint/text/corpus.h"

namespace gmint::text {

inline constexpr double kDefaultTrainRatio = 0.65;

struct CorpusSplit {
  std::vector<std::string> train_ids;  // the audited model's training set D
  std::vector<std::string> test_ids;   // held out
  double ratio = kDefaultTrainRatio;
  std::uint64_t seed = 0;
};

// Stratified, seeded partition. |train| = floor(ratio * N) and every class
// keeps within one sample of ratio * n_class. Ids are listed in corpus order.
// Throws DataError if a class has fewer than two samples.
CorpusSplit split(const Corpus& corpus, double ratio, std::uint64_t seed);

// The same allocation over bare labels: returns, for each position, whether it
// goes to the training side.
std::vector<bool> stratified_assignment(const std::vector<int>& labels, int num_classes, double ratio,
                                        std::uint64_t seed);

}  // namespace gmint::text
