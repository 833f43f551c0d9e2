#include "gmint/probe/mint_dataset.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gmint/common/errors.h"
#include "gmint/common/random.h"
#include "gmint/text/split.h"

namespace gmint::probe {

Normalization Normalization::fit(const std::vector<const std::vector<double>*>& rows) {
  if (rows.empty()) throw DataError("cannot fit a normalization on zero rows");
  const std::size_t d = rows.front()->size();
  Normalization n;
  n.mean.assign(d, 0.0);
  n.scale.assign(d, 1.0);
  for (const auto* r : rows)
    for (std::size_t j = 0; j < d; ++j) n.mean[j] += (*r)[j];
  for (auto& m : n.mean) m /= static_cast<double>(rows.size());
  std::vector<double> var(d, 0.0);
  for (const auto* r : rows)
    for (std::size_t j = 0; j < d; ++j) {
      double c = (*r)[j] - n.mean[j];
      var[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    double sd = std::sqrt(var[j] / static_cast<double>(rows.size()));
    if (sd > kStdFloor) n.scale[j] = sd;
  }
  return n;
}

std::vector<double> Normalization::apply(const std::vector<double>& row) const {
  if (row.size() != mean.size())
    throw DimensionError("feature has " + std::to_string(row.size()) + " columns, normalization expects " +
                         std::to_string(mean.size()));
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
  return out;
}

std::size_t MintDataset::count_label(int label) const {
  return static_cast<std::size_t>(std::count_if(features.begin(), features.end(),
                                                [&](const GradientFeature& f) { return f.membership_label == label; }));
}

MintDataset assemble_mint_dataset(std::vector<GradientFeature> members, std::vector<GradientFeature> externals,
                                  const Digest& model_fingerprint, const LayerSelector& selector, FeatureKind kind,
                                  const AssembleOptions& options) {
  if (members.empty() || externals.empty()) throw DataError("MINT dataset needs both member and external samples");
  std::unordered_set<std::string> member_ids;
  for (const auto& f : members) member_ids.insert(f.sample_id);
  for (const auto& f : externals)
    if (member_ids.count(f.sample_id))
      throw DataError("sample " + f.sample_id + " appears in both D and E; membership labels would contradict");

  MintDataset ds;
  ds.model_fingerprint = model_fingerprint;
  ds.selector = selector;
  ds.kind = kind;
  ds.features.reserve(members.size() + externals.size());
  for (auto& f : members) {
    f.membership_label = 1;
    ds.features.push_back(std::move(f));
  }
  for (auto& f : externals) {
    f.membership_label = 0;
    ds.features.push_back(std::move(f));
  }
  const std::size_t d = ds.features.front().feature.size();
  for (const auto& f : ds.features)
    if (f.feature.size() != d) throw DimensionError("feature vectors differ in length (" + f.sample_id + ")");

  std::sort(ds.features.begin(), ds.features.end(),
            [](const GradientFeature& a, const GradientFeature& b) { return a.sample_id < b.sample_id; });
  Rng(derive_seed(options.seed, "mint-shuffle")).shuffle(ds.features);

  std::vector<int> labels;
  for (const auto& f : ds.features) labels.push_back(f.membership_label);
  if (options.permute_labels) {
    Rng(derive_seed(options.seed, "label-permutation")).shuffle(labels);
    for (std::size_t i = 0; i < labels.size(); ++i) ds.features[i].membership_label = labels[i];
  }

  auto in_train = text::stratified_assignment(labels, 2, options.train_ratio, derive_seed(options.seed, "mint-split"));
  std::vector<const std::vector<double>*> train_features;
  for (std::size_t i = 0; i < in_train.size(); ++i) {
    (in_train[i] ? ds.train_rows : ds.test_rows).push_back(i);
    if (in_train[i]) train_features.push_back(&ds.features[i].feature);
  }
  ds.normalization = Normalization::fit(train_features);
  return ds;
}

MintDataset build_mint_dataset(const models::AuditedModel& model, const std::vector<ProbeSample>& d_subset,
                               const std::vector<ProbeSample>& e_subset, const LayerSelector& selector,
                               FeatureKind kind, const AssembleOptions& options, std::size_t jobs) {
  std::unordered_set<std::string> trained(model.training_ids.begin(), model.training_ids.end());
  std::unordered_set<std::string> d_ids;
  for (const auto& s : d_subset) {
    if (!trained.count(s.qualified_id()))
      throw DataError("D sample " + s.qualified_id() + " is not in the audited model's training set");
    d_ids.insert(s.qualified_id());
  }
  for (const auto& s : e_subset) {
    if (d_ids.count(s.qualified_id()))
      throw DataError("sample " + s.qualified_id() + " appears in both D and E; membership labels would contradict");
    if (trained.count(s.qualified_id()))
      throw DataError("E sample " + s.qualified_id() + " was used to train the audited model");
  }
  return assemble_mint_dataset(extract_features(model, d_subset, kind, selector, jobs),
                               extract_features(model, e_subset, kind, selector, jobs), model.params().fingerprint(),
                               selector, kind, options);
}

}  // namespace gmint::probe
