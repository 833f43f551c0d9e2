#pragma once

#include <cstdint>
#include <vector>

#include "gmint/probe/features.h"

namespace gmint::probe {

inline constexpr double kMintTrainRatio = 0.65;

// Per-column standardization. Columns whose std falls below the floor are
// centred but not scaled.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;

  static constexpr double kStdFloor = 1e-12;

  static Normalization fit(const std::vector<const std::vector<double>*>& rows);
  std::vector<double> apply(const std::vector<double>& row) const;
  bool operator==(const Normalization&) const = default;
};

struct MintDataset {
  std::vector<GradientFeature> features;  // shuffled
  Digest model_fingerprint{};
  LayerSelector selector;
  FeatureKind kind = FeatureKind::gradient;
  std::vector<std::size_t> train_rows;  // indices into features
  std::vector<std::size_t> test_rows;
  Normalization normalization;  // fitted on train_rows only

  std::size_t dim() const { return features.empty() ? 0 : features.front().feature.size(); }
  std::size_t count_label(int label) const;
  std::vector<double> normalized(std::size_t row) const { return normalization.apply(features.at(row).feature); }
};

struct AssembleOptions {
  std::uint64_t seed = 0;
  double train_ratio = kMintTrainRatio;
  // Shuffles membership labels after assembly; used for the no-leakage null.
  bool permute_labels = false;
};

// Labels the member rows 1 and the external rows 0, orders rows by id,
// shuffles them under the seed, applies a stratified MINT train/test split
// and fits the normalization on the train part.
MintDataset assemble_mint_dataset(std::vector<GradientFeature> members, std::vector<GradientFeature> externals,
                                  const Digest& model_fingerprint, const LayerSelector& selector, FeatureKind kind,
                                  const AssembleOptions& options);

// Probes D_subset (must be training samples of the model) and E_subset
// (must not be) and assembles the dataset.
MintDataset build_mint_dataset(const models::AuditedModel& model, const std::vector<ProbeSample>& d_subset,
                               const std::vector<ProbeSample>& e_subset, const LayerSelector& selector,
                               FeatureKind kind, const AssembleOptions& options, std::size_t jobs = 1);

}  // namespace gmint::probe
