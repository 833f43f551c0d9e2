#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmint/common/hashing.h"
#include "gmint/models/audited_model.h"
#include "gmint/probe/selector.h"
#include "gmint/text/corpus.h"

namespace gmint::probe {

enum class FeatureKind : std::uint8_t { gradient = 0, embedding = 1 };

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

// A sample together with the corpus it came from. Ids are only unique within
// a corpus, so everything downstream keys on "corpus:id".
struct ProbeSample {
  const text::Sample* sample = nullptr;
  std::string corpus;

  std::string qualified_id() const { return corpus + ":" + sample->id; }
};

std::vector<ProbeSample> probe_samples(const text::Corpus& corpus, const std::vector<std::string>& ids);

struct GradientFeature {
  std::string sample_id;  // qualified
  std::vector<double> feature;
  int membership_label = 0;
  std::string source_corpus;

  bool operator==(const GradientFeature&) const = default;
};

// Loss against the sample's own label, gradients of the selected tensors
// flattened row-major and concatenated in layer order.
GradientFeature per_sample_gradient(const models::AuditedModel& model, const ProbeSample& sample,
                                    const LayerSelector& selector);

// Penultimate activations of the model for the sample.
GradientFeature embedding_feature(const models::AuditedModel& model, const ProbeSample& sample);

// Probes every sample with its own tape, spread over `jobs` threads. Output
// order follows the input order.
std::vector<GradientFeature> extract_features(const models::AuditedModel& model,
                                              const std::vector<ProbeSample>& samples, FeatureKind kind,
                                              const LayerSelector& selector, std::size_t jobs = 1);

std::size_t feature_width(const models::AuditedModel& model, FeatureKind kind, const LayerSelector& selector);

// On-disk feature file (GMNT). Payloads are stored as f32.
struct FeatureFile {
  FeatureKind kind = FeatureKind::gradient;
  std::string selector_json;
  Digest model_fingerprint{};
  std::vector<GradientFeature> rows;
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

void write_features(const FeatureFile& file, const std::filesystem::path& path);
FeatureFile read_features(const std::filesystem::path& path);

}  // namespace gmint::probe
