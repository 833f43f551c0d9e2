#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gmint/auditor/mint_auditor.h"
#include "gmint/evaluation/protocol.h"
#include "gmint/models/audited_model.h"
#include "gmint/probe/features.h"
#include "gmint/probe/selector.h"
#include "gmint/text/corpus.h"
#include "json.hpp"

namespace gmint::cli {

inline constexpr int kConfigSchemaVersion = 1;

// Either a synthetic spec or a CSV/JSONL file to ingest.
struct CorpusSource {
  std::string name;
  std::optional<text::SynthSpec> synthetic;
  std::string path;  // as written in the config
  text::CorpusFormat format = text::CorpusFormat::jsonl;
  bool explicit_seed = false;  // synthetic seed given in the config file

  bool operator==(const CorpusSource&) const = default;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::optional<CorpusSource> target;
  std::vector<CorpusSource> externals;
  models::AuditedModelSpec model_spec;
  models::TrainConfig train_config;
  double split_ratio = 0.5;
  probe::LayerSelector selector = probe::LayerSelector::first(2);
  probe::FeatureKind feature_kind = probe::FeatureKind::gradient;
  auditor::AuditorConfig auditor;
  eval::SweepPlan sweep_plan = eval::SweepPlan::paper_default();
  std::string protocol = "intra";
  bool permute_labels = false;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  // Directory that relative corpus paths are resolved against.
  std::filesystem::path base_dir;

  void validate() const;  // throws ConfigError
  // Replaces the top-level seed and re-derives synthetic corpus seeds that
  // were not given explicitly.
  void set_seed(std::uint64_t seed);
  std::filesystem::path resolve(const std::string& corpus_path) const;
  eval::SessionConfig session_config() const;
  eval::ProtocolOptions protocol_options() const;
};

// Unknown keys and wrong types are ConfigError. Synthetic specs without a
// seed get one derived from the top-level seed.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& config);
nlohmann::ordered_json to_json(const CorpusSource& source);

// SHA-256 of the canonical (key-sorted, compact) serialization with
// output_dir and jobs removed, since neither affects any result.
std::string config_hash(const ExperimentConfig& config);

// Hashes of the configuration subset each artifact depends on; an artifact
// is stale when its recorded stage hash differs from the current one.
std::string corpus_stage_hash(const ExperimentConfig& config, const CorpusSource& source);
std::string model_stage_hash(const ExperimentConfig& config);
std::string features_stage_hash(const ExperimentConfig& config);
std::string auditor_stage_hash(const ExperimentConfig& config);
std::string sweep_stage_hash(const ExperimentConfig& config);

}  // namespace gmint::cli
