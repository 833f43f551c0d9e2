#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace gmint::text {

struct Sample {
  std::string id;
  std::string text;
  int label = 0;  // contiguous 0-based class index

  bool operator==(const Sample&) const = default;
};

// Parameters of a generated corpus; recorded in the corpus metadata.
struct SynthSpec {
  std::string name = "synthetic";
  int num_classes = 2;
  int samples_per_class = 100;
  int vocab_size = 200;
  double class_signal_strength = 0.5;
  std::uint64_t seed = 0;
  int min_tokens = 12;
  int max_tokens = 20;
  double zipf_exponent = 1.0;
  std::string word_prefix = "w";

  bool operator==(const SynthSpec&) const = default;
};

nlohmann::ordered_json synth_spec_to_json(const SynthSpec& spec);
// Missing fields keep their defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct Corpus {
  std::string name;
  std::vector<Sample> samples;
  int num_classes = 0;
  // label_names[i] is the original label that was remapped to index i.
  std::vector<std::string> label_names;
  std::optional<SynthSpec> generation;

  // Throws DataError unless: non-empty, unique ids, every label in
  // [0, num_classes) and every class present, name free of ':'.
  void validate() const;
  std::unordered_map<std::string, std::size_t> index_by_id() const;

  bool operator==(const Corpus&) const = default;
};

enum class CorpusFormat { csv, jsonl };

// CSV: RFC-4180 with a header containing `text` and `label` (and optionally
// `id`). JSONL: one object per line with string `text` and string-or-integer
// `label` (optional `id`). Labels are remapped to contiguous indices, in
// numeric order when every label is an integer and lexicographic otherwise.
// Sample ids default to the 0-based row number. Errors are ParseError with
// the offending line.
Corpus ingest(const std::filesystem::path& path, CorpusFormat format, std::string name = {});
Corpus ingest_csv(std::istream& in, std::string name);
Corpus ingest_jsonl(std::istream& in, std::string name);

// Writes `<path>` as JSONL with integer labels plus `<stem>.meta.json`
// (name, num_classes, label remapping, generation spec).
void export_corpus(const Corpus& corpus, const std::filesystem::path& path);
// Reads an exported corpus, restoring metadata from the sidecar if present.
Corpus load_corpus(const std::filesystem::path& path);
std::filesystem::path metadata_path(const std::filesystem::path& corpus_path);

}  // namespace gmint::text
