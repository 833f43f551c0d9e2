#include "gmint/cli/config.h"

#include <fstream>
#include <set>

#include "gmint/common/errors.h"
#include "gmint/common/hashing.h"
#include "gmint/common/random.h"
#include "gmint/models/model_io.h"

namespace gmint::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

text::CorpusFormat format_from_name(const std::string& name) {
  if (name == "csv") return text::CorpusFormat::csv;
  if (name == "jsonl") return text::CorpusFormat::jsonl;
  throw ConfigError("unknown corpus format '" + name + "' (expected csv or jsonl)");
}

std::string format_name(text::CorpusFormat f) { return f == text::CorpusFormat::csv ? "csv" : "jsonl"; }

CorpusSource source_from_json(const json& j, const std::string& where, std::uint64_t derived_seed) {
  check_keys(j, {"name", "synthetic", "path", "format"}, where);
  CorpusSource s;
  if (j.contains("synthetic") == j.contains("path"))
    throw ConfigError(where + " needs exactly one of 'synthetic' or 'path'");
  if (j.contains("synthetic")) {
    const auto& spec = j.at("synthetic");
    check_keys(spec,
               {"name", "num_classes", "samples_per_class", "vocab_size", "class_signal_strength", "seed",
                "min_tokens", "max_tokens", "zipf_exponent", "word_prefix"},
               where + ".synthetic");
    s.synthetic = text::synth_spec_from_json(spec);
    s.explicit_seed = spec.contains("seed");
    if (!s.explicit_seed) s.synthetic->seed = derived_seed;
    s.name = j.value("name", spec.value("name", std::string("synthetic")));
    s.synthetic->name = s.name;
  } else {
    s.path = j.at("path").get<std::string>();
    if (s.path.empty()) throw ConfigError(where + ".path is empty");
    auto ext = std::filesystem::path(s.path).extension().string();
    s.format = format_from_name(j.value("format", ext == ".csv" ? std::string("csv") : std::string("jsonl")));
    s.name = j.value("name", std::filesystem::path(s.path).stem().string());
  }
  return s;
}

json strip_seed(ordered_json j) {
  j.erase("seed");
  return j;
}

std::string hash_of(const json& j) { return to_hex(sha256(j.dump())); }

json canonical(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("jobs");
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version) + " (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  if (protocol != "intra" && protocol != "mixed")
    throw ConfigError("protocol must be intra or mixed (got '" + protocol + "')");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
  if (jobs == 0) throw ConfigError("jobs must be at least 1");
  if (train_config.epochs < 1 || train_config.batch_size < 1)
    throw ConfigError("training needs epochs >= 1 and batch_size >= 1");
  auditor.validate();
  model_spec.validate();
  std::set<std::string> names;
  if (target) names.insert(target->name);
  for (const auto& e : externals)
    if (!names.insert(e.name).second) throw ConfigError("corpus name '" + e.name + "' is used twice");
  for (const auto& n : names)
    if (n.empty() || n.find(':') != std::string::npos || n.find('/') != std::string::npos)
      throw ConfigError("corpus name '" + n + "' must be non-empty and free of ':' and '/'");
}

void ExperimentConfig::set_seed(std::uint64_t new_seed) {
  seed = new_seed;
  if (target && target->synthetic && !target->explicit_seed) target->synthetic->seed = derive_seed(seed, "corpus", 0);
  for (std::size_t i = 0; i < externals.size(); ++i)
    if (externals[i].synthetic && !externals[i].explicit_seed)
      externals[i].synthetic->seed = derive_seed(seed, "corpus", i + 1);
}

std::filesystem::path ExperimentConfig::resolve(const std::string& corpus_path) const {
  std::filesystem::path p(corpus_path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

eval::SessionConfig ExperimentConfig::session_config() const {
  eval::SessionConfig s;
  s.model_spec = model_spec;
  s.train_config = train_config;
  s.split_ratio = split_ratio;
  s.seed = derive_seed(seed, "session");
  return s;
}

eval::ProtocolOptions ExperimentConfig::protocol_options() const {
  eval::ProtocolOptions o;
  o.selector = selector;
  o.feature_kind = feature_kind;
  o.auditor = auditor;
  o.plan = sweep_plan;
  o.seed = derive_seed(seed, "protocol");
  o.jobs = jobs;
  o.permute_labels = permute_labels;
  return o;
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    check_keys(j,
               {"schema_version", "seed", "output_dir", "target", "externals", "protocol", "model", "training",
                "split_ratio", "selector", "feature_kind", "auditor", "sweep", "permute_labels", "jobs"},
               "config");
    ExperimentConfig c;
    c.base_dir = base_dir;
    if (!j.contains("schema_version")) throw ConfigError("config is missing schema_version");
    c.schema_version = j.at("schema_version").get<int>();
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", std::string());
    if (j.contains("target")) c.target = source_from_json(j.at("target"), "target", derive_seed(c.seed, "corpus", 0));
    if (j.contains("externals")) {
      const auto& list = j.at("externals");
      if (!list.is_array()) throw ConfigError("externals must be an array");
      for (std::size_t i = 0; i < list.size(); ++i)
        c.externals.push_back(source_from_json(list[i], "externals[" + std::to_string(i) + "]",
                                               derive_seed(c.seed, "corpus", i + 1)));
    }
    c.protocol = j.value("protocol", c.protocol);
    if (j.contains("model")) {
      check_keys(j.at("model"), {"kind", "vocab_size", "max_len", "embed_dim", "hidden_dim", "num_heads", "num_classes"},
                 "model");
      c.model_spec = models::spec_from_json(j.at("model"));
    }
    if (j.contains("training")) {
      check_keys(j.at("training"), {"epochs", "batch_size", "learning_rate"}, "training");
      c.train_config = models::train_config_from_json(j.at("training"));
    }
    c.split_ratio = j.value("split_ratio", c.split_ratio);
    if (j.contains("selector")) c.selector = probe::LayerSelector::parse(j.at("selector").get<std::string>());
    if (j.contains("feature_kind")) c.feature_kind = probe::parse_feature_kind(j.at("feature_kind").get<std::string>());
    if (j.contains("auditor")) {
      check_keys(j.at("auditor"), {"hidden_layers", "epochs", "batch_size", "learning_rate"}, "auditor");
      c.auditor = auditor::auditor_config_from_json(j.at("auditor"));
    }
    if (j.contains("sweep")) {
      check_keys(j.at("sweep"), {"size_pairs", "repetitions", "clamp_to_availability"}, "sweep");
      c.sweep_plan = eval::sweep_plan_from_json(j.at("sweep"));
    }
    c.permute_labels = j.value("permute_labels", c.permute_labels);
    c.jobs = j.value("jobs", c.jobs);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

ordered_json to_json(const CorpusSource& s) {
  ordered_json j{{"name", s.name}};
  if (s.synthetic) {
    j["synthetic"] = text::synth_spec_to_json(*s.synthetic);
  } else {
    j["path"] = s.path;
    j["format"] = format_name(s.format);
  }
  return j;
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json externals = ordered_json::array();
  for (const auto& e : c.externals) externals.push_back(to_json(e));
  return ordered_json{{"schema_version", c.schema_version},
                      {"seed", c.seed},
                      {"output_dir", c.output_dir.string()},
                      {"target", c.target ? to_json(*c.target) : ordered_json(nullptr)},
                      {"externals", externals},
                      {"protocol", c.protocol},
                      {"model", strip_seed(models::to_json(c.model_spec))},
                      {"training", strip_seed(models::to_json(c.train_config))},
                      {"split_ratio", c.split_ratio},
                      {"selector", c.selector.to_string()},
                      {"feature_kind", probe::to_string(c.feature_kind)},
                      {"auditor", strip_seed(auditor::to_json(c.auditor))},
                      {"sweep", eval::to_json(c.sweep_plan)},
                      {"permute_labels", c.permute_labels},
                      {"jobs", c.jobs}};
}

std::string config_hash(const ExperimentConfig& config) { return hash_of(canonical(config)); }

std::string corpus_stage_hash(const ExperimentConfig&, const CorpusSource& source) {
  return hash_of(json{{"stage", "corpus"}, {"source", to_json(source)}});
}

std::string model_stage_hash(const ExperimentConfig& c) {
  auto j = canonical(c);
  return hash_of(json{{"stage", "model"},
                      {"corpus", corpus_stage_hash(c, c.target.value_or(CorpusSource{}))},
                      {"seed", c.seed},
                      {"model", j["model"]},
                      {"training", j["training"]},
                      {"split_ratio", c.split_ratio}});
}

std::string features_stage_hash(const ExperimentConfig& c) {
  auto j = canonical(c);
  json externals = json::array();
  if (c.protocol == "mixed")
    for (const auto& e : c.externals) externals.push_back(corpus_stage_hash(c, e));
  return hash_of(json{{"stage", "features"},
                      {"model", model_stage_hash(c)},
                      {"selector", c.feature_kind == probe::FeatureKind::gradient ? j["selector"] : json(nullptr)},
                      {"feature_kind", j["feature_kind"]},
                      {"sweep", j["sweep"]},
                      {"protocol", c.protocol},
                      {"externals", externals}});
}

std::string auditor_stage_hash(const ExperimentConfig& c) {
  auto j = canonical(c);
  return hash_of(json{{"stage", "auditor"},
                      {"features", features_stage_hash(c)},
                      {"auditor", j["auditor"]},
                      {"permute_labels", c.permute_labels}});
}

std::string sweep_stage_hash(const ExperimentConfig& c) {
  auto j = canonical(c);
  return hash_of(json{{"stage", "sweep"},
                      {"features", features_stage_hash(c)},
                      {"auditor", j["auditor"]},
                      {"permute_labels", c.permute_labels}});
}

}  // namespace gmint::cli
