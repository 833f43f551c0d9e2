#include "gmint/cli/commands.h"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "gmint/common/errors.h"
#include "gmint/common/hashing.h"
#include "gmint/evaluation/protocol.h"
#include "gmint/probe/mint_dataset.h"
#include "gmint/text/synthetic.h"

namespace gmint::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::string kModelStem = "model/model";
const std::string kFeaturesFile = "features/features.gmnt";
const std::string kFeaturesMeta = "features/features.json";
const std::string kAuditorStem = "auditor/auditor";

std::string corpus_role(const std::string& name) { return "corpus:" + name; }
std::string corpus_meta_role(const std::string& name) { return "corpus-meta:" + name; }
fs::path corpus_file(const std::string& name) { return fs::path("corpora") / (name + ".jsonl"); }

ordered_json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot read " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

void write_json(const fs::path& path, const ordered_json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

// Adds the config hash to a JSON artifact written by a library routine.
void stamp(const fs::path& path, const std::string& hash) {
  auto j = read_json(path);
  j["config_hash"] = hash;
  write_json(path, j);
}

const CorpusSource& target_source(const ExperimentConfig& c) {
  if (!c.target) throw ConfigError("config has no target corpus");
  return *c.target;
}

text::Corpus load_corpus_artifact(Workspace& ws, const CorpusSource& source) {
  auto hash = corpus_stage_hash(ws.config(), source);
  auto path = ws.index().require(corpus_role(source.name), hash);
  ws.index().require(corpus_meta_role(source.name), hash);
  return text::load_corpus(path);
}

struct LoadedSession {
  std::unique_ptr<text::Corpus> target;
  std::vector<std::unique_ptr<text::Corpus>> externals;
  eval::AuditedSession session;
  eval::SamplePools pools;
};

LoadedSession load_session(Workspace& ws) {
  const auto& c = ws.config();
  LoadedSession s;
  s.target = std::make_unique<text::Corpus>(load_corpus_artifact(ws, target_source(c)));
  auto hash = model_stage_hash(c);
  auto params = ws.index().require("model", hash);
  ws.index().require("model-meta", hash);
  auto stem = params;
  s.session = eval::session_from_model(*s.target, models::AuditedModel::load(stem.replace_extension()));
  if (c.protocol == "mixed") {
    if (c.externals.empty()) throw ConfigError("mixed protocol needs at least one external corpus");
    std::vector<const text::Corpus*> others;
    for (const auto& e : c.externals) {
      s.externals.push_back(std::make_unique<text::Corpus>(load_corpus_artifact(ws, e)));
      others.push_back(s.externals.back().get());
    }
    s.pools = eval::SamplePools::mixed(s.session, others);
  } else {
    s.pools = eval::SamplePools::intra(s.session);
  }
  return s;
}

struct LoadedFeatures {
  probe::FeatureFile file;
  eval::CellResult cell;
};

LoadedFeatures load_features(Workspace& ws) {
  auto hash = features_stage_hash(ws.config());
  auto path = ws.index().require("features", hash);
  auto meta = read_json(ws.index().require("features-meta", hash));
  LoadedFeatures f;
  f.file = probe::read_features(path);
  f.cell.index = meta.at("cell_index").get<std::size_t>();
  f.cell.size_index = meta.at("size_index").get<std::size_t>();
  f.cell.repetition = meta.at("repetition").get<std::size_t>();
  f.cell.sizes = {meta.at("n_d").get<std::size_t>(), meta.at("n_e").get<std::size_t>()};
  f.cell.seed = meta.at("cell_seed").get<std::uint64_t>();
  return f;
}

probe::MintDataset dataset_from(const LoadedFeatures& f, const eval::ProtocolOptions& options) {
  std::vector<probe::GradientFeature> members, externals;
  for (const auto& row : f.file.rows) (row.membership_label == 1 ? members : externals).push_back(row);
  return eval::assemble_cell(f.cell, std::move(members), std::move(externals), f.file.model_fingerprint, options);
}

void record_report(Workspace& ws, const eval::AuditReport& report, const std::string& dir, const std::string& role,
                   const std::string& stage_hash) {
  for (const auto& c : report.cells)
    ws.index().record(role + ".roc." + std::to_string(c.index), fs::path(dir) / eval::roc_path(c), ws.config_hash(),
                      stage_hash);
  ws.index().record(role, fs::path(dir) / "report.json", ws.config_hash(), stage_hash);
  ws.index().save();
}

void print_sizes(std::ostream& out, const eval::AuditReport& report) {
  for (const auto& s : report.sizes)
    out << "  size (" << s.sizes.n_d << ", " << s.sizes.n_e << "): mean AUC " << std::fixed << std::setprecision(4)
        << s.mean_auc << " (std " << s.std_auc << ", " << s.aucs.size() << " repetition"
        << (s.aucs.size() == 1 ? "" : "s") << ")\n";
  out.unsetf(std::ios::fixed);
}

class DiskCellStore : public eval::CellStore {
 public:
  DiskCellStore(Workspace& ws, std::string stage_hash) : ws_(ws), stage_hash_(std::move(stage_hash)) {}

  std::optional<eval::CellResult> find(std::size_t index) override {
    auto role = "sweep.cell." + std::to_string(index);
    if (!ws_.index().valid(role, stage_hash_)) return std::nullopt;
    ++reused;
    return eval::cell_from_json(read_json(ws_.root() / ws_.index().entries().at(role).path));
  }

  void put(const eval::CellResult& cell) override {
    auto rel = fs::path("sweep/cells") / (std::to_string(cell.index) + ".json");
    auto j = eval::cell_to_json(cell, true);
    j["config_hash"] = ws_.config_hash();
    write_json(ws_.root() / rel, j);
    ws_.index().record("sweep.cell." + std::to_string(cell.index), rel, ws_.config_hash(), stage_hash_);
    ws_.index().save();
    ++computed;
  }

  std::size_t reused = 0;
  std::size_t computed = 0;

 private:
  Workspace& ws_;
  std::string stage_hash_;
};

}  // namespace

Workspace::Workspace(ExperimentConfig config, std::ostream& out)
    : config_(std::move(config)), config_hash_(cli::config_hash(config_)), index_(config_.output_dir), out_(out) {
  if (config_.output_dir.empty()) throw ConfigError("no output directory: set output_dir or pass --output");
  config_.validate();
  lock_ = std::make_unique<OutputLock>(config_.output_dir);
  index_ = ArtifactIndex::open(config_.output_dir);
  auto j = to_json(config_);
  j["config_hash"] = config_hash_;
  write_json(config_.output_dir / "config.json", j);
}

void cmd_gen_data(Workspace& ws) {
  const auto& c = ws.config();
  std::vector<CorpusSource> sources{target_source(c)};
  sources.insert(sources.end(), c.externals.begin(), c.externals.end());
  for (const auto& source : sources) {
    text::Corpus corpus;
    if (source.synthetic) {
      corpus = text::synth_corpus(*source.synthetic);
    } else {
      auto path = c.resolve(source.path);
      if (!fs::exists(path)) throw DependencyError("corpus file " + path.string() + " does not exist");
      corpus = text::ingest(path, source.format, source.name);
    }
    corpus.validate();
    auto rel = corpus_file(source.name);
    fs::create_directories(ws.root() / rel.parent_path());
    text::export_corpus(corpus, ws.root() / rel);
    auto meta = text::metadata_path(rel);
    stamp(ws.root() / meta, ws.config_hash());
    auto hash = corpus_stage_hash(c, source);
    ws.index().record(corpus_role(source.name), rel, ws.config_hash(), hash);
    ws.index().record(corpus_meta_role(source.name), meta, ws.config_hash(), hash);
    spdlog::info("corpus {}: {} samples, {} classes", corpus.name, corpus.samples.size(), corpus.num_classes);
    ws.out() << "gen-data: " << rel.generic_string() << " (" << corpus.samples.size() << " samples)\n";
  }
  ws.index().save();
}

void cmd_train_target(Workspace& ws) {
  const auto& c = ws.config();
  auto target = load_corpus_artifact(ws, target_source(c));
  spdlog::info("training {} on {} ({} samples)", models::to_string(c.model_spec.kind), target.name,
               target.samples.size());
  auto session = eval::train_session(target, c.session_config());
  fs::create_directories(ws.root() / "model");
  session.model.save(ws.root() / kModelStem);
  stamp(ws.root() / (kModelStem + ".json"), ws.config_hash());
  auto hash = model_stage_hash(c);
  ws.index().record("model", kModelStem + ".gmwt", ws.config_hash(), hash);
  ws.index().record("model-meta", kModelStem + ".json", ws.config_hash(), hash);
  ws.index().save();
  ws.out() << "train-target: train accuracy " << session.train_accuracy << ", held-out accuracy "
           << session.test_accuracy << "\n";
}

void cmd_extract_features(Workspace& ws) {
  const auto& c = ws.config();
  auto s = load_session(ws);
  auto options = c.protocol_options();
  auto header = eval::report_header(s.session, s.pools, options);
  auto draw = eval::draw_cell(s.pools, header.plan, options.seed, 0);
  spdlog::info("extracting {} features for {} + {} samples", probe::to_string(c.feature_kind), draw.d.size(),
               draw.e.size());
  probe::FeatureFile file;
  file.kind = c.feature_kind;
  file.selector_json = c.selector.to_json().dump();
  file.model_fingerprint = s.session.model.params().fingerprint();
  file.rows = probe::extract_features(s.session.model, draw.d, c.feature_kind, c.selector, c.jobs);
  for (auto& r : file.rows) r.membership_label = 1;
  auto externals = probe::extract_features(s.session.model, draw.e, c.feature_kind, c.selector, c.jobs);
  for (auto& r : externals) r.membership_label = 0;
  file.rows.insert(file.rows.end(), std::make_move_iterator(externals.begin()),
                   std::make_move_iterator(externals.end()));
  fs::create_directories(ws.root() / "features");
  probe::write_features(file, ws.root() / kFeaturesFile);
  const auto& cell = draw.cell;
  write_json(ws.root() / kFeaturesMeta, ordered_json{{"config_hash", ws.config_hash()},
                                                     {"cell_index", cell.index},
                                                     {"size_index", cell.size_index},
                                                     {"repetition", cell.repetition},
                                                     {"cell_seed", cell.seed},
                                                     {"n_d", cell.sizes.n_d},
                                                     {"n_e", cell.sizes.n_e},
                                                     {"feature_kind", probe::to_string(c.feature_kind)},
                                                     {"selector", c.selector.to_json()},
                                                     {"rows", file.rows.size()},
                                                     {"columns", file.rows.front().feature.size()}});
  auto hash = features_stage_hash(c);
  ws.index().record("features", kFeaturesFile, ws.config_hash(), hash);
  ws.index().record("features-meta", kFeaturesMeta, ws.config_hash(), hash);
  ws.index().save();
  ws.out() << "extract-features: " << file.rows.size() << " rows x " << file.rows.front().feature.size()
           << " columns\n";
}

void cmd_train_auditor(Workspace& ws) {
  const auto& c = ws.config();
  auto features = load_features(ws);
  auto options = c.protocol_options();
  auto dataset = dataset_from(features, options);
  spdlog::info("training auditor on {} rows of width {}", dataset.train_rows.size(), dataset.dim());
  auto trained = eval::train_cell_auditor(features.cell, dataset, options);
  fs::create_directories(ws.root() / "auditor");
  trained.save(ws.root() / kAuditorStem);
  stamp(ws.root() / (kAuditorStem + ".json"), ws.config_hash());
  auto hash = auditor_stage_hash(c);
  ws.index().record("auditor", kAuditorStem + ".gmwt", ws.config_hash(), hash);
  ws.index().record("auditor-meta", kAuditorStem + ".json", ws.config_hash(), hash);
  ws.index().save();
  ws.out() << "train-auditor: final loss " << trained.loss_history.back() << "\n";
}

void cmd_evaluate(Workspace& ws) {
  const auto& c = ws.config();
  auto features = load_features(ws);
  auto hash = auditor_stage_hash(c);
  auto auditor_path = ws.index().require("auditor", hash);
  ws.index().require("auditor-meta", hash);
  auto s = load_session(ws);
  auto options = c.protocol_options();
  auto started = eval::utc_timestamp();
  auto report = eval::report_header(s.session, s.pools, options);
  report.timestamps["started_at"] = started;
  report.plan.size_pairs = {features.cell.sizes};
  report.plan.repetitions = 1;
  features.cell.size_index = 0;
  features.cell.repetition = 0;
  auto dataset = dataset_from(features, options);
  auto trained = auditor::MintAuditor::load(auditor_path.replace_extension());
  report.cells.push_back(eval::score_cell(features.cell, trained, dataset));
  eval::summarize(report);
  report.config_hash = ws.config_hash();
  report.timestamps["finished_at"] = eval::utc_timestamp();
  eval::write_report(report, ws.root() / "report");
  record_report(ws, report, "report", "report", hash);
  ws.out() << "evaluate: AUC " << report.cells.front().auc << "\n";
}

void cmd_sweep(Workspace& ws) {
  const auto& c = ws.config();
  auto s = load_session(ws);
  auto hash = sweep_stage_hash(c);
  DiskCellStore store(ws, hash);
  auto report = eval::run_protocol(s.session, s.pools, c.protocol_options(), &store);
  report.config_hash = ws.config_hash();
  eval::write_report(report, ws.root() / "sweep");
  record_report(ws, report, "sweep", "sweep.report", hash);
  ws.out() << "sweep: " << report.cells.size() << " cells (" << store.computed << " computed, " << store.reused
           << " reused)\n";
  print_sizes(ws.out(), report);
}

void cmd_run(Workspace& ws) {
  cmd_gen_data(ws);
  cmd_train_target(ws);
  cmd_extract_features(ws);
  cmd_train_auditor(ws);
  cmd_evaluate(ws);
  cmd_sweep(ws);
}

std::vector<std::string> cmd_verify(const fs::path& dir, std::ostream& out) {
  if (!fs::exists(dir / "index.json")) throw DependencyError("no artifact index in " + dir.string());
  auto index = ArtifactIndex::open(dir);
  auto problems = index.verify();
  for (const auto& p : problems) out << "FAIL " << p << "\n";
  out << "verify: " << index.entries().size() - problems.size() << " of " << index.entries().size()
      << " artifacts ok\n";
  return problems;
}

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const DependencyError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

namespace {

void configure_logging() {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("gmint");
    l->set_pattern("[%H:%M:%S] [%l] %v");
    return l;
  }();
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("GMINT_LOG");
  std::string level = env ? env : "warn";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "warn") {
    spdlog::set_level(spdlog::level::warn);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw ConfigError("GMINT_LOG must be error, warn, info or debug (got '" + level + "')");
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gmint: gradient-based membership inference test toolkit"};
  app.require_subcommand(1);
  std::string config_path, output, protocol, feature_kind, selector;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--output", output, "Output directory (overrides output_dir)");
  app.add_option("--seed", seed, "Top-level seed (overrides seed)");
  app.add_option("--protocol", protocol, "intra or mixed")->check(CLI::IsMember({"intra", "mixed"}));
  app.add_option("--feature-kind", feature_kind, "gradient or embedding")
      ->check(CLI::IsMember({"gradient", "embedding"}));
  app.add_option("--selector", selector, "first:K, last:K or names:a,b");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "Generate or ingest the corpora"},
      {"train-target", "Train the audited model on the target corpus"},
      {"extract-features", "Extract MINT features for the first sweep cell"},
      {"train-auditor", "Train the MINT auditor on the extracted features"},
      {"evaluate", "Score the held-out MINT rows and write report/"},
      {"sweep", "Run every cell of the sweep plan and write sweep/"},
      {"verify", "Re-check the hash of every recorded artifact"},
      {"run", "All stages from gen-data to sweep"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    configure_logging();
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "verify") {
      fs::path dir = output;
      if (dir.empty() && !config_path.empty()) dir = load_config(config_path).output_dir;
      if (dir.empty()) throw ConfigError("verify needs --output or --config");
      return cmd_verify(dir, out).empty() ? kExitOk : kExitDependency;
    }
    if (config_path.empty()) throw ConfigError("--config is required for " + command);
    auto config = load_config(config_path);
    if (!output.empty()) config.output_dir = output;
    if (seed) config.set_seed(*seed);
    if (!protocol.empty()) config.protocol = protocol;
    if (!feature_kind.empty()) config.feature_kind = probe::parse_feature_kind(feature_kind);
    if (!selector.empty()) config.selector = probe::LayerSelector::parse(selector);
    if (jobs) config.jobs = *jobs;

    Workspace ws(std::move(config), out);
    spdlog::info("config hash {}", ws.config_hash());
    if (command == "gen-data") cmd_gen_data(ws);
    else if (command == "train-target") cmd_train_target(ws);
    else if (command == "extract-features") cmd_extract_features(ws);
    else if (command == "train-auditor") cmd_train_auditor(ws);
    else if (command == "evaluate") cmd_evaluate(ws);
    else if (command == "sweep") cmd_sweep(ws);
    else if (command == "run") cmd_run(ws);
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
}

}  // namespace gmint::cli
