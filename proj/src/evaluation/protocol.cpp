#include "gmint/evaluation/protocol.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "gmint/common/errors.h"
#include "gmint/common/hashing.h"
#include "gmint/common/random.h"
#include "gmint/models/model_io.h"
#include "gmint/probe/mint_dataset.h"

namespace gmint::eval {

using nlohmann::json;
using nlohmann::ordered_json;
using probe::ProbeSample;

SweepPlan SweepPlan::paper_default(std::size_t repetitions) {
  SweepPlan p;
  for (std::size_t n : {2500u, 2250u, 1500u, 1250u, 750u}) p.size_pairs.push_back({n, n});
  p.repetitions = repetitions;
  p.clamp_to_availability = true;
  return p;
}

SweepPlan SweepPlan::resolved(std::size_t available_d, std::size_t available_e) const {
  if (size_pairs.empty()) throw ConfigError("sweep plan has no size pairs");
  if (repetitions == 0) throw ConfigError("sweep plan needs at least one repetition");
  for (const auto& p : size_pairs)
    if (p.n_d == 0 || p.n_e == 0) throw ConfigError("sweep sizes must be positive");
  SweepPlan out = *this;
  if (clamp_to_availability) {
    std::size_t max_d = 0, max_e = 0;
    for (const auto& p : size_pairs) {
      max_d = std::max(max_d, p.n_d);
      max_e = std::max(max_e, p.n_e);
    }
    double factor = std::min({1.0, static_cast<double>(available_d) / static_cast<double>(max_d),
                              static_cast<double>(available_e) / static_cast<double>(max_e)});
    for (auto& p : out.size_pairs) {
      p.n_d = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(static_cast<double>(p.n_d) * factor)));
      p.n_e = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(static_cast<double>(p.n_e) * factor)));
    }
    out.clamp_to_availability = false;
  }
  for (const auto& p : out.size_pairs)
    if (p.n_d > available_d || p.n_e > available_e)
      throw DataError("size pair (" + std::to_string(p.n_d) + ", " + std::to_string(p.n_e) +
                      ") exceeds the available samples (" + std::to_string(available_d) + " in D, " +
                      std::to_string(available_e) + " in E)");
  return out;
}

std::vector<const probe::GradientFeature*> FeatureCache::get(const models::AuditedModel& model,
                                                             const std::vector<ProbeSample>& samples,
                                                             probe::FeatureKind kind,
                                                             const probe::LayerSelector& selector, std::size_t jobs) {
  std::string key = probe::to_string(kind) + (kind == probe::FeatureKind::gradient ? "|" + selector.to_string() : "");
  std::lock_guard lock(mutex_);
  auto& table = entries_[key];
  std::vector<ProbeSample> missing;
  std::unordered_set<std::string> queued;
  for (const auto& s : samples) {
    auto id = s.qualified_id();
    if (!table.count(id) && queued.insert(id).second) missing.push_back(s);
  }
  if (!missing.empty()) {
    auto computed = probe::extract_features(model, missing, kind, selector, jobs);
    for (auto& f : computed) {
      auto id = f.sample_id;
      table.emplace(id, std::make_unique<probe::GradientFeature>(std::move(f)));
    }
  }
  std::vector<const probe::GradientFeature*> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(table.at(s.qualified_id()).get());
  return out;
}

namespace {

std::vector<const text::Sample*> gather(const text::Corpus& corpus, const std::vector<std::string>& ids) {
  auto index = corpus.index_by_id();
  std::vector<const text::Sample*> out;
  for (const auto& id : ids) out.push_back(&corpus.samples[index.at(id)]);
  return out;
}

}  // namespace

AuditedSession train_session(const text::Corpus& target, const SessionConfig& config) {
  target.validate();
  AuditedSession s;
  s.target = &target;
  s.split = text::split(target, config.split_ratio, derive_seed(config.seed, "split"));
  auto train = gather(target, s.split.train_ids);
  auto test = gather(target, s.split.test_ids);
  std::vector<std::string> texts;
  for (const auto* x : train) texts.push_back(x->text);

  models::AuditedModelSpec spec = config.model_spec;
  if (spec.num_classes < static_cast<std::size_t>(target.num_classes))
    throw ConfigError("model has " + std::to_string(spec.num_classes) + " classes but corpus " + target.name +
                      " has " + std::to_string(target.num_classes));
  auto vocab = text::build_vocab(texts, spec.vocab_size);
  spec.vocab_size = vocab.size();
  spec.seed = derive_seed(config.seed, "audited-model");
  models::TrainConfig train_config = config.train_config;
  train_config.seed = derive_seed(config.seed, "audited-training");

  auto train_set = models::encode(train, vocab, spec.max_len);
  s.model = models::train_audited(models::AuditedModel::build(spec), train_set, train_config);
  s.model.set_vocabulary(std::move(vocab));
  for (const auto& id : s.split.train_ids) s.model.training_ids.push_back(target.name + ":" + id);
  s.train_accuracy = models::evaluate_accuracy(s.model, train_set);
  s.test_accuracy = models::evaluate_accuracy(s.model, models::encode(test, s.model.require_vocabulary(), spec.max_len));
  return s;
}

AuditedSession session_from_model(const text::Corpus& target, models::AuditedModel model) {
  target.validate();
  AuditedSession s;
  s.target = &target;
  std::string prefix = target.name + ":";
  std::unordered_set<std::string> trained;
  for (const auto& q : model.training_ids) {
    if (q.rfind(prefix, 0) != 0) throw DataError("training id " + q + " does not belong to corpus " + target.name);
    trained.insert(q.substr(prefix.size()));
  }
  for (const auto& sample : target.samples)
    (trained.count(sample.id) ? s.split.train_ids : s.split.test_ids).push_back(sample.id);
  if (s.split.train_ids.size() != trained.size())
    throw DataError("model training ids are missing from corpus " + target.name);
  s.split.ratio = static_cast<double>(trained.size()) / static_cast<double>(target.samples.size());
  const auto& vocab = model.require_vocabulary();
  auto len = model.spec().max_len;
  s.train_accuracy = models::evaluate_accuracy(model, models::encode(gather(target, s.split.train_ids), vocab, len));
  if (!s.split.test_ids.empty())
    s.test_accuracy = models::evaluate_accuracy(model, models::encode(gather(target, s.split.test_ids), vocab, len));
  s.model = std::move(model);
  return s;
}

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<ProbeSample> draw(const std::vector<ProbeSample>& pool, std::size_t n, std::uint64_t seed) {
  auto picks = Rng(seed).sample_without_replacement(pool.size(), n);
  std::vector<ProbeSample> out;
  for (auto i : picks) out.push_back(pool[i]);
  std::sort(out.begin(), out.end(),
            [](const ProbeSample& a, const ProbeSample& b) { return a.qualified_id() < b.qualified_id(); });
  return out;
}

std::vector<probe::GradientFeature> copies(const std::vector<const probe::GradientFeature*>& v) {
  std::vector<probe::GradientFeature> out;
  out.reserve(v.size());
  for (const auto* f : v) out.push_back(*f);
  return out;
}

}  // namespace

SamplePools SamplePools::intra(const AuditedSession& session) {
  SamplePools p;
  p.protocol = "intra";
  p.d = probe::probe_samples(*session.target, session.split.train_ids);
  p.e = probe::probe_samples(*session.target, session.split.test_ids);
  p.e_sizes[session.target->name] = p.e.size();
  return p;
}

SamplePools SamplePools::mixed(const AuditedSession& session, const std::vector<const text::Corpus*>& others) {
  if (others.empty()) throw ConfigError("mixed protocol needs at least one external corpus");
  SamplePools p = intra(session);
  p.protocol = "mixed";
  const int classes = static_cast<int>(session.model.spec().num_classes);
  for (const auto* other : others) {
    if (other->name == session.target->name) throw ConfigError("external corpus " + other->name + " is the target");
    if (std::find(p.external_corpora.begin(), p.external_corpora.end(), other->name) != p.external_corpora.end())
      throw ConfigError("external corpus " + other->name + " listed twice");
    other->validate();
    p.external_corpora.push_back(other->name);
    auto copy = std::make_unique<text::Corpus>(*other);
    for (auto& s : copy->samples) s.label %= classes;
    for (const auto& s : copy->samples) p.e.push_back({&s, copy->name});
    p.e_sizes[copy->name] = copy->samples.size();
    p.owned_.push_back(std::move(copy));
  }
  return p;
}

CellDraw draw_cell(const SamplePools& pools, const SweepPlan& plan, std::uint64_t seed, std::size_t index) {
  if (index >= plan.cell_count()) throw ConfigError("cell " + std::to_string(index) + " is outside the sweep plan");
  CellDraw out;
  auto& c = out.cell;
  c.index = index;
  c.size_index = index / plan.repetitions;
  c.repetition = index % plan.repetitions;
  c.sizes = plan.size_pairs[c.size_index];
  c.seed = derive_seed(seed, "cell", index);
  out.d = draw(pools.d, c.sizes.n_d, derive_seed(c.seed, "sample-d"));
  out.e = draw(pools.e, c.sizes.n_e, derive_seed(c.seed, "sample-e"));
  return out;
}

probe::MintDataset assemble_cell(const CellResult& cell, std::vector<probe::GradientFeature> members,
                                 std::vector<probe::GradientFeature> externals, const Digest& model_fingerprint,
                                 const ProtocolOptions& options) {
  probe::AssembleOptions assemble;
  assemble.seed = derive_seed(cell.seed, "mint");
  assemble.permute_labels = options.permute_labels;
  return probe::assemble_mint_dataset(std::move(members), std::move(externals), model_fingerprint, options.selector,
                                      options.feature_kind, assemble);
}

auditor::MintAuditor train_cell_auditor(const CellResult& cell, const probe::MintDataset& dataset,
                                        const ProtocolOptions& options) {
  auditor::AuditorConfig config = options.auditor;
  config.seed = derive_seed(cell.seed, "auditor");
  return auditor::train_mint(dataset, config);
}

CellResult score_cell(CellResult c, const auditor::MintAuditor& trained, const probe::MintDataset& dataset) {
  c.d_ids.clear();
  c.e_ids.clear();
  c.e_composition.clear();
  for (const auto& f : dataset.features) {
    if (f.membership_label == 1) {
      c.d_ids.push_back(f.sample_id);
    } else {
      c.e_ids.push_back(f.sample_id);
      ++c.e_composition[f.source_corpus];
    }
  }
  std::sort(c.d_ids.begin(), c.d_ids.end());
  std::sort(c.e_ids.begin(), c.e_ids.end());
  auto scores = auditor::score_rows(trained, dataset, dataset.test_rows);
  std::vector<int> labels;
  double member_sum = 0, external_sum = 0;
  std::size_t member_n = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    int y = dataset.features[dataset.test_rows[k]].membership_label;
    labels.push_back(y);
    (y ? member_sum : external_sum) += scores[k];
    member_n += static_cast<std::size_t>(y);
  }
  c.auc = auc(scores, labels);
  c.roc = roc_curve(scores, labels);
  c.mean_member_score = member_sum / static_cast<double>(member_n);
  c.mean_external_score = external_sum / static_cast<double>(scores.size() - member_n);
  return c;
}

AuditReport report_header(const AuditedSession& session, const SamplePools& pools, const ProtocolOptions& options) {
  AuditReport report;
  report.protocol = pools.protocol;
  report.target_corpus = session.target->name;
  report.external_corpora = pools.external_corpora;
  report.model_spec = session.model.spec();
  report.train_config = session.model.train_config;
  report.model_train_accuracy = session.train_accuracy;
  report.model_test_accuracy = session.test_accuracy;
  report.model_fingerprint = to_hex(session.model.params().fingerprint());
  report.selector = options.selector;
  report.feature_kind = options.feature_kind;
  report.auditor = options.auditor;
  report.seed = options.seed;
  report.permuted_labels = options.permute_labels;
  report.pool_sizes = pools.e_sizes;
  report.plan = options.plan.resolved(pools.d.size(), pools.e.size());
  if (options.feature_kind == probe::FeatureKind::gradient) options.selector.resolve(session.model.params());
  return report;
}

void summarize(AuditReport& report) {
  report.sizes.clear();
  const auto& plan = report.plan;
  for (std::size_t s = 0; s < plan.size_pairs.size(); ++s) {
    SizeResult r;
    r.sizes = plan.size_pairs[s];
    for (const auto& c : report.cells)
      if (c.size_index == s) r.aucs.push_back(c.auc);
    if (r.aucs.empty()) continue;
    r.mean_auc = mean_of(r.aucs);
    r.std_auc = sample_std(r.aucs);
    report.sizes.push_back(std::move(r));
  }
}

AuditReport run_protocol(AuditedSession& session, const SamplePools& pools, const ProtocolOptions& options,
                         CellStore* store) {
  auto started = utc_timestamp();
  AuditReport report = report_header(session, pools, options);
  report.timestamps["started_at"] = started;
  const auto& plan = report.plan;

  std::vector<CellDraw> draws;
  for (std::size_t i = 0; i < plan.cell_count(); ++i) draws.push_back(draw_cell(pools, plan, options.seed, i));
  std::vector<std::optional<CellResult>> cells(draws.size());
  std::vector<ProbeSample> needed;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    if (store) cells[i] = store->find(i);
    if (!cells[i]) {
      needed.insert(needed.end(), draws[i].d.begin(), draws[i].d.end());
      needed.insert(needed.end(), draws[i].e.begin(), draws[i].e.end());
    }
  }
  session.cache->get(session.model, needed, options.feature_kind, options.selector, options.jobs);
  const auto fingerprint = session.model.params().fingerprint();

  auto run_cell = [&](std::size_t i) {
    const auto& dr = draws[i];
    auto members = copies(session.cache->get(session.model, dr.d, options.feature_kind, options.selector, 1));
    auto externals = copies(session.cache->get(session.model, dr.e, options.feature_kind, options.selector, 1));
    auto dataset = assemble_cell(dr.cell, std::move(members), std::move(externals), fingerprint, options);
    auto trained = train_cell_auditor(dr.cell, dataset, options);
    return score_cell(dr.cell, trained, dataset);
  };

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!cells[i]) todo.push_back(i);
  std::mutex store_mutex;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(std::max<std::size_t>(1, options.jobs));
  auto worker = [&](std::size_t w) {
    try {
      for (std::size_t k = next++; k < todo.size(); k = next++) {
        auto c = run_cell(todo[k]);
        std::lock_guard lock(store_mutex);
        if (store) store->put(c);
        cells[todo[k]] = std::move(c);
      }
    } catch (...) {
      errors[w] = std::current_exception();
      next = todo.size();
    }
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(options.jobs, todo.size()));
  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker, w);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& c : cells) report.cells.push_back(std::move(*c));
  summarize(report);
  report.timestamps["finished_at"] = utc_timestamp();
  return report;
}

AuditReport run_intra_protocol(AuditedSession& session, const ProtocolOptions& options, CellStore* store) {
  return run_protocol(session, SamplePools::intra(session), options, store);
}

AuditReport run_mixed_protocol(AuditedSession& session, const std::vector<const text::Corpus*>& others,
                               const ProtocolOptions& options, CellStore* store) {
  return run_protocol(session, SamplePools::mixed(session, others), options, store);
}

FeatureComparison compare_feature_kinds(AuditedSession& session, const ProtocolOptions& options) {
  FeatureComparison out;
  ProtocolOptions opt = options;
  opt.feature_kind = probe::FeatureKind::gradient;
  out.gradient = run_intra_protocol(session, opt);
  opt.feature_kind = probe::FeatureKind::embedding;
  out.embedding = run_intra_protocol(session, opt);
  out.auc_gradient = out.gradient.sizes.front().mean_auc;
  out.auc_embedding = out.embedding.sizes.front().mean_auc;
  out.same_samples = out.gradient.cells.size() == out.embedding.cells.size();
  for (std::size_t i = 0; out.same_samples && i < out.gradient.cells.size(); ++i)
    out.same_samples = out.gradient.cells[i].d_ids == out.embedding.cells[i].d_ids &&
                       out.gradient.cells[i].e_ids == out.embedding.cells[i].e_ids;
  return out;
}

ordered_json to_json(const SizePair& p) { return ordered_json{{"n_d", p.n_d}, {"n_e", p.n_e}}; }

ordered_json to_json(const SweepPlan& plan) {
  ordered_json pairs = ordered_json::array();
  for (const auto& p : plan.size_pairs) pairs.push_back(to_json(p));
  return ordered_json{{"size_pairs", pairs},
                      {"repetitions", plan.repetitions},
                      {"clamp_to_availability", plan.clamp_to_availability}};
}

SweepPlan sweep_plan_from_json(const json& j) {
  SweepPlan plan;
  if (j.contains("size_pairs")) {
    for (const auto& p : j.at("size_pairs")) plan.size_pairs.push_back({p.at("n_d").get<std::size_t>(), p.at("n_e").get<std::size_t>()});
    plan.clamp_to_availability = j.value("clamp_to_availability", false);
  } else {
    plan = SweepPlan::paper_default();
  }
  plan.repetitions = j.value("repetitions", plan.repetitions);
  return plan;
}

ordered_json cell_to_json(const CellResult& c, bool include_roc) {
  ordered_json j{{"index", c.index},
                 {"size_index", c.size_index},
                 {"repetition", c.repetition},
                 {"n_d", c.sizes.n_d},
                 {"n_e", c.sizes.n_e},
                 {"seed", c.seed},
                 {"auc", c.auc},
                 {"mean_member_score", c.mean_member_score},
                 {"mean_external_score", c.mean_external_score},
                 {"e_composition", c.e_composition},
                 {"roc_ref", roc_path(c)},
                 {"d_ids", c.d_ids},
                 {"e_ids", c.e_ids}};
  if (include_roc) {
    ordered_json thresholds = ordered_json::array();
    for (double t : c.roc.thresholds) thresholds.push_back(std::isinf(t) ? ordered_json(nullptr) : ordered_json(t));
    j["roc"] = {{"fpr", c.roc.fpr}, {"tpr", c.roc.tpr}, {"thresholds", thresholds}};
  }
  return j;
}

CellResult cell_from_json(const json& j) {
  CellResult c;
  c.index = j.at("index").get<std::size_t>();
  c.size_index = j.at("size_index").get<std::size_t>();
  c.repetition = j.at("repetition").get<std::size_t>();
  c.sizes = {j.at("n_d").get<std::size_t>(), j.at("n_e").get<std::size_t>()};
  c.seed = j.at("seed").get<std::uint64_t>();
  c.auc = j.at("auc").get<double>();
  c.mean_member_score = j.at("mean_member_score").get<double>();
  c.mean_external_score = j.at("mean_external_score").get<double>();
  c.e_composition = j.at("e_composition").get<std::map<std::string, std::size_t>>();
  c.d_ids = j.at("d_ids").get<std::vector<std::string>>();
  c.e_ids = j.at("e_ids").get<std::vector<std::string>>();
  const auto& roc = j.at("roc");
  c.roc.fpr = roc.at("fpr").get<std::vector<double>>();
  c.roc.tpr = roc.at("tpr").get<std::vector<double>>();
  for (const auto& t : roc.at("thresholds"))
    c.roc.thresholds.push_back(t.is_null() ? std::numeric_limits<double>::infinity() : t.get<double>());
  return c;
}

ordered_json report_to_json(const AuditReport& r) {
  ordered_json sizes = ordered_json::array();
  for (std::size_t s = 0; s < r.sizes.size(); ++s) {
    const auto& sr = r.sizes[s];
    ordered_json refs = ordered_json::array();
    for (const auto& c : r.cells)
      if (c.size_index == s) refs.push_back(roc_path(c));
    sizes.push_back({{"size_d", sr.sizes.n_d},
                     {"size_e", sr.sizes.n_e},
                     {"auc", sr.mean_auc},
                     {"auc_std", sr.std_auc},
                     {"aucs", sr.aucs},
                     {"roc_refs", refs}});
  }
  ordered_json cells = ordered_json::array();
  for (const auto& c : r.cells) cells.push_back(cell_to_json(c, false));
  return ordered_json{{"protocol", r.protocol},
                      {"target_corpus", r.target_corpus},
                      {"external_corpora", r.external_corpora},
                      {"audited_model",
                       {{"spec", models::to_json(r.model_spec)},
                        {"train_config", models::to_json(r.train_config)},
                        {"train_accuracy", r.model_train_accuracy},
                        {"test_accuracy", r.model_test_accuracy},
                        {"fingerprint", r.model_fingerprint}}},
                      {"selector", r.selector.to_json()},
                      {"feature_kind", probe::to_string(r.feature_kind)},
                      {"auditor", auditor::to_json(r.auditor)},
                      {"sweep_plan", to_json(r.plan)},
                      {"seed", r.seed},
                      {"permuted_labels", r.permuted_labels},
                      {"config_hash", r.config_hash},
                      {"e_pool_sizes", r.pool_sizes},
                      {"results", sizes},
                      {"cells", cells},
                      {"timestamps", r.timestamps}};
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[96];
  for (std::size_t i = 0; i < roc.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", roc.thresholds[i], roc.fpr[i], roc.tpr[i]);
    out += buf;
  }
  return out;
}

std::string roc_path(const CellResult& cell) { return "roc/cell" + std::to_string(cell.index) + ".csv"; }

void write_report(const AuditReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "roc");
  for (const auto& c : report.cells) {
    std::ofstream out(dir / roc_path(c), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / roc_path(c)).string());
    out << roc_csv(c.roc);
  }
  std::ofstream out(dir / "report.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "report.json").string());
  out << report_to_json(report).dump(2) << '\n';
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace gmint::eval
