#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmint/auditor/mint_auditor.h"
#include "gmint/evaluation/metrics.h"
#include "gmint/models/audited_model.h"
#include "gmint/probe/features.h"
#include "gmint/probe/mint_dataset.h"
#include "gmint/text/corpus.h"
#include "gmint/text/split.h"

namespace gmint::eval {

struct SizePair {
  std::size_t n_d = 0;
  std::size_t n_e = 0;
  bool operator==(const SizePair&) const = default;
};

struct SweepPlan {
  std::vector<SizePair> size_pairs;
  std::size_t repetitions = 1;
  // When set, pairs larger than the available pools are scaled down
  // proportionally instead of raising an error.
  bool clamp_to_availability = false;

  // 2500, 2250, 1500, 1250 and 750 per side, clamped.
  static SweepPlan paper_default(std::size_t repetitions = 1);

  // Throws DataError naming the first pair that cannot be drawn.
  SweepPlan resolved(std::size_t available_d, std::size_t available_e) const;
  std::size_t cell_count() const { return size_pairs.size() * repetitions; }
  bool operator==(const SweepPlan&) const = default;
};

// Features computed for a session, keyed by feature kind + selector and
// then by qualified sample id. Thread-safe.
class FeatureCache {
 public:
  // Returns features for all samples, computing only the missing ones.
  std::vector<const probe::GradientFeature*> get(const models::AuditedModel& model,
                                                 const std::vector<probe::ProbeSample>& samples,
                                                 probe::FeatureKind kind, const probe::LayerSelector& selector,
                                                 std::size_t jobs);

 private:
  std::mutex mutex_;
  std::map<std::string, std::unordered_map<std::string, std::unique_ptr<probe::GradientFeature>>> entries_;
};

struct SessionConfig {
  models::AuditedModelSpec model_spec;
  models::TrainConfig train_config;
  double split_ratio = 0.5;  // fraction of the corpus that trains the audited model
  std::uint64_t seed = 0;
};

// An audited model trained on the split's train side of the target corpus.
// The model spec's vocab_size shrinks to the vocabulary actually built from D.
struct AuditedSession {
  const text::Corpus* target = nullptr;
  text::CorpusSplit split;
  models::AuditedModel model = models::AuditedModel::build({});
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::shared_ptr<FeatureCache> cache = std::make_shared<FeatureCache>();
};

AuditedSession train_session(const text::Corpus& target, const SessionConfig& config);

// Wraps an already trained model whose training ids name its D split.
AuditedSession session_from_model(const text::Corpus& target, models::AuditedModel model);

struct ProtocolOptions {
  probe::LayerSelector selector;
  probe::FeatureKind feature_kind = probe::FeatureKind::gradient;
  auditor::AuditorConfig auditor;
  SweepPlan plan = SweepPlan::paper_default();
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool permute_labels = false;
};

struct CellResult {
  std::size_t index = 0;
  std::size_t size_index = 0;
  std::size_t repetition = 0;
  SizePair sizes;
  std::uint64_t seed = 0;
  double auc = 0.0;
  RocCurve roc;
  double mean_member_score = 0.0;
  double mean_external_score = 0.0;
  std::vector<std::string> d_ids;  // qualified, sorted
  std::vector<std::string> e_ids;
  std::map<std::string, std::size_t> e_composition;  // corpus -> count, sums to n_e
};

struct SizeResult {
  SizePair sizes;
  std::vector<double> aucs;
  double mean_auc = 0.0;
  double std_auc = 0.0;  // sample standard deviation, 0 for one repetition
};

// Receives finished cells and hands back cells from earlier runs, so an
// interrupted sweep can resume.
class CellStore {
 public:
  virtual ~CellStore() = default;
  virtual std::optional<CellResult> find(std::size_t index) = 0;
  virtual void put(const CellResult& cell) = 0;
};

struct AuditReport {
  std::string protocol;  // intra | mixed
  std::string target_corpus;
  std::vector<std::string> external_corpora;
  models::AuditedModelSpec model_spec;
  models::TrainConfig train_config;
  double model_train_accuracy = 0.0;
  double model_test_accuracy = 0.0;
  std::string model_fingerprint;
  probe::LayerSelector selector;
  probe::FeatureKind feature_kind = probe::FeatureKind::gradient;
  auditor::AuditorConfig auditor;
  SweepPlan plan;  // as resolved
  std::uint64_t seed = 0;
  bool permuted_labels = false;
  std::string config_hash;
  std::map<std::string, std::size_t> pool_sizes;  // corpus -> samples available for E
  std::vector<SizeResult> sizes;
  std::vector<CellResult> cells;
  std::map<std::string, std::string> timestamps;
};

// The MINT sample pools of one protocol: D from the session's train split,
// E from its held-out split plus, for the mixed protocol, every sample of the
// external corpora. External labels are reduced modulo the model's class
// count for the gradient loss; the pools own those relabelled copies.
class SamplePools {
 public:
  static SamplePools intra(const AuditedSession& session);
  static SamplePools mixed(const AuditedSession& session, const std::vector<const text::Corpus*>& others);

  std::string protocol;  // intra | mixed
  std::vector<probe::ProbeSample> d;
  std::vector<probe::ProbeSample> e;
  std::map<std::string, std::size_t> e_sizes;  // corpus -> samples available for E
  std::vector<std::string> external_corpora;

 private:
  std::vector<std::unique_ptr<text::Corpus>> owned_;
};

struct CellDraw {
  CellResult cell;  // index, sizes and seed filled in
  std::vector<probe::ProbeSample> d;  // sorted by qualified id
  std::vector<probe::ProbeSample> e;
};

// Cell `index` of a resolved plan, drawn uniformly without replacement.
CellDraw draw_cell(const SamplePools& pools, const SweepPlan& plan, std::uint64_t seed, std::size_t index);

probe::MintDataset assemble_cell(const CellResult& cell, std::vector<probe::GradientFeature> members,
                                 std::vector<probe::GradientFeature> externals, const Digest& model_fingerprint,
                                 const ProtocolOptions& options);
auditor::MintAuditor train_cell_auditor(const CellResult& cell, const probe::MintDataset& dataset,
                                        const ProtocolOptions& options);
// Fills AUC, ROC, mean scores, ids and E composition from the MINT-test rows.
CellResult score_cell(CellResult cell, const auditor::MintAuditor& auditor, const probe::MintDataset& dataset);

// Report fields that do not depend on the cells; the plan is resolved
// against the pools.
AuditReport report_header(const AuditedSession& session, const SamplePools& pools, const ProtocolOptions& options);
// Recomputes the per-size summaries from report.cells.
void summarize(AuditReport& report);

AuditReport run_protocol(AuditedSession& session, const SamplePools& pools, const ProtocolOptions& options,
                         CellStore* store = nullptr);
AuditReport run_intra_protocol(AuditedSession& session, const ProtocolOptions& options, CellStore* store = nullptr);
AuditReport run_mixed_protocol(AuditedSession& session, const std::vector<const text::Corpus*>& others,
                               const ProtocolOptions& options, CellStore* store = nullptr);

struct FeatureComparison {
  AuditReport gradient;
  AuditReport embedding;
  double auc_gradient = 0.0;  // mean over repetitions at the first size pair
  double auc_embedding = 0.0;
  bool same_samples = false;  // every cell drew identical D and E ids
};

FeatureComparison compare_feature_kinds(AuditedSession& session, const ProtocolOptions& options);

// Report serialization. ROC curves are referenced by relative path
// roc/cell<index>.csv and written by write_report.
nlohmann::ordered_json to_json(const SizePair& pair);
nlohmann::ordered_json to_json(const SweepPlan& plan);
SweepPlan sweep_plan_from_json(const nlohmann::json& j);
nlohmann::ordered_json cell_to_json(const CellResult& cell, bool include_roc);
CellResult cell_from_json(const nlohmann::json& j);
nlohmann::ordered_json report_to_json(const AuditReport& report);
std::string roc_csv(const RocCurve& roc);
std::string roc_path(const CellResult& cell);
void write_report(const AuditReport& report, const std::filesystem::path& dir);

std::string utc_timestamp();

}  // namespace gmint::eval
