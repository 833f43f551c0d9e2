#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gmint/autodiff/parameters.h"
#include "gmint/autodiff/tape.h"
#include "gmint/text/corpus.h"
#include "gmint/text/vocabulary.h"

namespace gmint::models {

enum class ModelKind { logreg, mlp, tiny_transformer };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct AuditedModelSpec {
  ModelKind kind = ModelKind::mlp;
  std::size_t vocab_size = 200;
  std::size_t max_len = 24;
  std::size_t embed_dim = 8;
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 2;  // tiny_transformer only
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  void validate() const;  // throws DimensionError
  bool operator==(const AuditedModelSpec&) const = default;
};

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 512;  // clamped to the training set size
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;      // mean per-sample loss over the epoch's batches
  double accuracy = 0.0;  // argmax accuracy of those batches before each update
};

// Token ids [N, max_len] plus class labels.
struct LabeledTokens {
  ad::TokenBatch tokens;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  LabeledTokens select(const std::vector<std::size_t>& rows) const;
};

LabeledTokens encode(const std::vector<const text::Sample*>& samples, const text::Vocabulary& vocab,
                     std::size_t max_len);

struct ForwardResult {
  ad::Var penultimate;  // input of the final classification layer
  ad::Var probs;        // [B, num_classes]
};

// A small text classifier in the role of the audited model.
//
// Parameter order (forward order; defines first/last-k layer selection):
//   logreg:            layer00.embedding.weight [V, C]  (bag-of-words counts)
//                      layer00.embedding.bias   [C]
//   mlp:               layer00.embedding.weight [V, E]  (mean-pooled)
//                      layer01.dense.weight [E, H], layer01.dense.bias [H]
//                      layer02.output.weight [H, C], layer02.output.bias [C]
//   tiny_transformer:  layer00.embedding.weight [V, E], layer00.position.weight [L, E]
//                      layer01.attention.{query,key,value,output}.weight [E, E]
//                      layer01.norm.gamma [E], layer01.norm.beta [E]
//                      layer02.ffn.weight1 [E, H], layer02.ffn.bias1 [H]
//                      layer02.ffn.weight2 [H, E], layer02.ffn.bias2 [E]
//                      layer02.norm.gamma [E], layer02.norm.beta [E]
//                      layer03.output.weight [E, C], layer03.output.bias [C]
// PAD tokens are excluded from the bag-of-words counts, the mean pool and
// the attention keys.
class AuditedModel {
 public:
  static AuditedModel build(const AuditedModelSpec& spec);

  const AuditedModelSpec& spec() const { return spec_; }
  const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }

  ForwardResult forward(ad::Tape& tape, const ad::TokenBatch& tokens) const;
  // Categorical cross-entropy per row, [B].
  ad::Var per_sample_loss(ad::Tape& tape, const ad::TokenBatch& tokens, const std::vector<int>& labels) const;
  ad::Tensor predict_proba(const ad::TokenBatch& tokens) const;

  const std::optional<text::Vocabulary>& vocabulary() const { return vocab_; }
  void set_vocabulary(text::Vocabulary vocab);
  const text::Vocabulary& require_vocabulary() const;

  TrainConfig train_config;
  std::vector<EpochStats> history;
  // Sample ids the model was trained on (its D set).
  std::vector<std::string> training_ids;

  // <stem>.gmwt holds the parameters, <stem>.json the spec, training config,
  // history, vocabulary and training ids.
  void save(const std::filesystem::path& stem) const;
  static AuditedModel load(const std::filesystem::path& stem);

 private:
  AuditedModel(AuditedModelSpec spec, ad::ParameterSet params) : spec_(spec), params_(std::move(params)) {}

  AuditedModelSpec spec_;
  ad::ParameterSet params_;
  std::optional<text::Vocabulary> vocab_;
};

// Mini-batch Adam on mean per-sample cross-entropy. Throws NumericError
// naming the epoch and batch when the loss stops being finite.
AuditedModel train_audited(AuditedModel model, const LabeledTokens& train_set, const TrainConfig& config);

// Fraction of rows whose argmax (ties toward the lower index) is the label.
double evaluate_accuracy(const AuditedModel& model, const LabeledTokens& labeled_set);

}  // namespace gmint::models
