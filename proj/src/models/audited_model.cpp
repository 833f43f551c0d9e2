#include "gmint/models/audited_model.h"

#include <cmath>
#include <fstream>

#include "gmint/autodiff/adam.h"
#include "gmint/autodiff/init.h"
#include "gmint/autodiff/ops.h"
#include "gmint/common/errors.h"
#include "gmint/common/random.h"
#include "gmint/models/model_io.h"

namespace gmint::models {

using ad::Tape;
using ad::Tensor;
using ad::TokenBatch;
using ad::Var;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

Tensor padding_mask(const TokenBatch& tokens) {
  Tensor mask({tokens.batch, tokens.length});
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) mask[i] = tokens.ids[i] != text::Vocabulary::kPad ? 1.0 : 0.0;
  return mask;
}

Tensor bag_of_words(const TokenBatch& tokens, std::size_t vocab) {
  Tensor bow({tokens.batch, vocab});
  for (std::size_t b = 0; b < tokens.batch; ++b)
    for (std::size_t t = 0; t < tokens.length; ++t) {
      int id = tokens.at(b, t);
      if (id == text::Vocabulary::kPad) continue;
      if (id < 0 || static_cast<std::size_t>(id) >= vocab)
        throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
      bow[b * vocab + static_cast<std::size_t>(id)] += 1.0;
    }
  return bow;
}

Var dense(Tape& tape, Var x, const std::string& weight, const std::string& bias) {
  return ad::add(ad::matmul(x, tape.param(weight)), tape.param(bias));
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::logreg: return "logreg";
    case ModelKind::mlp: return "mlp";
    case ModelKind::tiny_transformer: return "tiny_transformer";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "logreg") return ModelKind::logreg;
  if (name == "mlp") return ModelKind::mlp;
  if (name == "tiny_transformer") return ModelKind::tiny_transformer;
  throw ConfigError("unknown model kind '" + name + "' (expected logreg, mlp or tiny_transformer)");
}

void AuditedModelSpec::validate() const {
  if (vocab_size < 3) throw DimensionError("vocab_size must be at least 3");
  if (max_len == 0 || num_classes < 2) throw DimensionError("max_len must be positive and num_classes >= 2");
  if (kind != ModelKind::logreg && (embed_dim == 0 || hidden_dim == 0))
    throw DimensionError("embed_dim and hidden_dim must be positive");
  if (kind == ModelKind::tiny_transformer && (num_heads == 0 || embed_dim % num_heads != 0))
    throw DimensionError("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                         std::to_string(num_heads));
}

LabeledTokens LabeledTokens::select(const std::vector<std::size_t>& rows) const {
  LabeledTokens out;
  out.tokens.batch = rows.size();
  out.tokens.length = tokens.length;
  out.tokens.ids.reserve(rows.size() * tokens.length);
  for (auto r : rows) {
    auto begin = tokens.ids.begin() + static_cast<long>(r * tokens.length);
    out.tokens.ids.insert(out.tokens.ids.end(), begin, begin + static_cast<long>(tokens.length));
    out.labels.push_back(labels.at(r));
  }
  return out;
}

LabeledTokens encode(const std::vector<const text::Sample*>& samples, const text::Vocabulary& vocab,
                     std::size_t max_len) {
  LabeledTokens out;
  out.tokens.batch = samples.size();
  out.tokens.length = max_len;
  out.tokens.ids.reserve(samples.size() * max_len);
  for (const auto* s : samples) {
    auto ids = text::tokenize(s->text, vocab, max_len);
    out.tokens.ids.insert(out.tokens.ids.end(), ids.begin(), ids.end());
    out.labels.push_back(s->label);
  }
  return out;
}

AuditedModel AuditedModel::build(const AuditedModelSpec& spec) {
  spec.validate();
  ad::ParameterSet p;
  const auto V = spec.vocab_size, C = spec.num_classes, E = spec.embed_dim, H = spec.hidden_dim, L = spec.max_len;
  auto glorot = [&](const std::string& name, ad::Shape shape) {
    p.add(name, ad::glorot_uniform(shape, spec.seed, name));
  };
  switch (spec.kind) {
    case ModelKind::logreg:
      glorot("layer00.embedding.weight", {V, C});
      p.add("layer00.embedding.bias", Tensor({C}));
      break;
    case ModelKind::mlp:
      glorot("layer00.embedding.weight", {V, E});
      glorot("layer01.dense.weight", {E, H});
      p.add("layer01.dense.bias", Tensor({H}));
      glorot("layer02.output.weight", {H, C});
      p.add("layer02.output.bias", Tensor({C}));
      break;
    case ModelKind::tiny_transformer:
      glorot("layer00.embedding.weight", {V, E});
      glorot("layer00.position.weight", {L, E});
      for (const char* role : {"query", "key", "value", "output"})
        glorot(std::string("layer01.attention.") + role + ".weight", {E, E});
      p.add("layer01.norm.gamma", Tensor({E}, 1.0));
      p.add("layer01.norm.beta", Tensor({E}));
      glorot("layer02.ffn.weight1", {E, H});
      p.add("layer02.ffn.bias1", Tensor({H}));
      glorot("layer02.ffn.weight2", {H, E});
      p.add("layer02.ffn.bias2", Tensor({E}));
      p.add("layer02.norm.gamma", Tensor({E}, 1.0));
      p.add("layer02.norm.beta", Tensor({E}));
      glorot("layer03.output.weight", {E, C});
      p.add("layer03.output.bias", Tensor({C}));
      break;
  }
  return AuditedModel(spec, std::move(p));
}

ForwardResult AuditedModel::forward(Tape& tape, const TokenBatch& tokens) const {
  if (tokens.length != spec_.max_len)
    throw DimensionError("expected sequences of length " + std::to_string(spec_.max_len) + ", got " +
                         std::to_string(tokens.length));
  tape.bind(params_);
  Var penultimate, logits;
  switch (spec_.kind) {
    case ModelKind::logreg: {
      Var bow = tape.constant(bag_of_words(tokens, spec_.vocab_size));
      logits = dense(tape, bow, "layer00.embedding.weight", "layer00.embedding.bias");
      penultimate = logits;
      break;
    }
    case ModelKind::mlp: {
      Var emb = ad::embedding_lookup(tape.param("layer00.embedding.weight"), tokens);
      Var pooled = ad::mean_pool(emb, padding_mask(tokens));
      penultimate = ad::relu(dense(tape, pooled, "layer01.dense.weight", "layer01.dense.bias"));
      logits = dense(tape, penultimate, "layer02.output.weight", "layer02.output.bias");
      break;
    }
    case ModelKind::tiny_transformer: {
      Tensor mask = padding_mask(tokens);
      Var x = ad::add(ad::embedding_lookup(tape.param("layer00.embedding.weight"), tokens),
                      tape.param("layer00.position.weight"));
      Var q = ad::matmul(x, tape.param("layer01.attention.query.weight"));
      Var k = ad::matmul(x, tape.param("layer01.attention.key.weight"));
      Var v = ad::matmul(x, tape.param("layer01.attention.value.weight"));
      Var attn = ad::matmul(ad::scaled_dot_attention(q, k, v, spec_.num_heads, &mask),
                            tape.param("layer01.attention.output.weight"));
      x = ad::layer_norm(ad::add(x, attn), tape.param("layer01.norm.gamma"), tape.param("layer01.norm.beta"));
      Var ffn = dense(tape, ad::relu(dense(tape, x, "layer02.ffn.weight1", "layer02.ffn.bias1")),
                      "layer02.ffn.weight2", "layer02.ffn.bias2");
      x = ad::layer_norm(ad::add(x, ffn), tape.param("layer02.norm.gamma"), tape.param("layer02.norm.beta"));
      penultimate = ad::mean_pool(x, mask);
      logits = dense(tape, penultimate, "layer03.output.weight", "layer03.output.bias");
      break;
    }
  }
  return {penultimate, ad::softmax(logits)};
}

Var AuditedModel::per_sample_loss(Tape& tape, const TokenBatch& tokens, const std::vector<int>& labels) const {
  return ad::categorical_cross_entropy(forward(tape, tokens).probs, labels);
}

Tensor AuditedModel::predict_proba(const TokenBatch& tokens) const {
  Tape tape;
  return forward(tape, tokens).probs.value();
}

void AuditedModel::set_vocabulary(text::Vocabulary vocab) {
  if (vocab.size() > spec_.vocab_size)
    throw DimensionError("vocabulary of " + std::to_string(vocab.size()) + " tokens exceeds model vocab_size " +
                         std::to_string(spec_.vocab_size));
  vocab_ = std::move(vocab);
}

const text::Vocabulary& AuditedModel::require_vocabulary() const {
  if (!vocab_) throw DataError("audited model has no vocabulary attached");
  return *vocab_;
}

namespace {

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  const std::size_t cols = probs.inner();
  std::size_t best = 0;
  for (std::size_t c = 1; c < cols; ++c)
    if (probs[row * cols + c] > probs[row * cols + best]) best = c;
  return best;
}

}  // namespace

AuditedModel train_audited(AuditedModel model, const LabeledTokens& train_set, const TrainConfig& config) {
  if (config.epochs < 1) throw DataError("epochs must be at least 1");
  if (config.batch_size < 1) throw DataError("batch_size must be at least 1");
  if (train_set.size() == 0) throw DataError("training set is empty");
  for (int y : train_set.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= model.spec().num_classes)
      throw DataError("training label " + std::to_string(y) + " outside the model's classes");

  const std::size_t n = train_set.size();
  const std::size_t batch = std::min(config.batch_size, n);
  ad::AdamState adam;
  adam.hyper.learning_rate = config.learning_rate;
  model.train_config = config;
  model.history.clear();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, "batch-order", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_total = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, index = 0; start < n; start += batch, ++index) {
      std::vector<std::size_t> rows(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(std::min(n, start + batch)));
      LabeledTokens mb = train_set.select(rows);
      Tape tape;
      ForwardResult fwd = model.forward(tape, mb.tokens);
      Var losses = ad::categorical_cross_entropy(fwd.probs, mb.labels);
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (argmax_row(fwd.probs.value(), r) == static_cast<std::size_t>(mb.labels[r])) ++correct;
      auto grads = tape.backward(ad::mean(losses));
      if (!std::isfinite(grads.loss_value))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(index));
      loss_total += grads.loss_value * static_cast<double>(rows.size());
      ad::adam_step(model.params(), grads, adam);
    }
    model.history.push_back({epoch, loss_total / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  return model;
}

double evaluate_accuracy(const AuditedModel& model, const LabeledTokens& labeled_set) {
  if (labeled_set.size() == 0) throw DataError("cannot evaluate accuracy on an empty set");
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < labeled_set.size(); start += kChunk) {
    std::vector<std::size_t> rows;
    for (std::size_t r = start; r < std::min(labeled_set.size(), start + kChunk); ++r) rows.push_back(r);
    LabeledTokens chunk = labeled_set.select(rows);
    Tensor probs = model.predict_proba(chunk.tokens);
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (argmax_row(probs, r) == static_cast<std::size_t>(chunk.labels[r])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labeled_set.size());
}

ordered_json to_json(const AuditedModelSpec& s) {
  return ordered_json{{"kind", to_string(s.kind)},       {"vocab_size", s.vocab_size}, {"max_len", s.max_len},
                      {"embed_dim", s.embed_dim},        {"hidden_dim", s.hidden_dim}, {"num_heads", s.num_heads},
                      {"num_classes", s.num_classes},    {"seed", s.seed}};
}

AuditedModelSpec spec_from_json(const json& j) {
  AuditedModelSpec s;
  s.kind = parse_model_kind(j.value("kind", to_string(s.kind)));
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.max_len = j.value("max_len", s.max_len);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.hidden_dim = j.value("hidden_dim", s.hidden_dim);
  s.num_heads = j.value("num_heads", s.num_heads);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.seed = j.value("seed", s.seed);
  return s;
}

ordered_json to_json(const TrainConfig& c) {
  return ordered_json{{"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  return c;
}

void AuditedModel::save(const std::filesystem::path& stem) const {
  auto params_path = stem;
  params_.save(params_path.replace_extension(".gmwt"));
  ordered_json hist = ordered_json::array();
  for (const auto& h : history) hist.push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"accuracy", h.accuracy}});
  ordered_json meta{{"spec", to_json(spec_)},
                    {"train_config", to_json(train_config)},
                    {"history", hist},
                    {"vocabulary", vocab_ ? ordered_json(vocab_->tokens()) : ordered_json(nullptr)},
                    {"training_ids", training_ids}};
  auto meta_path = stem;
  std::ofstream out(meta_path.replace_extension(".json"), std::ios::trunc);
  if (!out) throw Error("cannot write " + meta_path.string());
  out << meta.dump(1) << '\n';
}

AuditedModel AuditedModel::load(const std::filesystem::path& stem) {
  auto meta_path = stem;
  meta_path.replace_extension(".json");
  std::ifstream in(meta_path);
  if (!in) throw DependencyError("cannot open model metadata " + meta_path.string());
  json meta = json::parse(in);
  auto params_path = stem;
  AuditedModel model(spec_from_json(meta.at("spec")), ad::ParameterSet::load(params_path.replace_extension(".gmwt")));
  AuditedModel reference = build(model.spec_);
  if (reference.params_.size() != model.params_.size())
    throw ParseError("parameter file does not match the model spec", 0);
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    const auto& a = reference.params_.entries()[i];
    const auto& b = model.params_.entries()[i];
    if (a.name != b.name || a.tensor.shape() != b.tensor.shape())
      throw ParseError("parameter '" + b.name + "' does not match the model spec", 0);
  }
  model.train_config = train_config_from_json(meta.at("train_config"));
  for (const auto& h : meta.at("history"))
    model.history.push_back({h.at("epoch").get<int>(), h.at("loss").get<double>(), h.at("accuracy").get<double>()});
  if (!meta.at("vocabulary").is_null())
    model.set_vocabulary(text::Vocabulary(meta["vocabulary"].get<std::vector<std::string>>()));
  model.training_ids = meta.at("training_ids").get<std::vector<std::string>>();
  return model;
}

}  // namespace gmint::models
