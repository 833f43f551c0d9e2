#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "gmint/autodiff/ops.h"
#include "gmint/common/errors.h"
#include "gmint/models/audited_model.h"
#include "gmint/text/split.h"
#include "gmint/text/synthetic.h"

namespace gmint::models {
namespace {

struct Encoded {
  text::Vocabulary vocab;
  LabeledTokens all;
};

Encoded encode_corpus(const text::Corpus& corpus, std::size_t vocab_size, std::size_t max_len) {
  text::Vocabulary vocab = text::build_vocab(corpus, vocab_size);
  std::vector<const text::Sample*> ptrs;
  for (const auto& s : corpus.samples) ptrs.push_back(&s);
  return {vocab, encode(ptrs, vocab, max_len)};
}

text::SynthSpec small_synth(double signal, std::size_t per_class, std::uint64_t seed) {
  text::SynthSpec s;
  s.samples_per_class = per_class;
  s.vocab_size = 120;
  s.class_signal_strength = signal;
  s.seed = seed;
  return s;
}

TEST(BuildModelTest, LogregHasTwoTensors) {
  AuditedModelSpec spec;
  spec.kind = ModelKind::logreg;
  spec.vocab_size = 100;
  auto model = AuditedModel::build(spec);
  const auto& entries = model.params().entries();
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].name, "layer00.embedding.weight");
  EXPECT_EQ(entries[0].tensor.shape(), (ad::Shape{100, 2}));
  EXPECT_EQ(entries[1].tensor.shape(), (ad::Shape{2}));
  EXPECT_TRUE(entries[0].trainable && entries[1].trainable);
}

TEST(BuildModelTest, TransformerHeadsMustDivideEmbedding) {
  AuditedModelSpec spec;
  spec.kind = ModelKind::tiny_transformer;
  spec.embed_dim = 8;
  spec.num_heads = 2;
  EXPECT_NO_THROW(AuditedModel::build(spec));
  spec.num_heads = 3;
  EXPECT_THROW(AuditedModel::build(spec), DimensionError);
}

TEST(BuildModelTest, SameSeedIsBitIdentical) {
  for (auto kind : {ModelKind::logreg, ModelKind::mlp, ModelKind::tiny_transformer}) {
    AuditedModelSpec spec;
    spec.kind = kind;
    spec.seed = 17;
    EXPECT_EQ(AuditedModel::build(spec).params(), AuditedModel::build(spec).params());
    EXPECT_EQ(AuditedModel::build(spec).params().serialize(), AuditedModel::build(spec).params().serialize());
    spec.seed = 18;
    auto other = AuditedModel::build(spec);
    spec.seed = 17;
    EXPECT_FALSE(other.params() == AuditedModel::build(spec).params());
  }
}

TEST(BuildModelTest, LayerNamesFollowForwardOrder) {
  AuditedModelSpec spec;
  spec.kind = ModelKind::tiny_transformer;
  auto names = AuditedModel::build(spec).params().trainable_names();
  ASSERT_EQ(names.size(), 16u);
  EXPECT_EQ(names.front(), "layer00.embedding.weight");
  EXPECT_EQ(names.back(), "layer03.output.bias");
  EXPECT_TRUE(std::is_sorted(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    return a.substr(0, 7) < b.substr(0, 7);
  }));
}

TEST(ModelKindTest, ParsesNames) {
  EXPECT_EQ(parse_model_kind("tiny_transformer"), ModelKind::tiny_transformer);
  EXPECT_EQ(to_string(ModelKind::mlp), "mlp");
  EXPECT_THROW(parse_model_kind("blstm"), ConfigError);
}

TEST(ModelForwardTest, ProbabilitiesSumToOne) {
  auto corpus = text::synth_corpus(small_synth(0.5, 20, 3));
  for (auto kind : {ModelKind::logreg, ModelKind::mlp, ModelKind::tiny_transformer}) {
    AuditedModelSpec spec;
    spec.kind = kind;
    spec.vocab_size = 80;
    spec.max_len = 16;
    spec.num_classes = 3;
    auto enc = encode_corpus(corpus, spec.vocab_size, spec.max_len);
    auto probs = AuditedModel::build(spec).predict_proba(enc.all.tokens);
    ASSERT_EQ(probs.shape(), (ad::Shape{40, 3}));
    for (std::size_t r = 0; r < 40; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_GE(probs[r * 3 + c], 0.0);
        total += probs[r * 3 + c];
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(ModelForwardTest, RejectsWrongSequenceLength) {
  AuditedModelSpec spec;
  spec.max_len = 10;
  ad::TokenBatch tokens{1, 9, std::vector<int>(9, 2)};
  EXPECT_THROW(AuditedModel::build(spec).predict_proba(tokens), DimensionError);
}

TEST(ModelForwardTest, MeanPoolIgnoresPadding) {
  AuditedModelSpec spec;
  spec.max_len = 6;
  spec.seed = 4;
  auto mlp = AuditedModel::build(spec);
  auto single = mlp.predict_proba({1, 6, {5, 0, 0, 0, 0, 0}});
  auto repeated = mlp.predict_proba({1, 6, {5, 5, 5, 0, 0, 0}});
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(single[i], repeated[i], 1e-12);
}

TEST(TrainAuditedTest, SeparableLogregReachesHighAccuracy) {
  auto corpus = text::synth_corpus(small_synth(1.0, 100, 11));
  AuditedModelSpec spec;
  spec.kind = ModelKind::logreg;
  spec.vocab_size = 130;
  auto enc = encode_corpus(corpus, spec.vocab_size, spec.max_len);
  TrainConfig config;
  config.seed = 2;
  auto model = train_audited(AuditedModel::build(spec), enc.all, config);
  ASSERT_EQ(model.history.size(), 50u);
  EXPECT_LE(model.history.back().loss, model.history.front().loss);
  EXPECT_GE(evaluate_accuracy(model, enc.all), 0.99);
}

TEST(TrainAuditedTest, SingleSampleLossDecreasesMonotonically) {
  auto corpus = text::synth_corpus(small_synth(0.5, 5, 1));
  auto enc = encode_corpus(corpus, 80, 24);
  auto one = enc.all.select({0});
  for (auto kind : {ModelKind::logreg, ModelKind::mlp, ModelKind::tiny_transformer}) {
    AuditedModelSpec spec;
    spec.kind = kind;
    spec.vocab_size = 80;
    TrainConfig config;
    config.epochs = 5;
    auto model = train_audited(AuditedModel::build(spec), one, config);
    for (std::size_t e = 1; e < model.history.size(); ++e)
      EXPECT_LT(model.history[e].loss, model.history[e - 1].loss) << to_string(kind) << " epoch " << e + 1;
  }
}

TEST(TrainAuditedTest, RejectsBadConfigAndData) {
  AuditedModelSpec spec;
  LabeledTokens data;
  data.tokens = {1, spec.max_len, std::vector<int>(spec.max_len, 2)};
  data.labels = {0};
  TrainConfig config;
  config.epochs = 0;
  EXPECT_THROW(train_audited(AuditedModel::build(spec), data, config), DataError);
  config.epochs = 1;
  data.labels = {2};
  EXPECT_THROW(train_audited(AuditedModel::build(spec), data, config), DataError);
  EXPECT_THROW(train_audited(AuditedModel::build(spec), LabeledTokens{}, config), DataError);
}

TEST(TrainAuditedTest, NonFiniteLossNamesLocation) {
  AuditedModelSpec spec;
  spec.kind = ModelKind::logreg;
  auto model = AuditedModel::build(spec);
  for (auto& v : model.params().tensor("layer00.embedding.bias").data()) v = std::nan("");
  LabeledTokens data;
  data.tokens = {2, spec.max_len, std::vector<int>(2 * spec.max_len, 3)};
  data.labels = {0, 1};
  TrainConfig config;
  config.epochs = 2;
  try {
    train_audited(model, data, config);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1, batch 0"), std::string::npos) << e.what();
  }
}

TEST(TrainAuditedTest, DeterministicUnderFixedSeed) {
  auto corpus = text::synth_corpus(small_synth(0.4, 30, 5));
  AuditedModelSpec spec;
  spec.kind = ModelKind::tiny_transformer;
  spec.vocab_size = 100;
  spec.max_len = 12;
  auto enc = encode_corpus(corpus, spec.vocab_size, spec.max_len);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.seed = 9;
  auto a = train_audited(AuditedModel::build(spec), enc.all, config);
  auto b = train_audited(AuditedModel::build(spec), enc.all, config);
  EXPECT_EQ(a.params().serialize(), b.params().serialize());
  config.seed = 10;
  auto c = train_audited(AuditedModel::build(spec), enc.all, config);
  EXPECT_NE(a.params().serialize(), c.params().serialize());
}

TEST(EvaluateAccuracyTest, UntrainedModelIsNearChance) {
  auto corpus = text::synth_corpus(small_synth(0.5, 100, 21));
  auto enc = encode_corpus(corpus, 120, 24);
  double total = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    AuditedModelSpec spec;
    spec.vocab_size = 120;
    spec.seed = static_cast<std::uint64_t>(seed);
    total += evaluate_accuracy(AuditedModel::build(spec), enc.all);
  }
  double mean = total / seeds;
  EXPECT_GE(mean, 0.35);
  EXPECT_LE(mean, 0.65);
}

TEST(EvaluateAccuracyTest, MemorizedSetScoresPerfectly) {
  auto corpus = text::synth_corpus(small_synth(0.0, 5, 8));
  AuditedModelSpec spec;
  spec.vocab_size = 120;
  auto enc = encode_corpus(corpus, spec.vocab_size, spec.max_len);
  ASSERT_EQ(enc.all.size(), 10u);
  TrainConfig config;
  config.epochs = 200;
  config.learning_rate = 1e-2;
  auto model = train_audited(AuditedModel::build(spec), enc.all, config);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(model, enc.all), 1.0);
}

TEST(EvaluateAccuracyTest, TiesGoToLowestClass) {
  AuditedModelSpec spec;
  spec.kind = ModelKind::logreg;
  auto model = AuditedModel::build(spec);
  for (auto& e : model.params().entries()) model.params().tensor(e.name).fill(0.0);
  LabeledTokens data;
  data.tokens = {2, spec.max_len, std::vector<int>(2 * spec.max_len, 4)};
  data.labels = {0, 1};
  EXPECT_DOUBLE_EQ(evaluate_accuracy(model, data), 0.5);
  EXPECT_DOUBLE_EQ(evaluate_accuracy(model, data.select({0})), 1.0);
}

TEST(EvaluateAccuracyTest, EmptySetIsAnError) {
  EXPECT_THROW(evaluate_accuracy(AuditedModel::build({}), LabeledTokens{}), DataError);
}

TEST(EvaluateAccuracyTest, OverfittingGapAtModerateSignal) {
  auto corpus = text::synth_corpus(small_synth(0.3, 150, 13));
  auto sp = text::split(corpus, 0.5, 3);
  auto index = corpus.index_by_id();
  auto gather = [&](const std::vector<std::string>& ids) {
    std::vector<const text::Sample*> out;
    for (const auto& id : ids) out.push_back(&corpus.samples[index.at(id)]);
    return out;
  };
  AuditedModelSpec spec;
  spec.vocab_size = 130;
  auto train_samples = gather(sp.train_ids);
  std::vector<std::string> train_texts;
  for (const auto* s : train_samples) train_texts.push_back(s->text);
  auto vocab = text::build_vocab(train_texts, spec.vocab_size);
  auto train = encode(train_samples, vocab, spec.max_len);
  auto test = encode(gather(sp.test_ids), vocab, spec.max_len);
  TrainConfig config;
  config.batch_size = 32;
  config.learning_rate = 1e-2;
  auto model = train_audited(AuditedModel::build(spec), train, config);
  EXPECT_GT(evaluate_accuracy(model, train) - evaluate_accuracy(model, test), 0.0);
}

TEST(ModelPersistenceTest, SaveLoadRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "gmint_models_test";
  std::filesystem::create_directories(dir);
  auto corpus = text::synth_corpus(small_synth(0.5, 10, 2));
  AuditedModelSpec spec;
  spec.kind = ModelKind::tiny_transformer;
  spec.vocab_size = 90;
  auto enc = encode_corpus(corpus, spec.vocab_size, spec.max_len);
  TrainConfig config;
  config.epochs = 2;
  auto model = train_audited(AuditedModel::build(spec), enc.all, config);
  model.set_vocabulary(enc.vocab);
  model.training_ids = {"a", "b"};
  model.save(dir / "model");
  auto loaded = AuditedModel::load(dir / "model");
  EXPECT_EQ(loaded.spec(), model.spec());
  EXPECT_EQ(loaded.params(), model.params());
  EXPECT_EQ(loaded.train_config, model.train_config);
  ASSERT_EQ(loaded.history.size(), 2u);
  EXPECT_EQ(loaded.history[1].loss, model.history[1].loss);
  EXPECT_EQ(loaded.require_vocabulary().tokens(), enc.vocab.tokens());
  EXPECT_EQ(loaded.training_ids, model.training_ids);
  EXPECT_EQ(loaded.predict_proba(enc.all.tokens), model.predict_proba(enc.all.tokens));
  std::filesystem::remove_all(dir);
}

TEST(ModelPersistenceTest, MissingFilesAreDependencyErrors) {
  EXPECT_THROW(AuditedModel::load("/nonexistent/model"), DependencyError);
  EXPECT_THROW(AuditedModel::build({}).require_vocabulary(), DataError);
}

}  // namespace
}  // namespace gmint::models
