#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gmint/common/errors.h"
#include "gmint/common/random.h"
#include "gmint/probe/features.h"
#include "gmint/probe/mint_dataset.h"
#include "gmint/text/split.h"
#include "gmint/text/synthetic.h"
#include "oracles.h"

namespace gmint::probe {
namespace {

using models::AuditedModel;
using models::AuditedModelSpec;
using models::ModelKind;

text::Corpus tiny_corpus() {
  text::Corpus c;
  c.name = "tiny";
  c.num_classes = 2;
  c.label_names = {"0", "1"};
  c.samples = {{"0", "a b b", 1}, {"1", "b c", 0}, {"2", "a a c d", 1}, {"3", "d", 0}};
  return c;
}

AuditedModel zero_logreg() {
  AuditedModelSpec spec;
  spec.kind = ModelKind::logreg;
  spec.vocab_size = 6;
  spec.max_len = 8;
  auto model = AuditedModel::build(spec);
  for (const auto& e : model.params().entries()) model.params().tensor(e.name).fill(0.0);
  model.set_vocabulary(text::Vocabulary({"<pad>", "<unk>", "a", "b", "c", "d"}));
  return model;
}

// Trained-ish model over a synthetic corpus, with training ids recorded.
struct Fixture {
  text::Corpus corpus;
  text::CorpusSplit split;
  AuditedModel model = AuditedModel::build({});
};

Fixture make_fixture(ModelKind kind) {
  Fixture fx;
  text::SynthSpec s;
  s.samples_per_class = 40;
  s.vocab_size = 90;
  s.seed = 3;
  fx.corpus = text::synth_corpus(s);
  fx.split = text::split(fx.corpus, 0.5, 1);
  AuditedModelSpec spec;
  spec.kind = kind;
  spec.vocab_size = 100;
  spec.max_len = 16;
  auto train = probe_samples(fx.corpus, fx.split.train_ids);
  std::vector<const text::Sample*> ptrs;
  std::vector<std::string> texts;
  for (const auto& p : train) {
    ptrs.push_back(p.sample);
    texts.push_back(p.sample->text);
  }
  auto vocab = text::build_vocab(texts, spec.vocab_size);
  spec.vocab_size = vocab.size();
  models::TrainConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  fx.model = models::train_audited(AuditedModel::build(spec), models::encode(ptrs, vocab, spec.max_len), config);
  fx.model.set_vocabulary(vocab);
  for (const auto& p : train) fx.model.training_ids.push_back(p.qualified_id());
  return fx;
}

TEST(LayerSelectorTest, ParsesAllForms) {
  EXPECT_EQ(LayerSelector::parse("first:2"), LayerSelector::first(2));
  EXPECT_EQ(LayerSelector::parse("last:3"), LayerSelector::last(3));
  EXPECT_EQ(LayerSelector::parse("names:a,b").names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(LayerSelector::parse("last:3").to_string(), "last:3");
  for (const char* bad : {"first", "first:0", "first:x", "middle:2", "names:", "names:a,,b", "last:2x"})
    EXPECT_THROW(LayerSelector::parse(bad), ConfigError) << bad;
}

TEST(LayerSelectorTest, ResolvesInLayerOrder) {
  AuditedModelSpec spec;
  auto params = AuditedModel::build(spec).params();
  EXPECT_EQ(LayerSelector::first(2).resolve(params),
            (std::vector<std::string>{"layer00.embedding.weight", "layer01.dense.weight"}));
  EXPECT_EQ(LayerSelector::last(3).resolve(params),
            (std::vector<std::string>{"layer01.dense.bias", "layer02.output.weight", "layer02.output.bias"}));
  EXPECT_EQ(LayerSelector::named_layers({"layer02.output.bias", "layer00.embedding.weight"}).resolve(params),
            (std::vector<std::string>{"layer00.embedding.weight", "layer02.output.bias"}));
  EXPECT_THROW(LayerSelector::named_layers({"layer09.missing"}).resolve(params), DataError);
  EXPECT_THROW(LayerSelector::first(6).resolve(params), DataError);
}

TEST(LayerSelectorTest, FrozenTensorsAreNotSelectable) {
  ad::ParameterSet params;
  params.add("a", ad::Tensor({2}));
  params.add("b", ad::Tensor({2}), false);
  params.add("c", ad::Tensor({2}));
  EXPECT_EQ(LayerSelector::last(2).resolve(params), (std::vector<std::string>{"a", "c"}));
  EXPECT_THROW(LayerSelector::named_layers({"b"}).resolve(params), DataError);
}

TEST(PerSampleGradientTest, LogisticExampleAtZeroWeights) {
  auto model = zero_logreg();
  text::Sample s{"x", "a b b", 1};  // bag of words over {a, b} = [1, 2]
  auto f = per_sample_gradient(model, {&s, "c"}, LayerSelector::first(2));
  ASSERT_EQ(f.feature.size(), 6u * 2u + 2u);
  // weight is [V, C] row-major; class-1 column of rows a and b
  EXPECT_NEAR(f.feature[2 * 2 + 1], -0.5 * 1.0, 1e-15);
  EXPECT_NEAR(f.feature[3 * 2 + 1], -0.5 * 2.0, 1e-15);
  EXPECT_NEAR(f.feature[2 * 2 + 0], 0.5 * 1.0, 1e-15);
  EXPECT_NEAR(f.feature[12 + 1], -0.5, 1e-15);
  EXPECT_EQ(f.sample_id, "c:x");
  EXPECT_EQ(f.source_corpus, "c");
}

TEST(PerSampleGradientTest, LogregMatchesClosedForm) {
  AuditedModelSpec spec;
  spec.kind = ModelKind::logreg;
  spec.vocab_size = 6;
  spec.max_len = 8;
  spec.num_classes = 3;
  spec.seed = 12;
  auto model = AuditedModel::build(spec);
  model.set_vocabulary(text::Vocabulary({"<pad>", "<unk>", "a", "b", "c", "d"}));
  const auto& W = model.params().tensor("layer00.embedding.weight");
  const auto& bias = model.params().tensor("layer00.embedding.bias");
  Rng rng(5);
  const char* words[] = {"a", "b", "c", "d", "zz"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string textv;
    std::vector<double> x(6, 0.0);
    std::size_t n = 1 + rng.below(7);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t w = rng.below(5);
      textv += std::string(words[w]) + " ";
      x[w == 4 ? 1 : w + 2] += 1.0;
    }
    int label = static_cast<int>(rng.below(3));
    text::Sample s{"s", textv, label};
    std::vector<double> logits(3);
    for (std::size_t c = 0; c < 3; ++c) {
      logits[c] = bias[c];
      for (std::size_t v = 0; v < 6; ++v) logits[c] += x[v] * W[v * 3 + c];
    }
    double mx = *std::max_element(logits.begin(), logits.end()), z = 0;
    std::vector<double> p(3);
    for (std::size_t c = 0; c < 3; ++c) z += p[c] = std::exp(logits[c] - mx);
    for (auto& v : p) v /= z;
    auto f = per_sample_gradient(model, {&s, "c"}, LayerSelector::first(2));
    for (std::size_t c = 0; c < 3; ++c) {
      double delta = p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0);
      for (std::size_t v = 0; v < 6; ++v) EXPECT_NEAR(f.feature[v * 3 + c], x[v] * delta, 1e-10);
      EXPECT_NEAR(f.feature[18 + c], delta, 1e-10);
    }
  }
}

TEST(PerSampleGradientTest, FeatureLengthFollowsSelection) {
  auto model = zero_logreg();
  EXPECT_EQ(feature_width(model, FeatureKind::gradient, LayerSelector::first(2)), 6u * 2u + 2u);
  EXPECT_EQ(feature_width(model, FeatureKind::embedding, LayerSelector::first(2)), 2u);
  AuditedModelSpec spec;
  auto mlp = AuditedModel::build(spec);
  EXPECT_EQ(feature_width(mlp, FeatureKind::gradient, LayerSelector::first(2)),
            spec.vocab_size * spec.embed_dim + spec.embed_dim * spec.hidden_dim);
  EXPECT_EQ(feature_width(mlp, FeatureKind::gradient, LayerSelector::last(3)),
            spec.hidden_dim + spec.hidden_dim * spec.num_classes + spec.num_classes);
  EXPECT_EQ(feature_width(mlp, FeatureKind::embedding, LayerSelector::first(2)), spec.hidden_dim);
}

TEST(PerSampleGradientTest, ProbingIsDeterministicAndDoesNotMutate) {
  for (auto kind : {ModelKind::logreg, ModelKind::mlp, ModelKind::tiny_transformer}) {
    auto fx = make_fixture(kind);
    auto before = fx.model.params().fingerprint();
    auto samples = probe_samples(fx.corpus, {fx.split.train_ids[0], fx.split.test_ids[0]});
    for (auto sel : {LayerSelector::first(2), LayerSelector::last(2)}) {
      auto a = per_sample_gradient(fx.model, samples[0], sel);
      auto b = per_sample_gradient(fx.model, samples[0], sel);
      EXPECT_EQ(a, b);
      EXPECT_EQ(a.feature.size(), feature_width(fx.model, FeatureKind::gradient, sel));
      auto e = embedding_feature(fx.model, samples[1]);
      EXPECT_EQ(e.feature.size(), feature_width(fx.model, FeatureKind::embedding, sel));
    }
    EXPECT_EQ(fx.model.params().fingerprint(), before) << models::to_string(kind);
  }
}

TEST(PerSampleGradientTest, GradientMatchesFiniteDifferences) {
  auto fx = make_fixture(ModelKind::mlp);
  auto sample = probe_samples(fx.corpus, {fx.split.train_ids[3]})[0];
  auto f = per_sample_gradient(fx.model, sample, LayerSelector::last(3));
  auto names = LayerSelector::last(3).resolve(fx.model.params());
  ad::TokenBatch tokens{1, fx.model.spec().max_len,
                        text::tokenize(sample.sample->text, fx.model.require_vocabulary(), fx.model.spec().max_len)};
  auto loss_at = [&](AuditedModel& m) {
    ad::Tape tape;
    return m.per_sample_loss(tape, tokens, {sample.sample->label}).value()[0];
  };
  std::size_t offset = 0;
  for (const auto& name : names) {
    auto& t = fx.model.params().tensor(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      double keep = t[i];
      t[i] = keep + 1e-5;
      double up = loss_at(fx.model);
      t[i] = keep - 1e-5;
      double down = loss_at(fx.model);
      t[i] = keep;
      EXPECT_LT(testing::relative_error(f.feature[offset + i], (up - down) / 2e-5), 1e-4) << name << "[" << i << "]";
    }
    offset += t.size();
  }
}

TEST(EmbeddingFeatureTest, IdenticalTextsGiveIdenticalFeatures) {
  auto fx = make_fixture(ModelKind::mlp);
  text::Sample a{"a", fx.corpus.samples[0].text, 0}, b{"b", fx.corpus.samples[0].text, 1};
  EXPECT_EQ(embedding_feature(fx.model, {&a, "x"}).feature, embedding_feature(fx.model, {&b, "x"}).feature);
  auto logreg = zero_logreg();
  EXPECT_EQ(embedding_feature(logreg, {&a, "x"}).feature.size(), 2u);
}

TEST(ProbeErrorsTest, MissingVocabularyOrBadLabel) {
  AuditedModel model = AuditedModel::build({});
  text::Sample s{"x", "a", 0};
  EXPECT_THROW(per_sample_gradient(model, {&s, "c"}, LayerSelector::first(2)), DataError);
  auto logreg = zero_logreg();
  text::Sample bad{"y", "a", 5};
  EXPECT_THROW(per_sample_gradient(logreg, {&bad, "c"}, LayerSelector::first(2)), DataError);
  EXPECT_THROW(per_sample_gradient(logreg, {&s, "c"}, LayerSelector::named_layers({"nope"})), DataError);
}

TEST(ExtractFeaturesTest, PermutationStableAndThreadCountIndependent) {
  auto fx = make_fixture(ModelKind::tiny_transformer);
  auto samples = probe_samples(fx.corpus, fx.split.test_ids);
  auto forward = extract_features(fx.model, samples, FeatureKind::gradient, LayerSelector::first(2));
  auto reversed_samples = samples;
  std::reverse(reversed_samples.begin(), reversed_samples.end());
  auto reversed = extract_features(fx.model, reversed_samples, FeatureKind::gradient, LayerSelector::first(2), 3);
  ASSERT_EQ(forward.size(), reversed.size());
  for (std::size_t i = 0; i < forward.size(); ++i) EXPECT_EQ(forward[i], reversed[forward.size() - 1 - i]);
}

TEST(MintDatasetTest, BalancedCountsAndSplit) {
  std::vector<GradientFeature> d, e;
  Rng rng(1);
  for (int i = 0; i < 750; ++i) {
    d.push_back({"t:d" + std::to_string(i), {rng.normal(), 3.0 + 10 * rng.normal(), 7.0}, 0, "t"});
    e.push_back({"t:e" + std::to_string(i), {rng.normal(), 10 * rng.normal(), 7.0}, 0, "t"});
  }
  auto ds = assemble_mint_dataset(d, e, {}, LayerSelector::first(2), FeatureKind::gradient, {});
  EXPECT_EQ(ds.features.size(), 1500u);
  EXPECT_EQ(ds.count_label(1), 750u);
  EXPECT_EQ(ds.count_label(0), 750u);
  EXPECT_EQ(ds.train_rows.size() + ds.test_rows.size(), 1500u);
  EXPECT_NEAR(static_cast<double>(ds.train_rows.size()) / 1500.0, 0.65, 1e-3);
  std::size_t train_members = 0;
  for (auto r : ds.train_rows) train_members += static_cast<std::size_t>(ds.features[r].membership_label);
  EXPECT_EQ(train_members, ds.train_rows.size() / 2);

  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (auto r : ds.train_rows) {
    auto z = ds.normalized(r);
    for (std::size_t j = 0; j < 3; ++j) {
      sum[j] += z[j];
      sq[j] += z[j] * z[j];
    }
  }
  double n = static_cast<double>(ds.train_rows.size());
  for (std::size_t j = 0; j < 3; ++j) EXPECT_LT(std::abs(sum[j] / n), 1e-9);
  EXPECT_NEAR(sq[0] / n, 1.0, 1e-9);
  EXPECT_NEAR(sq[1] / n, 1.0, 1e-9);
  EXPECT_EQ(ds.normalization.scale[2], 1.0);  // constant column passes through unscaled
  for (auto r : ds.test_rows)
    for (double v : ds.normalized(r)) EXPECT_TRUE(std::isfinite(v));
}

TEST(MintDatasetTest, NormalizationUsesTrainRowsOnly) {
  std::vector<GradientFeature> d, e;
  for (int i = 0; i < 20; ++i) {
    d.push_back({"t:d" + std::to_string(i), {static_cast<double>(i)}, 0, "t"});
    e.push_back({"t:e" + std::to_string(i), {static_cast<double>(100 + i)}, 0, "t"});
  }
  auto ds = assemble_mint_dataset(d, e, {}, LayerSelector::first(2), FeatureKind::gradient, {});
  double mean = 0;
  for (auto r : ds.train_rows) mean += ds.features[r].feature[0];
  mean /= static_cast<double>(ds.train_rows.size());
  EXPECT_DOUBLE_EQ(ds.normalization.mean[0], mean);
}

TEST(MintDatasetTest, OrderIndependentAndSeeded) {
  std::vector<GradientFeature> d, e;
  for (int i = 0; i < 30; ++i) {
    d.push_back({"t:d" + std::to_string(i), {static_cast<double>(i)}, 0, "t"});
    e.push_back({"t:e" + std::to_string(i), {-static_cast<double>(i)}, 0, "t"});
  }
  AssembleOptions opt;
  opt.seed = 4;
  auto a = assemble_mint_dataset(d, e, {}, LayerSelector::first(2), FeatureKind::gradient, opt);
  std::reverse(d.begin(), d.end());
  auto b = assemble_mint_dataset(d, e, {}, LayerSelector::first(2), FeatureKind::gradient, opt);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.train_rows, b.train_rows);
  opt.seed = 5;
  auto c = assemble_mint_dataset(d, e, {}, LayerSelector::first(2), FeatureKind::gradient, opt);
  EXPECT_NE(a.features, c.features);
  opt.permute_labels = true;
  auto p = assemble_mint_dataset(d, e, {}, LayerSelector::first(2), FeatureKind::gradient, opt);
  EXPECT_EQ(p.count_label(1), 30u);
}

TEST(MintDatasetTest, RejectsOverlapAndNonMembers) {
  auto fx = make_fixture(ModelKind::logreg);
  auto d = probe_samples(fx.corpus, {fx.split.train_ids[0], fx.split.train_ids[1]});
  auto e = probe_samples(fx.corpus, {fx.split.test_ids[0], fx.split.test_ids[1]});
  EXPECT_NO_THROW(build_mint_dataset(fx.model, d, e, LayerSelector::first(2), FeatureKind::gradient, {}));
  auto overlapping = e;
  overlapping.push_back(d[0]);
  EXPECT_THROW(build_mint_dataset(fx.model, d, overlapping, LayerSelector::first(2), FeatureKind::gradient, {}),
               DataError);
  EXPECT_THROW(build_mint_dataset(fx.model, e, d, LayerSelector::first(2), FeatureKind::gradient, {}), DataError);
  EXPECT_THROW(build_mint_dataset(fx.model, d, {}, LayerSelector::first(2), FeatureKind::gradient, {}), DataError);
  // same id from a different corpus is a different sample
  text::Corpus other = fx.corpus;
  other.name = "other";
  auto foreign = probe_samples(other, {fx.split.train_ids[0], fx.split.train_ids[1]});
  auto ds = build_mint_dataset(fx.model, d, foreign, LayerSelector::first(2), FeatureKind::gradient, {});
  EXPECT_EQ(ds.count_label(0), 2u);
  EXPECT_EQ(ds.model_fingerprint, fx.model.params().fingerprint());
}

TEST(FeatureFileTest, ByteLayoutAndRoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "gmint_probe_test.gmnt";
  FeatureFile file;
  file.kind = FeatureKind::embedding;
  file.selector_json = R"({"mode":"first_k","k":2})";
  file.model_fingerprint.fill(0xAB);
  file.rows = {{"c:1", {1.5, -2.0}, 1, "c"}, {"c:22", {0.25, 3.0}, 0, "c"}};
  write_features(file, path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t header = 4 + 4 + 1 + 8 + 8 + 4 + file.selector_json.size() + 32;
  EXPECT_EQ(bytes.size(), header + (2 + 3 + 1 + 8) + (2 + 4 + 1 + 8));
  EXPECT_EQ(bytes.substr(0, 4), "GMNT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);  // embedding
  EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 2u);  // column count low byte
  float first;
  std::memcpy(&first, bytes.data() + header + 2 + 3 + 1, 4);
  EXPECT_EQ(first, 1.5f);

  auto back = read_features(path);
  EXPECT_EQ(back.kind, file.kind);
  EXPECT_EQ(back.selector_json, file.selector_json);
  EXPECT_EQ(back.model_fingerprint, file.model_fingerprint);
  EXPECT_EQ(back.rows, file.rows);

  bytes[0] = 'X';
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_THROW(read_features(path), ParseError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_features(path), DependencyError);
}

}  // namespace
}  // namespace gmint::probe
