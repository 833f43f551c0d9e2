#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gmint/common/errors.h"
#include "gmint/common/random.h"
#include "gmint/text/corpus.h"
#include "gmint/text/split.h"
#include "gmint/text/synthetic.h"
#include "gmint/text/vocabulary.h"

namespace gmint::text {
namespace {

Corpus csv(const std::string& body) {
  std::istringstream in(body);
  return ingest_csv(in, "c");
}

Corpus jsonl(const std::string& body) {
  std::istringstream in(body);
  return ingest_jsonl(in, "j");
}

std::size_t error_line(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.line();
  }
  ADD_FAILURE() << "expected ParseError";
  return 0;
}

TEST(IngestTest, CsvWithStringLabels) {
  Corpus c = csv("text,label\ngood movie,pos\nbad movie,neg\n");
  ASSERT_EQ(c.samples.size(), 2u);
  EXPECT_EQ(c.num_classes, 2);
  EXPECT_EQ(c.label_names, (std::vector<std::string>{"neg", "pos"}));
  EXPECT_EQ(c.samples[0].label, 1);
  EXPECT_EQ(c.samples[1].label, 0);
  EXPECT_EQ(c.samples[0].id, "0");
}

TEST(IngestTest, CsvQuotingFollowsRfc4180) {
  Corpus c = csv("label,text,id\r\n1,\"a, \"\"quoted\"\"\nline\",x7\r\n0,plain,x8\r\n");
  ASSERT_EQ(c.samples.size(), 2u);
  EXPECT_EQ(c.samples[0].text, "a, \"quoted\"\nline");
  EXPECT_EQ(c.samples[0].id, "x7");
  EXPECT_EQ(c.samples[1].label, 0);
}

TEST(IngestTest, CsvEmptyTextReportsItsLine) {
  EXPECT_EQ(error_line([] { csv("text,label\nfine,a\n,b\n"); }), 3u);
}

TEST(IngestTest, CsvLineNumbersCountQuotedNewlines) {
  EXPECT_EQ(error_line([] { csv("text,label\n\"two\nlines\",a\nbroken\n"); }), 4u);
}

TEST(IngestTest, CsvMissingColumnAndEmptyFile) {
  EXPECT_EQ(error_line([] { csv("text,category\nx,1\n"); }), 1u);
  EXPECT_THROW(csv(""), ParseError);
  EXPECT_THROW(csv("text,label\n"), ParseError);
}

TEST(IngestTest, JsonlSingleSample) {
  Corpus c = jsonl("{\"text\":\"x\",\"label\":0}\n");
  ASSERT_EQ(c.samples.size(), 1u);
  EXPECT_EQ(c.samples[0].text, "x");
  EXPECT_EQ(c.num_classes, 1);
}

TEST(IngestTest, JsonlIntegerLabelsSortNumerically) {
  Corpus c = jsonl("{\"text\":\"a\",\"label\":10}\n{\"text\":\"b\",\"label\":2}\n{\"text\":\"c\",\"label\":-1}\n");
  EXPECT_EQ(c.label_names, (std::vector<std::string>{"-1", "2", "10"}));
  EXPECT_EQ(c.samples[0].label, 2);
}

TEST(IngestTest, JsonlErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line([] { jsonl("{\"text\":\"a\",\"label\":1}\n{\"text\":\"b\",\"label\":1.5}\n"); }), 2u);
  EXPECT_EQ(error_line([] { jsonl("{\"text\":\"a\",\"label\":1}\n\n{\"label\":1}\n"); }), 3u);
  EXPECT_EQ(error_line([] { jsonl("{\"text\":\"a\",\"label\":true}\n"); }), 1u);
  EXPECT_EQ(error_line([] { jsonl("not json\n"); }), 1u);
  EXPECT_EQ(error_line([] { jsonl("{\"text\":\"a\",\"label\":1,\"id\":\"k\"}\n{\"text\":\"b\",\"label\":1,\"id\":\"k\"}\n"); }),
            2u);
}

TEST(IngestTest, ExportThenLoadRoundTrips) {
  SynthSpec spec;
  spec.name = "roundtrip";
  spec.samples_per_class = 7;
  spec.num_classes = 3;
  Corpus original = synth_corpus(spec);
  original.samples[0].text = "quotes \" and, commas\nand \xc3\xa9";
  auto dir = std::filesystem::temp_directory_path() / "gmint_text_test";
  std::filesystem::create_directories(dir);
  export_corpus(original, dir / "c.jsonl");
  EXPECT_TRUE(std::filesystem::exists(dir / "c.meta.json"));
  EXPECT_EQ(load_corpus(dir / "c.jsonl"), original);
}

TEST(VocabularyTest, FrequencyOrderWithPadAndUnk) {
  Vocabulary v = build_vocab(std::vector<std::string>{"a b", "a c"}, 5);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "a", "b", "c"}));
  EXPECT_EQ(v.id("a"), 2);
}

TEST(VocabularyTest, CapIncludesSpecials) {
  Vocabulary v = build_vocab(std::vector<std::string>{"a b", "a c"}, 3);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "a"}));
  EXPECT_THROW(build_vocab(std::vector<std::string>{"a"}, 2), DataError);
}

TEST(VocabularyTest, TiesBreakLexicographically) {
  Vocabulary v = build_vocab(std::vector<std::string>{"c b a a"}, 10);
  EXPECT_LT(v.id("b"), v.id("c"));
}

TEST(VocabularyTest, SplitLowercasesAndDropsPunctuation) {
  EXPECT_EQ(split_words("Hello, WORLD!it's\tcaf\xc3\xa9"),
            (std::vector<std::string>{"hello", "world", "it", "s", "caf\xc3\xa9"}));
}

TEST(TokenizeTest, PadsTruncatesAndMapsUnknowns) {
  Vocabulary v = build_vocab(std::vector<std::string>{"a b", "a c"}, 5);
  EXPECT_EQ(tokenize("a b", v, 4), (std::vector<int>{v.id("a"), v.id("b"), 0, 0}));
  EXPECT_EQ(tokenize("", v, 4), (std::vector<int>{0, 0, 0, 0}));
  EXPECT_EQ(tokenize("z z z z z", v, 3), (std::vector<int>{1, 1, 1}));
}

TEST(TokenizeTest, LengthAndRangeInvariant) {
  Rng rng(1);
  Corpus c = synth_corpus(SynthSpec{});
  Vocabulary v = build_vocab(c, 50);
  for (const auto& s : c.samples) {
    std::size_t len = 1 + rng.below(30);
    auto ids = tokenize(s.text, v, len);
    ASSERT_EQ(ids.size(), len);
    for (int id : ids) ASSERT_LT(static_cast<std::size_t>(id), v.size());
  }
}

Corpus labelled(const std::vector<int>& labels, int classes) {
  Corpus c;
  c.name = "l";
  c.num_classes = classes;
  for (std::size_t i = 0; i < labels.size(); ++i) c.samples.push_back({"s" + std::to_string(i), "t", labels[i]});
  return c;
}

TEST(SplitTest, SixtyFiveThirtyFiveOfHundred) {
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
  auto s = split(labelled(labels, 2), 0.65, 3);
  EXPECT_EQ(s.train_ids.size(), 65u);
  EXPECT_EQ(s.test_ids.size(), 35u);
}

TEST(SplitTest, SameSeedSameSplit) {
  Corpus c = synth_corpus(SynthSpec{});
  auto a = split(c, 0.65, 9);
  auto b = split(c, 0.65, 9);
  EXPECT_EQ(a.train_ids, b.train_ids);
  EXPECT_NE(split(c, 0.65, 10).train_ids, a.train_ids);
}

TEST(SplitTest, RandomCorporaArePartitionedAndStratified) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    int classes = 1 + static_cast<int>(rng.below(5));
    std::vector<int> labels;
    std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
    for (int c = 0; c < classes; ++c) {
      int n = 2 + static_cast<int>(rng.below(40));
      per_class[static_cast<std::size_t>(c)] = n;
      for (int i = 0; i < n; ++i) labels.push_back(c);
    }
    rng.shuffle(labels);
    double ratio = rng.uniform(0.05, 0.95);
    Corpus c = labelled(labels, classes);
    auto s = split(c, ratio, rng.next_u64());
    std::set<std::string> train(s.train_ids.begin(), s.train_ids.end());
    std::set<std::string> test(s.test_ids.begin(), s.test_ids.end());
    ASSERT_EQ(train.size() + test.size(), labels.size());
    for (const auto& id : test) ASSERT_FALSE(train.count(id));
    ASSERT_EQ(train.size(), static_cast<std::size_t>(std::floor(ratio * static_cast<double>(labels.size()))));
    auto index = c.index_by_id();
    std::vector<int> got(static_cast<std::size_t>(classes), 0);
    for (const auto& id : train) ++got[static_cast<std::size_t>(c.samples[index[id]].label)];
    for (int k = 0; k < classes; ++k)
      ASSERT_LE(std::abs(got[static_cast<std::size_t>(k)] - ratio * per_class[static_cast<std::size_t>(k)]), 1.0);
  }
}

TEST(SplitTest, SingletonClassCannotBeStratified) {
  EXPECT_THROW(split(labelled({0, 0, 1}, 2), 0.65, 1), DataError);
  EXPECT_THROW(split(labelled({0, 0, 1, 1}, 2), 1.0, 1), DataError);
}

TEST(SynthTest, SameSpecSameCorpus) {
  SynthSpec spec;
  spec.seed = 77;
  EXPECT_EQ(synth_corpus(spec), synth_corpus(spec));
  SynthSpec other = spec;
  other.seed = 78;
  EXPECT_NE(synth_corpus(other).samples, synth_corpus(spec).samples);
}

TEST(SynthTest, FullSignalUsesDisjointClassVocabularies) {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.class_signal_strength = 1.0;
  Corpus c = synth_corpus(spec);
  std::vector<std::set<std::string>> words(3);
  for (const auto& s : c.samples)
    for (auto& w : split_words(s.text)) words[static_cast<std::size_t>(s.label)].insert(w);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      for (const auto& w : words[static_cast<std::size_t>(a)]) EXPECT_FALSE(words[static_cast<std::size_t>(b)].count(w));
}

TEST(SynthTest, RejectsBadSpecs) {
  SynthSpec spec;
  spec.class_signal_strength = 1.5;
  EXPECT_THROW(synth_corpus(spec), DataError);
  spec = SynthSpec{};
  spec.samples_per_class = 0;
  EXPECT_THROW(synth_corpus(spec), DataError);
}

}  // namespace
}  // namespace gmint::text
