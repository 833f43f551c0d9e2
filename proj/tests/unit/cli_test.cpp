#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gmint/cli/commands.h"
#include "gmint/common/hashing.h"
#include "json.hpp"

namespace gmint::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result gmint(std::vector<std::string> args) {
  args.insert(args.begin(), "gmint");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

json read(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json small_config(const fs::path& out) {
  return json{
      {"schema_version", 1},
      {"seed", 11},
      {"output_dir", out.string()},
      {"target",
       {{"name", "four"},
        {"synthetic",
         {{"num_classes", 4}, {"samples_per_class", 60}, {"vocab_size", 80}, {"min_tokens", 4}, {"max_tokens", 8}}}}},
      {"externals",
       json::array({{{"name", "other"},
                     {"synthetic", {{"num_classes", 2}, {"samples_per_class", 40}, {"vocab_size", 80}, {"word_prefix", "x"}}}}})},
      {"model", {{"kind", "mlp"}, {"vocab_size", 100}, {"max_len", 8}, {"embed_dim", 4}, {"hidden_dim", 8}, {"num_classes", 4}}},
      {"training", {{"epochs", 4}, {"batch_size", 32}}},
      {"selector", "last:3"},
      {"auditor", {{"hidden_layers", {16, 8}}, {"epochs", 4}}},
      {"sweep", {{"size_pairs", json::array({{{"n_d", 40}, {"n_e", 40}}, {{"n_d", 20}, {"n_e", 20}}})}, {"repetitions", 2}}}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("gmint_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string write_config(const json& j, const std::string& name = "config.json") {
    auto p = dir / name;
    std::ofstream(p) << j.dump(1);
    return p.string();
  }

  fs::path dir;
};

TEST_F(CliTest, GenDataWritesCorpusAndSidecarDeterministically) {
  auto cfg = write_config(small_config(dir / "out"));
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  auto corpus = dir / "out/corpora/four.jsonl";
  auto meta = dir / "out/corpora/four.meta.json";
  ASSERT_TRUE(fs::exists(corpus));
  ASSERT_TRUE(fs::exists(meta));
  EXPECT_EQ(read(meta)["num_classes"], 4);
  EXPECT_TRUE(read(meta).contains("config_hash"));
  auto first = to_hex(sha256_file(corpus));
  auto first_meta = to_hex(sha256_file(meta));
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  EXPECT_EQ(to_hex(sha256_file(corpus)), first);
  EXPECT_EQ(to_hex(sha256_file(meta)), first_meta);
}

TEST_F(CliTest, MissingSpecIsUsageError) {
  auto j = small_config(dir / "out");
  j.erase("target");
  auto r = gmint({"gen-data", "--config", write_config(j)});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("target"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(gmint({}).code, kExitUsage);
  EXPECT_EQ(gmint({"gen-data"}).code, kExitUsage);
  EXPECT_EQ(gmint({"bogus"}).code, kExitUsage);
  EXPECT_EQ(gmint({"gen-data", "--config", (dir / "absent.json").string()}).code, kExitUsage);
  auto j = small_config(dir / "out");
  j["colour"] = "blue";
  EXPECT_EQ(gmint({"gen-data", "--config", write_config(j)}).code, kExitUsage);
  j = small_config(dir / "out");
  j.erase("schema_version");
  EXPECT_EQ(gmint({"gen-data", "--config", write_config(j)}).code, kExitUsage);
  auto cfg = write_config(small_config(dir / "out"));
  EXPECT_EQ(gmint({"gen-data", "--config", cfg, "--protocol", "sideways"}).code, kExitUsage);
  EXPECT_EQ(gmint({"gen-data", "--config", cfg, "--selector", "middle:2"}).code, kExitUsage);
}

TEST_F(CliTest, FullPipelineOnFourClassCorpus) {
  auto r = gmint({"run", "--config", write_config(small_config(dir / "out"))});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = read(dir / "out/report/report.json");
  EXPECT_EQ(report["target_corpus"], "four");
  EXPECT_EQ(report["audited_model"]["spec"]["num_classes"], 4);
  ASSERT_EQ(report["results"].size(), 1u);
  double auc = report["results"][0]["auc"];
  EXPECT_GE(auc, 0.0);
  EXPECT_LE(auc, 1.0);
  EXPECT_EQ(report["cells"][0]["n_d"], 40);
  EXPECT_EQ(read(dir / "out/sweep/report.json")["results"].size(), 2u);
  EXPECT_EQ(gmint({"verify", "--output", (dir / "out").string()}).code, 0);
}

TEST_F(CliTest, EveryArtifactCarriesTheConfigHash) {
  auto cfg = write_config(small_config(dir / "out"));
  ASSERT_EQ(gmint({"run", "--config", cfg}).code, 0);
  auto hash = read(dir / "out/config.json")["config_hash"].get<std::string>();
  for (const auto* p : {"corpora/four.meta.json", "model/model.json", "features/features.json", "auditor/auditor.json",
                        "report/report.json", "sweep/report.json", "sweep/cells/0.json"})
    EXPECT_EQ(read(dir / "out" / p)["config_hash"], hash) << p;
  for (const auto& [role, e] : read(dir / "out/index.json")["artifacts"].items()) EXPECT_EQ(e["config_hash"], hash) << role;
}

TEST_F(CliTest, TamperedModelIsRejected) {
  auto cfg = write_config(small_config(dir / "out"));
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  ASSERT_EQ(gmint({"train-target", "--config", cfg}).code, 0);
  {
    std::fstream f(dir / "out/model/model.gmwt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x5a');
  }
  auto r = gmint({"extract-features", "--config", cfg});
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("hash"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("model"), std::string::npos) << r.err;
  auto v = gmint({"verify", "--output", (dir / "out").string()});
  EXPECT_EQ(v.code, kExitDependency);
  EXPECT_NE(v.out.find("model.gmwt"), std::string::npos) << v.out;
}

TEST_F(CliTest, EvaluateWithoutFeaturesIsDependencyError) {
  auto cfg = write_config(small_config(dir / "out"));
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  ASSERT_EQ(gmint({"train-target", "--config", cfg}).code, 0);
  auto r = gmint({"evaluate", "--config", cfg});
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("features"), std::string::npos) << r.err;
  EXPECT_EQ(gmint({"train-target", "--config", write_config(small_config(dir / "empty"), "e.json")}).code,
            kExitDependency);
}

TEST_F(CliTest, ChangedAuditorConfigMakesAuditorStale) {
  auto j = small_config(dir / "out");
  ASSERT_EQ(gmint({"run", "--config", write_config(j)}).code, 0);
  j["auditor"]["epochs"] = 5;
  auto cfg = write_config(j);
  auto r = gmint({"evaluate", "--config", cfg});
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("stale"), std::string::npos) << r.err;
  EXPECT_EQ(gmint({"train-auditor", "--config", cfg}).code, 0);
  EXPECT_EQ(gmint({"evaluate", "--config", cfg}).code, 0);
}

TEST_F(CliTest, DefaultPlanGivesFiveClampedEntries) {
  auto j = small_config(dir / "out");
  j.erase("sweep");
  auto cfg = write_config(j);
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  ASSERT_EQ(gmint({"train-target", "--config", cfg}).code, 0);
  auto r = gmint({"sweep", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = read(dir / "out/sweep/report.json");
  ASSERT_EQ(report["results"].size(), 5u);
  std::size_t largest = report["results"][0]["size_d"];
  EXPECT_LE(largest, 120u);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_LT(report["results"][i]["size_d"].get<std::size_t>(), largest);
}

TEST_F(CliTest, MixedProtocolReportsPoolComposition) {
  auto cfg = write_config(small_config(dir / "out"));
  auto r = gmint({"run", "--config", cfg, "--protocol", "mixed"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = read(dir / "out/sweep/report.json");
  EXPECT_EQ(report["protocol"], "mixed");
  EXPECT_EQ(report["external_corpora"], json::array({"other"}));
  EXPECT_EQ(report["e_pool_sizes"]["other"], 80);
  EXPECT_EQ(report["e_pool_sizes"]["four"], 120);
  for (const auto& cell : report["cells"]) {
    std::size_t total = 0;
    for (const auto& [name, n] : cell["e_composition"].items()) total += n.get<std::size_t>();
    EXPECT_EQ(total, cell["n_e"].get<std::size_t>());
  }
}

TEST_F(CliTest, SweepResumesFromFinishedCells) {
  auto cfg = write_config(small_config(dir / "out"));
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  ASSERT_EQ(gmint({"train-target", "--config", cfg}).code, 0);
  ASSERT_EQ(gmint({"sweep", "--config", cfg}).code, 0);
  auto full = read(dir / "out/sweep/report.json");
  fs::remove(dir / "out/sweep/cells/2.json");
  fs::remove(dir / "out/sweep/report.json");
  auto r = gmint({"sweep", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1 computed, 3 reused"), std::string::npos) << r.out;
  auto resumed = read(dir / "out/sweep/report.json");
  full.erase("timestamps");
  resumed.erase("timestamps");
  EXPECT_EQ(full, resumed);
}

TEST_F(CliTest, RunsAreByteIdenticalApartFromTimestamps) {
  auto j = small_config(dir / "a");
  ASSERT_EQ(gmint({"run", "--config", write_config(j, "a.json")}).code, 0);
  j["output_dir"] = (dir / "b").string();
  j["jobs"] = 2;
  ASSERT_EQ(gmint({"run", "--config", write_config(j, "b.json")}).code, 0);
  EXPECT_EQ(bytes(dir / "a/features/features.gmnt"), bytes(dir / "b/features/features.gmnt"));
  for (const auto* p : {"report/report.json", "sweep/report.json"}) {
    auto a = read(dir / "a" / p), b = read(dir / "b" / p);
    a.erase("timestamps");
    b.erase("timestamps");
    EXPECT_EQ(a.dump(), b.dump()) << p;
  }
  EXPECT_EQ(bytes(dir / "a/sweep/roc/cell3.csv"), bytes(dir / "b/sweep/roc/cell3.csv"));
}

TEST_F(CliTest, ConfigHashIgnoresOutputDirAndJobs) {
  auto j = small_config(dir / "a");
  auto a = config_from_json(j);
  j["output_dir"] = "elsewhere";
  j["jobs"] = 4;
  auto b = config_from_json(j);
  EXPECT_EQ(config_hash(a), config_hash(b));
  j["seed"] = 12;
  EXPECT_NE(config_hash(config_from_json(j)), config_hash(a));
}

TEST_F(CliTest, SeedFlagRederivesCorpusSeeds) {
  auto cfg = write_config(small_config(dir / "out"));
  ASSERT_EQ(gmint({"gen-data", "--config", cfg}).code, 0);
  auto first = bytes(dir / "out/corpora/four.jsonl");
  ASSERT_EQ(gmint({"gen-data", "--config", cfg, "--seed", "12"}).code, 0);
  EXPECT_NE(bytes(dir / "out/corpora/four.jsonl"), first);
}

TEST_F(CliTest, ConcurrentUseOfOutputDirIsRejected) {
  auto cfg = write_config(small_config(dir / "out"));
  OutputLock held(dir / "out");
  auto r = gmint({"gen-data", "--config", cfg});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("in use"), std::string::npos) << r.err;
}

TEST_F(CliTest, IngestsCsvSources) {
  std::ofstream(dir / "reviews.csv") << "id,text,label\na,good film,pos\nb,bad film,neg\nc,great film,pos\nd,awful film,neg\n";
  auto j = small_config(dir / "out");
  j["target"] = {{"path", "reviews.csv"}};
  j.erase("externals");
  auto r = gmint({"gen-data", "--config", write_config(j)});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read(dir / "out/corpora/reviews.meta.json")["label_names"], json::array({"neg", "pos"}));
}

}  // namespace
}  // namespace gmint::cli
