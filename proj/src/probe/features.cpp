#include "gmint/probe/features.h"

#include <cmath>
#include <fstream>
#include <thread>

#include "gmint/autodiff/ops.h"
#include "gmint/common/binary_io.h"
#include "gmint/common/errors.h"

namespace gmint::probe {

namespace {

ad::TokenBatch tokenize_one(const models::AuditedModel& model, const text::Sample& sample) {
  const auto& vocab = model.require_vocabulary();
  std::size_t len = model.spec().max_len;
  return {1, len, text::tokenize(sample.text, vocab, len)};
}

GradientFeature record_for(const ProbeSample& s) {
  GradientFeature f;
  f.sample_id = s.qualified_id();
  f.source_corpus = s.corpus;
  return f;
}

void require_finite(const std::vector<double>& v, const std::string& what, const std::string& id) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError("non-finite " + what + " for sample " + id);
}

}  // namespace

std::string to_string(FeatureKind kind) { return kind == FeatureKind::gradient ? "gradient" : "embedding"; }

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "gradient") return FeatureKind::gradient;
  if (name == "embedding") return FeatureKind::embedding;
  throw ConfigError("unknown feature kind '" + name + "' (expected gradient or embedding)");
}

std::vector<ProbeSample> probe_samples(const text::Corpus& corpus, const std::vector<std::string>& ids) {
  auto index = corpus.index_by_id();
  std::vector<ProbeSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("sample '" + id + "' not found in corpus " + corpus.name);
    out.push_back({&corpus.samples[it->second], corpus.name});
  }
  return out;
}

GradientFeature per_sample_gradient(const models::AuditedModel& model, const ProbeSample& sample,
                                    const LayerSelector& selector) {
  auto selected = selector.resolve(model.params());
  int label = sample.sample->label;
  if (label < 0 || static_cast<std::size_t>(label) >= model.spec().num_classes)
    throw DataError("label " + std::to_string(label) + " of sample " + sample.qualified_id() +
                    " outside the model's classes");
  ad::Tape tape;
  auto grads = tape.backward(ad::sum(model.per_sample_loss(tape, tokenize_one(model, *sample.sample), {label})));
  GradientFeature f = record_for(sample);
  for (const auto& name : selected) {
    const auto& g = grads.at(name).values();
    f.feature.insert(f.feature.end(), g.begin(), g.end());
  }
  require_finite(f.feature, "gradient", f.sample_id);
  return f;
}

GradientFeature embedding_feature(const models::AuditedModel& model, const ProbeSample& sample) {
  ad::Tape tape;
  auto fwd = model.forward(tape, tokenize_one(model, *sample.sample));
  GradientFeature f = record_for(sample);
  f.feature = fwd.penultimate.value().values();
  require_finite(f.feature, "embedding", f.sample_id);
  return f;
}

std::vector<GradientFeature> extract_features(const models::AuditedModel& model,
                                              const std::vector<ProbeSample>& samples, FeatureKind kind,
                                              const LayerSelector& selector, std::size_t jobs) {
  std::vector<GradientFeature> out(samples.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < samples.size(); i += step)
      out[i] = kind == FeatureKind::gradient ? per_sample_gradient(model, samples[i], selector)
                                             : embedding_feature(model, samples[i]);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, samples.size()));
  if (jobs == 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < jobs; ++j)
    threads.emplace_back([&, j] {
      try {
        work(j, jobs);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::size_t feature_width(const models::AuditedModel& model, FeatureKind kind, const LayerSelector& selector) {
  const auto& spec = model.spec();
  if (kind == FeatureKind::embedding) {
    switch (spec.kind) {
      case models::ModelKind::logreg: return spec.num_classes;
      case models::ModelKind::mlp: return spec.hidden_dim;
      case models::ModelKind::tiny_transformer: return spec.embed_dim;
    }
  }
  std::size_t width = 0;
  for (const auto& name : selector.resolve(model.params())) width += model.params().tensor(name).size();
  return width;
}

namespace {
constexpr char kMagic[4] = {'G', 'M', 'N', 'T'};
}

void write_features(const FeatureFile& file, const std::filesystem::path& path) {
  std::size_t cols = file.rows.empty() ? 0 : file.rows.front().feature.size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  binio::write_bytes(out, std::string_view(kMagic, 4));
  binio::write<std::uint32_t>(out, kFeatureFileVersion);
  binio::write<std::uint8_t>(out, static_cast<std::uint8_t>(file.kind));
  binio::write<std::uint64_t>(out, file.rows.size());
  binio::write<std::uint64_t>(out, cols);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(file.selector_json.size()));
  binio::write_bytes(out, file.selector_json);
  binio::write_bytes(out, std::string_view(reinterpret_cast<const char*>(file.model_fingerprint.data()), file.model_fingerprint.size()));
  for (const auto& row : file.rows) {
    if (row.feature.size() != cols) throw DimensionError("feature rows differ in length");
    if (row.sample_id.size() > 0xFFFF) throw DataError("sample id too long: " + row.sample_id);
    if (row.membership_label != 0 && row.membership_label != 1)
      throw DataError("membership label must be 0 or 1 for " + row.sample_id);
    binio::write<std::uint16_t>(out, static_cast<std::uint16_t>(row.sample_id.size()));
    binio::write_bytes(out, row.sample_id);
    binio::write<std::uint8_t>(out, static_cast<std::uint8_t>(row.membership_label));
    for (double v : row.feature) binio::write<float>(out, static_cast<float>(v));
  }
  if (!out) throw Error("failed writing " + path.string());
}

FeatureFile read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("cannot open feature file " + path.string());
  if (binio::read_bytes(in, 4) != std::string_view(kMagic, 4)) throw ParseError("not a GMNT feature file: " + path.string(), 0);
  auto version = binio::read<std::uint32_t>(in);
  if (version != kFeatureFileVersion)
    throw ParseError("unsupported feature file version " + std::to_string(version), 0);
  FeatureFile file;
  auto kind = binio::read<std::uint8_t>(in);
  if (kind > 1) throw ParseError("unknown feature kind " + std::to_string(kind), 0);
  file.kind = static_cast<FeatureKind>(kind);
  auto rows = binio::read<std::uint64_t>(in);
  auto cols = binio::read<std::uint64_t>(in);
  file.selector_json = binio::read_bytes(in, binio::read<std::uint32_t>(in));
  auto fingerprint = binio::read_bytes(in, file.model_fingerprint.size());
  std::copy(fingerprint.begin(), fingerprint.end(), file.model_fingerprint.begin());
  file.rows.reserve(rows);
  for (std::uint64_t r = 0; r < rows; ++r) {
    GradientFeature f;
    f.sample_id = binio::read_bytes(in, binio::read<std::uint16_t>(in));
    f.membership_label = binio::read<std::uint8_t>(in);
    if (f.membership_label > 1) throw ParseError("bad membership label in row " + std::to_string(r), 0);
    auto colon = f.sample_id.find(':');
    f.source_corpus = colon == std::string::npos ? std::string() : f.sample_id.substr(0, colon);
    f.feature.resize(cols);
    for (auto& v : f.feature) v = binio::read<float>(in);
    file.rows.push_back(std::move(f));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes in feature file", 0);
  return file;
}

}  // namespace gmint::probe
