#include "gmint/auditor/mint_auditor.h"

#include <cmath>
#include <fstream>

#include "gmint/autodiff/adam.h"
#include "gmint/autodiff/ops.h"
#include "gmint/common/errors.h"
#include "gmint/common/random.h"

namespace gmint::auditor {

using nlohmann::json;
using nlohmann::ordered_json;

void AuditorConfig::validate() const {
  if (hidden_layers.empty()) throw ConfigError("auditor needs at least one hidden layer");
  for (auto h : hidden_layers)
    if (h == 0) throw ConfigError("auditor hidden layer widths must be positive");
  if (epochs < 1) throw ConfigError("auditor epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("auditor batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("auditor learning_rate must be positive");
}

ordered_json to_json(const AuditorConfig& c) {
  return ordered_json{{"hidden_layers", c.hidden_layers},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"learning_rate", c.learning_rate},
                      {"seed", c.seed}};
}

AuditorConfig auditor_config_from_json(const json& j) {
  AuditorConfig c;
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  return c;
}

MintAuditor MintAuditor::build(std::size_t input_dim, const AuditorConfig& config) {
  config.validate();
  if (input_dim == 0) throw DimensionError("auditor input dimension must be positive");
  ad::Sequential net(input_dim);
  const std::uint64_t init_seed = derive_seed(config.seed, "auditor-init");
  for (auto width : config.hidden_layers) net.dense(width, init_seed).relu();
  net.dense(1, init_seed).sigmoid();
  MintAuditor a(std::move(net), config);
  a.normalization.mean.assign(input_dim, 0.0);
  a.normalization.scale.assign(input_dim, 1.0);
  return a;
}

namespace {

ad::Tensor stack(const std::vector<std::vector<double>>& rows, std::size_t width) {
  ad::Tensor x({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width)
      throw DimensionError("feature has " + std::to_string(rows[r].size()) + " columns, auditor expects " +
                           std::to_string(width));
    std::copy(rows[r].begin(), rows[r].end(), x.data().begin() + static_cast<long>(r * width));
  }
  return x;
}

}  // namespace

std::vector<double> MintAuditor::score_normalized(const std::vector<std::vector<double>>& rows) const {
  std::vector<double> scores;
  scores.reserve(rows.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    std::vector<std::vector<double>> chunk(rows.begin() + static_cast<long>(start),
                                           rows.begin() + static_cast<long>(std::min(rows.size(), start + kChunk)));
    ad::Tensor out = net_.forward(stack(chunk, input_dim()));
    scores.insert(scores.end(), out.values().begin(), out.values().end());
  }
  return scores;
}

MintAuditor train_mint(const probe::MintDataset& dataset, const AuditorConfig& config) {
  config.validate();
  if (dataset.features.empty()) throw DataError("MINT dataset is empty");
  const std::size_t d = dataset.dim();
  for (const auto& f : dataset.features)
    if (f.feature.size() != d) throw DimensionError("feature vectors differ in length (" + f.sample_id + ")");
  std::size_t members = 0;
  for (auto r : dataset.train_rows) members += dataset.features.at(r).membership_label == 1 ? 1 : 0;
  if (members == 0 || members == dataset.train_rows.size())
    throw DataError("MINT training rows contain a single membership class");

  MintAuditor auditor = MintAuditor::build(d, config);
  auditor.normalization = dataset.normalization;

  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (auto r : dataset.train_rows) {
    x.push_back(dataset.normalized(r));
    y.push_back(static_cast<double>(dataset.features[r].membership_label));
  }
  const std::size_t n = x.size();
  const std::size_t batch = std::min(config.batch_size, n);
  ad::AdamState adam;
  adam.hyper.learning_rate = config.learning_rate;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng(derive_seed(config.seed, "auditor-batch-order", static_cast<std::uint64_t>(epoch))).shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0, index = 0; start < n; start += batch, ++index) {
      std::size_t end = std::min(n, start + batch);
      ad::Tensor xb({end - start, d});
      std::vector<double> yb;
      for (std::size_t i = start; i < end; ++i) {
        std::copy(x[order[i]].begin(), x[order[i]].end(), xb.data().begin() + static_cast<long>((i - start) * d));
        yb.push_back(y[order[i]]);
      }
      ad::Tape tape;
      tape.bind(auditor.params());
      ad::Var probs = auditor.network().forward(tape, tape.constant(std::move(xb)));
      auto grads = tape.backward(ad::mean(ad::binary_cross_entropy(probs, yb)));
      if (!std::isfinite(grads.loss_value))
        throw NumericError("non-finite auditor loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(index));
      total += grads.loss_value * static_cast<double>(end - start);
      ad::adam_step(auditor.params(), grads, adam);
    }
    auditor.loss_history.push_back(total / static_cast<double>(n));
  }
  return auditor;
}

std::vector<Prediction> predict_membership(const MintAuditor& auditor,
                                           const std::vector<probe::GradientFeature>& features, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("decision threshold must lie in (0, 1)");
  std::vector<std::vector<double>> rows;
  rows.reserve(features.size());
  for (const auto& f : features) rows.push_back(auditor.normalization.apply(f.feature));
  auto scores = auditor.score_normalized(rows);
  std::vector<Prediction> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    out.push_back({features[i].sample_id, scores[i], scores[i] >= threshold});
  return out;
}

std::vector<double> score_rows(const MintAuditor& auditor, const probe::MintDataset& dataset,
                               const std::vector<std::size_t>& rows) {
  std::vector<std::vector<double>> x;
  x.reserve(rows.size());
  for (auto r : rows) x.push_back(auditor.normalization.apply(dataset.features.at(r).feature));
  return auditor.score_normalized(x);
}

void MintAuditor::save(const std::filesystem::path& stem) const {
  auto params_path = stem;
  params().save(params_path.replace_extension(".gmwt"));
  ordered_json meta{{"input_dim", input_dim()},
                    {"config", to_json(config_)},
                    {"normalization", {{"mean", normalization.mean}, {"scale", normalization.scale}}},
                    {"loss_history", loss_history}};
  auto meta_path = stem;
  std::ofstream out(meta_path.replace_extension(".json"), std::ios::trunc);
  if (!out) throw Error("cannot write " + meta_path.string());
  out << meta.dump(1) << '\n';
}

MintAuditor MintAuditor::load(const std::filesystem::path& stem) {
  auto meta_path = stem;
  meta_path.replace_extension(".json");
  std::ifstream in(meta_path);
  if (!in) throw DependencyError("cannot open auditor metadata " + meta_path.string());
  json meta = json::parse(in);
  MintAuditor a = build(meta.at("input_dim").get<std::size_t>(), auditor_config_from_json(meta.at("config")));
  auto params_path = stem;
  auto loaded = ad::ParameterSet::load(params_path.replace_extension(".gmwt"));
  if (loaded.size() != a.params().size()) throw ParseError("auditor parameters do not match its config", 0);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& want = a.params().entries()[i];
    const auto& got = loaded.entries()[i];
    if (want.name != got.name || want.tensor.shape() != got.tensor.shape())
      throw ParseError("auditor parameter '" + got.name + "' does not match its config", 0);
  }
  a.params() = std::move(loaded);
  a.normalization.mean = meta.at("normalization").at("mean").get<std::vector<double>>();
  a.normalization.scale = meta.at("normalization").at("scale").get<std::vector<double>>();
  if (a.normalization.mean.size() != a.input_dim() || a.normalization.scale.size() != a.input_dim())
    throw ParseError("auditor normalization width does not match input_dim", 0);
  a.loss_history = meta.at("loss_history").get<std::vector<double>>();
  return a;
}

}  // namespace gmint::auditor
