#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmint/autodiff/sequential.h"
#include "gmint/probe/mint_dataset.h"
#include "json.hpp"

namespace gmint::auditor {

struct AuditorConfig {
  std::vector<std::size_t> hidden_layers{256, 128, 64};
  int epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  bool operator==(const AuditorConfig&) const = default;
};

nlohmann::ordered_json to_json(const AuditorConfig& config);
AuditorConfig auditor_config_from_json(const nlohmann::json& j);

struct Prediction {
  std::string sample_id;
  double score = 0.0;
  bool predicted_member = false;
};

// Dense ReLU stack ending in one sigmoid unit, T(features) -> membership score.
class MintAuditor {
 public:
  // Untrained network with Glorot weights drawn from config.seed.
  static MintAuditor build(std::size_t input_dim, const AuditorConfig& config);

  std::size_t input_dim() const { return net_.input_width(); }
  const AuditorConfig& config() const { return config_; }
  const ad::ParameterSet& params() const { return net_.params(); }
  ad::ParameterSet& params() { return net_.params(); }
  const ad::Sequential& network() const { return net_; }

  // Scores rows that are already normalized.
  std::vector<double> score_normalized(const std::vector<std::vector<double>>& rows) const;

  probe::Normalization normalization;
  std::vector<double> loss_history;  // mean BCE per epoch

  void save(const std::filesystem::path& stem) const;
  static MintAuditor load(const std::filesystem::path& stem);

 private:
  MintAuditor(ad::Sequential net, AuditorConfig config) : net_(std::move(net)), config_(std::move(config)) {}

  ad::Sequential net_;
  AuditorConfig config_;
};

// Mini-batch Adam on binary cross-entropy over the dataset's MINT-train rows.
MintAuditor train_mint(const probe::MintDataset& dataset, const AuditorConfig& config);

// Applies the auditor's normalization to raw features, then scores them.
std::vector<Prediction> predict_membership(const MintAuditor& auditor,
                                           const std::vector<probe::GradientFeature>& features,
                                           double threshold = 0.5);

// Scores for the given dataset rows, in that order.
std::vector<double> score_rows(const MintAuditor& auditor, const probe::MintDataset& dataset,
                               const std::vector<std::size_t>& rows);

}  // namespace gmint::auditor
