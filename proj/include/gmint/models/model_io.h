#pragma once

#include "gmint/models/audited_model.h"
#include "json.hpp"

namespace gmint::models {

nlohmann::ordered_json to_json(const AuditedModelSpec& spec);
AuditedModelSpec spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace gmint::models
