#pragma once

#include <json.hpp>

#include "ahl/attack.hpp"
#include "ahl/model.hpp"

namespace ahl {

// JSON mirrors of the configuration structs. Field names match the struct
// members; missing keys keep the values of `base`.
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

// query_budget is written as null when unset.
nlohmann::json to_json(const AttackConfig& c);
AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig base = {});

}  // namespace ahl
