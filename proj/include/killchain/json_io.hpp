#pragma once

#include <nlohmann/json.hpp>

#include "killchain/model.hpp"

// JSON converters shared by the model file format, the run config and the
// report writer. All throw ConfigError on malformed input.

namespace killchain {

nlohmann::json arch_to_json(const ArchitectureSpec& spec);
ArchitectureSpec arch_from_json(const nlohmann::json& j);

nlohmann::json train_cfg_to_json(const TrainConfig& cfg);
TrainConfig train_cfg_from_json(const nlohmann::json& j);

}  // namespace killchain
