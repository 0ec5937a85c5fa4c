#pragma once

#include <string>

#include "sqz/config.hpp"

namespace sqz {

// Stable JSON form of a ModelConfig; every field is present.
std::string config_to_json(const ModelConfig& config);

// Strict parse: unknown keys are rejected with ConfigError; missing keys
// keep their defaults.
ModelConfig config_from_json(const std::string& json_text);

}  // namespace sqz
