#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "procsim/model.hpp"
#include "procsim/synth.hpp"

namespace procsim {

// Strict readers: every key is optional (defaults apply) but unknown keys
// and wrongly typed values raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const TrainConfig& cfg);

SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec base = {});
nlohmann::json to_json(const SynthSpec& spec);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace procsim
