#pragma once

#include <string>

#include <json.hpp>

#include "terragen/diffusion.hpp"
#include "terragen/eval.hpp"

namespace terragen {

// JSON round-trips for every runtime config. Parsers reject unknown keys
// so ablation configs cannot silently misspell a switch.

nlohmann::json to_json(const EncoderConfig& cfg);
nlohmann::json to_json(const UNetConfig& cfg);
nlohmann::json to_json(const NoiseSchedule& schedule);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const SampleConfig& cfg);
nlohmann::json to_json(const EvalConfig& cfg);

EncoderConfig encoder_config_from_json(const nlohmann::json& doc);
UNetConfig unet_config_from_json(const nlohmann::json& doc);
NoiseSchedule schedule_from_json(const nlohmann::json& doc);
TrainConfig train_config_from_json(const nlohmann::json& doc);
SampleConfig sample_config_from_json(const nlohmann::json& doc);
EvalConfig eval_config_from_json(const nlohmann::json& doc);

// Applies "a.b.c=value" onto a JSON document, parsing value as JSON when
// possible and as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& doc);

}  // namespace terragen
