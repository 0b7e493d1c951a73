#pragma once

// TRGW model checkpoints: magic, version, embedded config, then named
// parameter/buffer records with 32-bit little-endian values. Save/load
// round-trips bit-exactly.

#include <string>

#include "trg/model.hpp"

namespace trg {

void save_checkpoint(Model<float>& model, const std::string& path);
Model<float> load_checkpoint(const std::string& path);

// ModelConfig <-> flat JSON object (also embedded in checkpoints).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace trg
