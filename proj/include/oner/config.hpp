#pragma once

#include <cstdint>
#include <string>

#include "oner/pipeline.hpp"
#include "oner/synthdata.hpp"

namespace oner {

// One JSON document configures a whole run: task count, training
// hyperparameters, backbone geometry, and data generation. Unknown keys are
// rejected so typos fail fast.
struct AppConfig {
  std::size_t tasks = 3;
  TrainConfig train;
  DataConfig data;
};

AppConfig parse_app_config(const std::string& json_text);
AppConfig load_app_config(const std::string& path);
std::string app_config_to_json(const AppConfig& cfg);

// Re-seeds every stream in the config from one master seed.
void override_seeds(AppConfig& cfg, uint64_t master_seed);

// FNV-1a digest of the canonical JSON form, for run manifests.
uint64_t config_digest(const AppConfig& cfg);

}  // namespace oner
