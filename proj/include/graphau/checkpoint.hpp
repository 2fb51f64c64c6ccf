#pragma once

#include <string>
#include <vector>

#include "graphau/model.hpp"

namespace graphau {

// On-disk model snapshot: config + every named parameter tensor as a
// shape-tagged float32 array, plus training history.
struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  int epoch = 0;
  std::vector<std::string> stage_history;  // e.g. {"au_sft", "pain"}
  std::string metrics_jsonl;               // per-epoch metric lines
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Verifies every expected tensor name and shape against the stored config;
// throws IncompatibleCheckpointError on any mismatch.
Checkpoint load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace graphau
