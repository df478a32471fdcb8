#pragma once

#include <string>

#include "adnet/data.hpp"
#include "adnet/losses.hpp"
#include "adnet/model.hpp"
#include "adnet/training.hpp"

namespace adnet::config {

struct RunConfig {
  model::ModelConfig model;
  losses::LossConfig loss;
  training::TrainRunConfig train;
  data::SyntheticSpec synthetic;
};

// Plain-text key=value file, one key per line, '#' comments. Unknown keys are
// rejected with the line number; missing keys keep their defaults.
RunConfig load_config(const std::string& path);

// Parses already-read text (used for the echo round trip).
RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");

// Fully-resolved echo; reloads to an identical configuration.
std::string serialize_config(const RunConfig& cfg);

}  // namespace adnet::config
