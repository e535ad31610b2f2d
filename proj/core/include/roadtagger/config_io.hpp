#pragma once

#include <string>

#include "roadtagger/baselines.hpp"
#include "roadtagger/model.hpp"
#include "roadtagger/training.hpp"

namespace roadtagger {

// One training run: loop settings plus both architectures. Parsed from JSON
// with strict unknown-key validation.
struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    ClassifierConfig classifier;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config_file(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace roadtagger
