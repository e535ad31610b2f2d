#pragma once

#include <string>
#include <utility>
#include <vector>

#include "roadtagger/autodiff.hpp"
#include "roadtagger/baselines.hpp"
#include "roadtagger/model.hpp"

namespace roadtagger {

// Versioned parameter checkpoint: configs plus named sections of tensors in
// creation order. Sections typically hold "roadtagger" and one entry per
// trained classifier variant.
struct Checkpoint {
    ModelConfig model_config;
    ClassifierConfig classifier_config;
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, Tensor>>>> sections;

    bool has_section(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& section(const std::string& name) const;
    void add_section(const std::string& name, const ParamStore& store);
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies tensors into an already-constructed store, matching by name and
// validating shapes.
void load_section_into(const Checkpoint& checkpoint, const std::string& name, ParamStore& store);

}  // namespace roadtagger
