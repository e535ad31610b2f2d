#include "roadtagger/checkpoint.hpp"

#include <json.hpp>

#include "roadtagger/errors.hpp"
#include "roadtagger/ingest.hpp"

namespace roadtagger {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "roadtagger-checkpoint";
constexpr int kVersion = 1;

json model_config_to_json(const ModelConfig& c) {
    return json{{"feature_dim", c.feature_dim},
                {"embed_dim", c.embed_dim},
                {"hidden_chunk", c.hidden_chunk},
                {"steps", c.steps},
                {"lane_classes", c.lane_classes},
                {"type_classes", c.type_classes},
                {"encoder_hidden", c.encoder_hidden},
                {"structures", c.structures}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.feature_dim = j.at("feature_dim").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden_chunk = j.at("hidden_chunk").get<int>();
    c.steps = j.at("steps").get<int>();
    c.lane_classes = j.at("lane_classes").get<int>();
    c.type_classes = j.at("type_classes").get<int>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    c.structures = j.at("structures").get<std::vector<std::string>>();
    return c;
}

json classifier_config_to_json(const ClassifierConfig& c) {
    return json{{"feature_dim", c.feature_dim},
                {"embed_dim", c.embed_dim},
                {"encoder_hidden", c.encoder_hidden},
                {"lane_classes", c.lane_classes},
                {"type_classes", c.type_classes},
                {"receptive_hops", c.receptive_hops}};
}

ClassifierConfig classifier_config_from_json(const json& j) {
    ClassifierConfig c;
    c.feature_dim = j.at("feature_dim").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
    c.lane_classes = j.at("lane_classes").get<int>();
    c.type_classes = j.at("type_classes").get<int>();
    c.receptive_hops = j.at("receptive_hops").get<int>();
    return c;
}

}  // namespace

bool Checkpoint::has_section(const std::string& name) const {
    for (const auto& [n, tensors] : sections)
        if (n == name) return true;
    return false;
}

const std::vector<std::pair<std::string, Tensor>>& Checkpoint::section(
    const std::string& name) const {
    for (const auto& [n, tensors] : sections)
        if (n == name) return tensors;
    throw DataError("checkpoint: missing section '" + name + "'");
}

void Checkpoint::add_section(const std::string& name, const ParamStore& store) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& p : store.items()) tensors.emplace_back(p->name, p->value);
    sections.emplace_back(name, std::move(tensors));
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    json sections = json::array();
    for (const auto& [name, tensors] : checkpoint.sections) {
        json params = json::array();
        for (const auto& [pname, tensor] : tensors) {
            params.push_back({{"name", pname},
                              {"shape", tensor.shape()},
                              {"data", std::vector<double>(tensor.data(),
                                                           tensor.data() + tensor.size())}});
        }
        sections.push_back({{"name", name}, {"params", params}});
    }
    const json doc{{"format", kFormat},
                   {"version", kVersion},
                   {"model_config", model_config_to_json(checkpoint.model_config)},
                   {"classifier_config", classifier_config_to_json(checkpoint.classifier_config)},
                   {"sections", sections}};
    write_file_atomic(path, doc.dump(1));
}

Checkpoint load_checkpoint(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    if (doc.value("format", "") != kFormat)
        throw DataError("checkpoint " + path + ": not a parameter checkpoint");
    if (doc.value("version", -1) != kVersion)
        throw DataError("checkpoint " + path + ": unsupported version " +
                        std::to_string(doc.value("version", -1)));

    Checkpoint out;
    out.model_config = model_config_from_json(doc.at("model_config"));
    out.classifier_config = classifier_config_from_json(doc.at("classifier_config"));
    for (const auto& section : doc.at("sections")) {
        std::vector<std::pair<std::string, Tensor>> tensors;
        for (const auto& p : section.at("params")) {
            tensors.emplace_back(p.at("name").get<std::string>(),
                                 Tensor(p.at("shape").get<std::vector<int>>(),
                                        p.at("data").get<std::vector<double>>()));
        }
        out.sections.emplace_back(section.at("name").get<std::string>(), std::move(tensors));
    }
    return out;
}

void load_section_into(const Checkpoint& checkpoint, const std::string& name, ParamStore& store) {
    const auto& tensors = checkpoint.section(name);
    for (const auto& [pname, tensor] : tensors) {
        Parameter* p = store.find(pname);
        if (!p) throw DataError("checkpoint section " + name + ": unknown parameter " + pname);
        if (!p->value.same_shape(tensor))
            throw ShapeError("checkpoint section " + name + ": shape mismatch for " + pname +
                             " (" + tensor.shape_str() + " vs " + p->value.shape_str() + ")");
        p->value = tensor;
    }
}

}  // namespace roadtagger
