#include "roadtagger/config_io.hpp"

#include <json.hpp>

#include "roadtagger/errors.hpp"
#include "roadtagger/ingest.hpp"

namespace roadtagger {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ParseError("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

TrainConfig train_from_json(const json& j) {
    reject_unknown_keys(j, {"iterations", "lr_initial", "lr_decay_interval", "lr_decay_factor",
                            "subgraph_size", "loss_vertex_count", "dropout_rate",
                            "laplace_weight", "seed", "adam_beta1", "adam_beta2", "adam_eps",
                            "validation_interval"},
                        "train");
    TrainConfig c;
    read(j, "iterations", c.iterations);
    read(j, "lr_initial", c.lr_initial);
    read(j, "lr_decay_interval", c.lr_decay_interval);
    read(j, "lr_decay_factor", c.lr_decay_factor);
    read(j, "subgraph_size", c.subgraph_size);
    read(j, "loss_vertex_count", c.loss_vertex_count);
    read(j, "dropout_rate", c.dropout_rate);
    read(j, "laplace_weight", c.laplace_weight);
    read(j, "seed", c.rng_seed);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "adam_eps", c.adam_eps);
    read(j, "validation_interval", c.validation_interval);
    c.validate();
    return c;
}

ModelConfig model_from_json(const json& j) {
    reject_unknown_keys(j, {"feature_dim", "embed_dim", "hidden_chunk", "steps", "lane_classes",
                            "type_classes", "encoder_hidden", "structures"},
                        "model");
    ModelConfig c;
    read(j, "feature_dim", c.feature_dim);
    read(j, "embed_dim", c.embed_dim);
    read(j, "hidden_chunk", c.hidden_chunk);
    read(j, "steps", c.steps);
    read(j, "lane_classes", c.lane_classes);
    read(j, "type_classes", c.type_classes);
    read(j, "encoder_hidden", c.encoder_hidden);
    read(j, "structures", c.structures);
    c.validate();
    return c;
}

ClassifierConfig classifier_from_json(const json& j, const ModelConfig& model) {
    reject_unknown_keys(j, {"receptive_hops", "encoder_hidden", "embed_dim"}, "classifier");
    ClassifierConfig c;
    c.feature_dim = model.feature_dim;
    c.embed_dim = model.embed_dim;
    c.encoder_hidden = model.encoder_hidden;
    c.lane_classes = model.lane_classes;
    c.type_classes = model.type_classes;
    read(j, "receptive_hops", c.receptive_hops);
    read(j, "encoder_hidden", c.encoder_hidden);
    read(j, "embed_dim", c.embed_dim);
    c.validate();
    return c;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("config: expected a JSON object");
    reject_unknown_keys(doc, {"train", "model", "classifier"}, "top level");

    RunConfig c;
    if (doc.contains("model")) c.model = model_from_json(doc.at("model"));
    if (doc.contains("train")) c.train = train_from_json(doc.at("train"));
    c.classifier =
        classifier_from_json(doc.contains("classifier") ? doc.at("classifier") : json::object(),
                             c.model);
    return c;
}

RunConfig parse_run_config_file(const std::string& path) {
    try {
        return parse_run_config_text(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string run_config_to_json(const RunConfig& config) {
    const json doc{
        {"train",
         {{"iterations", config.train.iterations},
          {"lr_initial", config.train.lr_initial},
          {"lr_decay_interval", config.train.lr_decay_interval},
          {"lr_decay_factor", config.train.lr_decay_factor},
          {"subgraph_size", config.train.subgraph_size},
          {"loss_vertex_count", config.train.loss_vertex_count},
          {"dropout_rate", config.train.dropout_rate},
          {"laplace_weight", config.train.laplace_weight},
          {"seed", config.train.rng_seed},
          {"adam_beta1", config.train.adam_beta1},
          {"adam_beta2", config.train.adam_beta2},
          {"adam_eps", config.train.adam_eps},
          {"validation_interval", config.train.validation_interval}}},
        {"model",
         {{"feature_dim", config.model.feature_dim},
          {"embed_dim", config.model.embed_dim},
          {"hidden_chunk", config.model.hidden_chunk},
          {"steps", config.model.steps},
          {"lane_classes", config.model.lane_classes},
          {"type_classes", config.model.type_classes},
          {"encoder_hidden", config.model.encoder_hidden},
          {"structures", config.model.structures}}},
        {"classifier", {{"receptive_hops", config.classifier.receptive_hops}}}};
    return doc.dump(1);
}

}  // namespace roadtagger
