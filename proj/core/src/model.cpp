#include "roadtagger/model.hpp"

#include <algorithm>

#include "roadtagger/errors.hpp"
#include "roadtagger/rng.hpp"

namespace roadtagger {

void ModelConfig::validate() const {
    if (steps < 1) throw DataError("ModelConfig: steps must be >= 1");
    if (structure_count() < 1) throw DataError("ModelConfig: at least one structure required");
    if (feature_dim < 1 || embed_dim < 1 || hidden_chunk < 1)
        throw DataError("ModelConfig: dimensions must be positive");
    if (lane_classes < 2 || type_classes < 2)
        throw DataError("ModelConfig: attribute heads need >= 2 classes");
}

namespace {

DenseLayer make_dense(ParamStore& store, const std::string& name, int in, int out,
                      std::uint64_t seed) {
    DenseLayer layer;
    layer.weight = &store.create(name + ".weight", glorot_uniform({in, out}, seed));
    layer.bias = &store.create(name + ".bias", Tensor::zeros({1, out}));
    return layer;
}

Var dense(Tape& tape, Var x, const DenseLayer& layer) {
    return tape.add(tape.matmul(x, tape.param(*layer.weight)), tape.param(*layer.bias));
}

}  // namespace

ModelParams::ModelParams(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    const int k = config.structure_count();
    const int m = config.hidden_chunk;
    const int h = config.hidden_total();

    std::uint64_t s = seed;
    auto next_seed = [&s]() { return s = splitmix64(s); };

    int in = config.feature_dim;
    for (std::size_t i = 0; i < config.encoder_hidden.size(); ++i) {
        encoder.push_back(make_dense(store, "encoder.l" + std::to_string(i), in,
                                     config.encoder_hidden[i], next_seed()));
        in = config.encoder_hidden[i];
    }
    encoder.push_back(make_dense(store, "encoder.out", in, config.embed_dim, next_seed()));

    raise_a = make_dense(store, "raise.a", config.embed_dim, m, next_seed());
    raise_b = make_dense(store, "raise.b", m, m, next_seed());

    for (int i = 0; i < k; ++i)
        message.push_back(make_dense(store, "message." + std::to_string(i), h, m, next_seed()));

    gru_wz = &store.create("gru.wz", glorot_uniform({h, h}, next_seed()));
    gru_uz = &store.create("gru.uz", glorot_uniform({h, h}, next_seed()));
    gru_bz = &store.create("gru.bz", Tensor::zeros({1, h}));
    gru_wr = &store.create("gru.wr", glorot_uniform({h, h}, next_seed()));
    gru_ur = &store.create("gru.ur", glorot_uniform({h, h}, next_seed()));
    gru_br = &store.create("gru.br", Tensor::zeros({1, h}));
    gru_wh = &store.create("gru.wh", glorot_uniform({h, h}, next_seed()));
    gru_uh = &store.create("gru.uh", glorot_uniform({h, h}, next_seed()));
    gru_bh = &store.create("gru.bh", Tensor::zeros({1, h}));

    auto make_head = [&](const std::string& name, int classes) {
        Head head;
        head.l1 = make_dense(store, name + ".l1", h, 128, next_seed());
        head.l2 = make_dense(store, name + ".l2", 128, 64, next_seed());
        head.l3 = make_dense(store, name + ".l3", 64, classes, next_seed());
        return head;
    };
    lane_head = make_head("lane_head", config.lane_classes);
    type_head = make_head("type_head", config.type_classes);
}

Var encode_vertices(Tape& tape, Var features, const ModelConfig& config, ModelParams& params) {
    if (tape.value(features).cols() != config.feature_dim)
        throw ShapeError("encode_vertices: feature dim " +
                         std::to_string(tape.value(features).cols()) + " != config " +
                         std::to_string(config.feature_dim));
    Var x = features;
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        x = dense(tape, x, params.encoder[i]);
        if (i + 1 < params.encoder.size()) x = tape.relu(x);
    }
    return x;
}

Var raise_embeddings(Tape& tape, Var embeddings, const ModelConfig& config, ModelParams& params) {
    Var raised = dense(tape, tape.relu(dense(tape, embeddings, params.raise_a)), params.raise_b);
    const int k = config.structure_count();
    if (k == 1) return raised;
    std::vector<Var> tiles(k, raised);
    return tape.concat_cols(tiles);
}

Var ggnn_step(Tape& tape, Var hidden, const std::vector<GraphStructure>& structures,
              const ModelConfig& config, ModelParams& params, ForwardTrace* trace) {
    const int k = config.structure_count();
    if (static_cast<int>(structures.size()) != k)
        throw ShapeError("ggnn_step: expected " + std::to_string(k) + " structures, got " +
                         std::to_string(structures.size()));
    const int vertices = tape.value(hidden).rows();

    std::vector<Var> aggregates;
    aggregates.reserve(k);
    for (int i = 0; i < k; ++i) {
        if (structures[i].vertex_count() != vertices)
            throw ShapeError("ggnn_step: structure '" + structures[i].name +
                             "' vertex count mismatch");
        // message from the full hidden state, separate weights per structure
        Var msg = dense(tape, hidden, params.message[i]);
        aggregates.push_back(tape.mean_rows(msg, structures[i].sources));
    }
    Var agg = k == 1 ? aggregates[0] : tape.concat_cols(aggregates);
    if (trace) trace->aggregates.push_back(tape.value(agg));

    Var z = tape.sigmoid(tape.add(
        tape.add(tape.matmul(agg, tape.param(*params.gru_wz)),
                 tape.matmul(hidden, tape.param(*params.gru_uz))),
        tape.param(*params.gru_bz)));
    Var r = tape.sigmoid(tape.add(
        tape.add(tape.matmul(agg, tape.param(*params.gru_wr)),
                 tape.matmul(hidden, tape.param(*params.gru_ur))),
        tape.param(*params.gru_br)));
    Var candidate = tape.tanh(tape.add(
        tape.add(tape.matmul(agg, tape.param(*params.gru_wh)),
                 tape.matmul(tape.mul(r, hidden), tape.param(*params.gru_uh))),
        tape.param(*params.gru_bh)));
    // h' = (1-z) (.) h + z (.) candidate
    return tape.sub(hidden, tape.mul(z, tape.sub(hidden, candidate)));
}

namespace {

Var head_forward(Tape& tape, Var hidden, const ModelParams::Head& head) {
    Var x = tape.relu(dense(tape, hidden, head.l1));
    x = tape.relu(dense(tape, x, head.l2));
    return dense(tape, x, head.l3);
}

}  // namespace

ModelOutputs model_forward(Tape& tape, const Tensor& features,
                           const std::vector<GraphStructure>& structures,
                           const ModelConfig& config, ModelParams& params,
                           const EmbedTransform& embed_transform, ForwardTrace* trace) {
    ModelOutputs out;
    Var f = tape.input(features);
    out.features_in = f;
    Var x = encode_vertices(tape, f, config, params);
    if (embed_transform) x = embed_transform(tape, x);
    out.embeddings = x;

    Var h = raise_embeddings(tape, x, config, params);
    for (int t = 0; t < config.steps; ++t)
        h = ggnn_step(tape, h, structures, config, params, trace);
    out.hidden = h;

    out.lane_logits = head_forward(tape, h, params.lane_head);
    out.type_logits = head_forward(tape, h, params.type_head);
    out.lane_probs = tape.softmax_rows(out.lane_logits);
    out.type_probs = tape.softmax_rows(out.type_logits);
    return out;
}

PredictionSet extract_predictions(const Tape& tape, const ModelOutputs& out) {
    return PredictionSet{tape.value(out.lane_probs), tape.value(out.type_probs)};
}

std::vector<GraphStructure> derive_structures(const RoadGraph& graph,
                                              const std::vector<std::string>& names,
                                              double chain_angle_deg, double aux_max_dist,
                                              double aux_max_angle_deg) {
    const bool needs_chains =
        std::any_of(names.begin(), names.end(), [](const std::string& n) { return n != "original"; });
    std::vector<RoadChain> chains;
    if (needs_chains) chains = extract_road_chains(graph, chain_angle_deg);

    std::vector<GraphStructure> out;
    for (const auto& name : names) {
        if (name == "original") {
            out.push_back(structure_original(graph));
        } else if (name == "road") {
            out.push_back(structure_road(graph.vertex_count(), chains));
        } else if (name == "road_fwd") {
            out.push_back(structure_road_directional(graph.vertex_count(), chains).first);
        } else if (name == "road_bwd") {
            out.push_back(structure_road_directional(graph.vertex_count(), chains).second);
        } else if (name == "aux_parallel") {
            out.push_back(structure_aux_parallel(graph, chains, aux_max_dist, aux_max_angle_deg));
        } else {
            throw DataError("derive_structures: unknown structure '" + name + "'");
        }
    }
    return out;
}

}  // namespace roadtagger
