#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "roadtagger/autodiff.hpp"
#include "roadtagger/predictions.hpp"
#include "roadtagger/road_graph.hpp"

namespace roadtagger {

struct ModelConfig {
    int feature_dim = 16;
    int embed_dim = 64;
    int hidden_chunk = 128;  // m
    int steps = 8;           // T
    int lane_classes = 6;
    int type_classes = 2;
    std::vector<int> encoder_hidden = {64, 64};
    // Graph structures the model propagates over, in chunk order.
    std::vector<std::string> structures = {"original", "road_fwd", "road_bwd", "aux_parallel"};

    int structure_count() const { return static_cast<int>(structures.size()); }  // k
    int hidden_total() const { return structure_count() * hidden_chunk; }        // k*m
    void validate() const;
};

struct DenseLayer {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
};

// All trainable tensors of the network, registered in a ParamStore in a
// fixed order so checkpoints and the optimizer see a stable layout.
class ModelParams {
public:
    ModelParams(const ModelConfig& config, std::uint64_t seed);

    ParamStore store;
    std::vector<DenseLayer> encoder;   // feature_dim -> hidden... -> embed_dim
    DenseLayer raise_a, raise_b;       // embed_dim -> m -> m
    std::vector<DenseLayer> message;   // per structure: k*m -> m
    Parameter *gru_wz, *gru_uz, *gru_bz;
    Parameter *gru_wr, *gru_ur, *gru_br;
    Parameter *gru_wh, *gru_uh, *gru_bh;
    struct Head {
        DenseLayer l1, l2, l3;  // k*m -> 128 -> 64 -> classes
    };
    Head lane_head, type_head;
};

// Optional per-step capture of the concatenated aggregate a^t, for tests
// that assert chunk isolation.
struct ForwardTrace {
    std::vector<Tensor> aggregates;
};

struct ModelOutputs {
    Var features_in;  // the feature leaf, for input-gradient queries
    Var embeddings;   // V x embed_dim (after any embedding transform)
    Var hidden;       // V x k*m after T steps
    Var lane_logits, type_logits;
    Var lane_probs, type_probs;
};

// Hook applied to the embeddings before propagation (vertex dropout in
// training); identity when empty.
using EmbedTransform = std::function<Var(Tape&, Var)>;

// Per-vertex feature encoder; no cross-vertex mixing.
Var encode_vertices(Tape& tape, Var features, const ModelConfig& config, ModelParams& params);

// Two fully-connected layers lift the embedding to one m-wide chunk, then
// the chunk is tiled k times so every structure starts from the same state.
Var raise_embeddings(Tape& tape, Var embeddings, const ModelConfig& config, ModelParams& params);

// One propagation step: per-structure message, mean aggregation over each
// structure's sources (empty set -> zero), GRU update on the full state.
Var ggnn_step(Tape& tape, Var hidden, const std::vector<GraphStructure>& structures,
              const ModelConfig& config, ModelParams& params, ForwardTrace* trace = nullptr);

ModelOutputs model_forward(Tape& tape, const Tensor& features,
                           const std::vector<GraphStructure>& structures,
                           const ModelConfig& config, ModelParams& params,
                           const EmbedTransform& embed_transform = {},
                           ForwardTrace* trace = nullptr);

PredictionSet extract_predictions(const Tape& tape, const ModelOutputs& out);

// Derives the structures named by the config from a densified graph.
std::vector<GraphStructure> derive_structures(const RoadGraph& graph,
                                              const std::vector<std::string>& names,
                                              double chain_angle_deg = 60.0,
                                              double aux_max_dist = 30.0,
                                              double aux_max_angle_deg = 30.0);

}  // namespace roadtagger
