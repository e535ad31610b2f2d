#pragma once

#include <cstdint>
#include <vector>

#include "roadtagger/autodiff.hpp"
#include "roadtagger/ingest.hpp"
#include "roadtagger/predictions.hpp"
#include "roadtagger/road_graph.hpp"
#include "roadtagger/training.hpp"

namespace roadtagger {

// Per-vertex classifier: the same encoder as the model feeding the
// three-layer head directly, no propagation. receptive_hops widens the
// input by concatenating neighbor features (1 hop = 1.5x window analog,
// 2 hops = 2.0x).
struct ClassifierConfig {
    int feature_dim = 16;
    int embed_dim = 64;
    std::vector<int> encoder_hidden = {64, 64};
    int lane_classes = 6;
    int type_classes = 2;
    int receptive_hops = 0;  // 0, 1, or 2

    int input_dim() const { return feature_dim * (1 + 2 * receptive_hops); }
    void validate() const;
};

class ClassifierParams {
public:
    ClassifierParams(const ClassifierConfig& config, std::uint64_t seed);

    ParamStore store;
    std::vector<DenseLayer> encoder;
    struct Head {
        DenseLayer l1, l2, l3;
    };
    Head lane_head, type_head;
};

// Concatenates each vertex's features with up to two lowest-index vertices
// per hop ring (zero padded), matching the classifier's widened window.
Tensor expand_receptive_field(const Tensor& features,
                              const std::vector<std::vector<int>>& adjacency, int hops);

struct ClassifierOutputs {
    Var lane_logits, type_logits, lane_probs, type_probs;
};

ClassifierOutputs classifier_forward_tape(Tape& tape, Var features,
                                          const ClassifierConfig& config,
                                          ClassifierParams& params);

PredictionSet classifier_forward(const Tensor& expanded_features, const ClassifierConfig& config,
                                 ClassifierParams& params);

// Plain cross-entropy training over batches of `loss_vertex_count` vertices
// drawn uniformly from the training networks.
TrainResult train_classifier(const std::vector<TrainDataset>& train,
                             const std::vector<TrainDataset>& validation,
                             const ClassifierConfig& config, ClassifierParams& params,
                             const TrainConfig& train_config);

PredictionSet classifier_predict_dataset(const TrainDataset& dataset,
                                         const ClassifierConfig& config,
                                         ClassifierParams& params);

// y'_v = (y_v + sum of neighbor probabilities) / (1 + |N(v)|).
PredictionSet smooth_predictions(const PredictionSet& predictions, const RoadGraph& graph);

struct MrfParams {
    double lambda = 1.0;
    int exponent = 1;  // 1 or 2
};

struct MrfLabels {
    std::vector<int> lanes;  // 1..6
    std::vector<int> types;  // 0/1
};

// Exact min-sum decoding of unary -log P plus within-chain pairwise
// lambda * |i-j|^n (class-index distance for lanes, 0/1 indicator for road
// type). Chains are solved independently; a vertex shared by several chains
// keeps the label assigned by the earliest chain. Vertices on no chain fall
// back to the per-vertex argmax.
MrfLabels mrf_infer(const PredictionSet& predictions, const std::vector<RoadChain>& chains,
                    const MrfParams& params);

// Min-sum DP over a single chain; exposed for the enumeration oracle.
// unaries is length x labels, pairwise cost lambda * |i-j|^n (indicator when
// ordinal is false). closed adds the wrap-around pairwise term.
std::vector<int> chain_min_sum(const std::vector<std::vector<double>>& unaries, double lambda,
                               int exponent, bool ordinal, bool closed);

double chain_energy(const std::vector<std::vector<double>>& unaries,
                    const std::vector<int>& labels, double lambda, int exponent, bool ordinal,
                    bool closed);

// Unary costs for one attribute head: -log(max(p, 1e-9)) per chain vertex.
std::vector<std::vector<double>> chain_unaries(const Tensor& probs,
                                               const std::vector<int>& vertex_sequence);

struct MrfGrid {
    std::vector<double> lambdas = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<int> exponents = {1, 2};
};

// Brute-force search maximizing mean validation accuracy over both heads;
// ties break toward the smallest lambda, then the smallest exponent.
MrfParams mrf_grid_search(const std::vector<PredictionSet>& predictions,
                          const std::vector<LabelSet>& labels,
                          const std::vector<std::vector<RoadChain>>& chains, const MrfGrid& grid);

}  // namespace roadtagger
