#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roadtagger/autodiff.hpp"
#include "roadtagger/ingest.hpp"
#include "roadtagger/metrics.hpp"
#include "roadtagger/model.hpp"
#include "roadtagger/rng.hpp"

namespace roadtagger {

struct TrainConfig {
    int iterations = 5000;
    double lr_initial = 1e-4;
    int lr_decay_interval = 1500;
    double lr_decay_factor = 1.0 / 3.0;
    int subgraph_size = 256;
    int loss_vertex_count = 128;
    double dropout_rate = 0.10;
    double laplace_weight = 3.0;
    std::uint64_t rng_seed = 0;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    int validation_interval = 250;

    void validate() const;
};

double scheduled_lr(const TrainConfig& config, int iteration);

class Adam {
public:
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Applies one update from the accumulated gradients, then zeroes them.
    void step(ParamStore& store, double lr);

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

// Replaces floor(rate * V) uniformly chosen embedding rows by e (.) r with
// r_i ~ U(-1,1), and blocks the gradient through the replaced rows.
Var vertex_dropout(Tape& tape, Var embeddings, double rate, Rng& rng);

// Squared deviation between each vertex's probability vector and its
// neighborhood mean, gated to vertices whose ground truth agrees with every
// neighbor, averaged over the loss rows.
Var laplace_regularizer(Tape& tape, Var probs, const std::vector<std::vector<int>>& neighbors,
                        const std::vector<int>& labels, const std::vector<bool>& mask,
                        const std::vector<int>& loss_rows, double weight);

struct LossParts {
    Var total, ce_lane, ce_type, reg;
};

// Mean cross-entropy over unmasked loss rows, summed over both heads, plus
// the Laplace regularizer for both attributes over the original-graph
// neighborhoods. Throws when no loss row carries any label.
LossParts total_loss(Tape& tape, const ModelOutputs& outputs, const LabelSet& labels,
                     const std::vector<std::vector<int>>& neighbors,
                     const std::vector<int>& loss_rows, double laplace_weight);

// One network ready for training: densified graph, per-vertex features,
// and the model's graph structures.
struct TrainDataset {
    std::string name;
    LabeledNetwork network;
    Tensor features;
    std::vector<GraphStructure> structures;
    std::vector<bool> occluded;  // optional subset annotation; may be empty
};

struct TrainMetricsRow {
    int iteration = 0;
    double loss = 0.0, ce_lane = 0.0, ce_type = 0.0, reg = 0.0;
    bool has_val = false;
    double val_acc_lane = 0.0, val_acc_type = 0.0, ale = 0.0;
};

struct TrainResult {
    std::vector<TrainMetricsRow> history;
    double best_val_accuracy = -1.0;  // mean of the two attribute accuracies
    int best_iteration = -1;
};

struct TrainHooks {
    bool use_dropout = true;
    bool use_laplace = true;
};

// Subgraph-sampling training loop. Parameters end at the best-on-validation
// snapshot when validation data is present, else at the final iteration.
TrainResult train_model(const std::vector<TrainDataset>& train,
                        const std::vector<TrainDataset>& validation, const ModelConfig& model_config,
                        ModelParams& params, const TrainConfig& config, const TrainHooks& hooks = {});

// Full-graph inference on one dataset.
PredictionSet predict_dataset(const TrainDataset& dataset, const ModelConfig& model_config,
                              ModelParams& params);

std::string metrics_to_csv(const std::vector<TrainMetricsRow>& history);

}  // namespace roadtagger
