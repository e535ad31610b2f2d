#include "roadtagger/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "roadtagger/errors.hpp"

namespace roadtagger {

void TrainConfig::validate() const {
    if (iterations < 1) throw DataError("TrainConfig: iterations must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw DataError("TrainConfig: dropout_rate must be in [0,1)");
    if (loss_vertex_count > subgraph_size)
        throw DataError("TrainConfig: loss_vertex_count exceeds subgraph_size");
    if (lr_initial <= 0.0 || lr_decay_interval < 1)
        throw DataError("TrainConfig: invalid learning-rate schedule");
    if (laplace_weight < 0.0) throw DataError("TrainConfig: laplace_weight must be >= 0");
}

double scheduled_lr(const TrainConfig& config, int iteration) {
    const int decays = iteration / config.lr_decay_interval;
    return config.lr_initial * std::pow(config.lr_decay_factor, decays);
}

void Adam::step(ParamStore& store, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& p : store.items()) {
        if (p->adam_m.empty()) {
            p->adam_m = Tensor::zeros(p->value.shape());
            p->adam_v = Tensor::zeros(p->value.shape());
        }
        double* value = p->value.data();
        double* grad = p->grad.data();
        double* m = p->adam_m.data();
        double* v = p->adam_v.data();
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
            value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            grad[i] = 0.0;
        }
    }
}

Var vertex_dropout(Tape& tape, Var embeddings, double rate, Rng& rng) {
    const Tensor& e = tape.value(embeddings);
    const int rows = e.rows(), cols = e.cols();
    const int count = static_cast<int>(std::floor(rate * rows));
    if (count <= 0) return embeddings;

    std::vector<int> order(rows);
    for (int i = 0; i < rows; ++i) order[i] = i;
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<int> pick(i, rows - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::vector<bool> dropped(rows, false);
    for (int i = 0; i < count; ++i) dropped[order[i]] = true;

    Tensor keep({rows, cols}), noise({rows, cols});
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    for (int r = 0; r < rows; ++r) {
        if (dropped[r]) {
            for (int c = 0; c < cols; ++c) noise.at(r, c) = uniform(rng);
        } else {
            for (int c = 0; c < cols; ++c) keep.at(r, c) = 1.0;
        }
    }
    // kept rows pass through; dropped rows become e (.) r behind a gradient barrier
    Var kept = tape.mul(embeddings, tape.constant(std::move(keep)));
    Var corrupted = tape.mul(tape.stop_gradient(embeddings), tape.constant(std::move(noise)));
    return tape.add(kept, corrupted);
}

Var laplace_regularizer(Tape& tape, Var probs, const std::vector<std::vector<int>>& neighbors,
                        const std::vector<int>& labels, const std::vector<bool>& mask,
                        const std::vector<int>& loss_rows, double weight) {
    const int rows = tape.value(probs).rows();
    if (static_cast<int>(neighbors.size()) != rows ||
        static_cast<int>(labels.size()) != rows || static_cast<int>(mask.size()) != rows)
        throw ShapeError("laplace_regularizer: size mismatch");

    Tensor gate({rows, 1});
    for (int v = 0; v < rows; ++v) {
        if (neighbors[v].empty() || !mask[v]) continue;
        bool consistent = true;
        for (int u : neighbors[v]) {
            if (!mask[u] || labels[u] != labels[v]) {
                consistent = false;
                break;
            }
        }
        if (consistent) gate.at(v, 0) = weight;
    }

    Var neighbor_mean = tape.mean_rows(probs, neighbors);
    Var diff = tape.sub(probs, neighbor_mean);
    Var sq = tape.row_sum(tape.mul(diff, diff));        // V x 1
    Var weighted = tape.mul(sq, tape.constant(std::move(gate)));
    return tape.mean_rows(weighted, {loss_rows});        // 1 x 1
}

LossParts total_loss(Tape& tape, const ModelOutputs& outputs, const LabelSet& labels,
                     const std::vector<std::vector<int>>& neighbors,
                     const std::vector<int>& loss_rows, double laplace_weight) {
    const int rows = labels.size();
    std::vector<int> lane_classes(rows, 0), type_classes(rows, 0);
    for (int v = 0; v < rows; ++v) {
        if (labels.lane_mask[v]) lane_classes[v] = labels.lanes[v] - 1;
        if (labels.type_mask[v]) type_classes[v] = labels.types[v];
    }
    std::vector<int> lane_rows, type_rows;
    for (int v : loss_rows) {
        if (labels.lane_mask[v]) lane_rows.push_back(v);
        if (labels.type_mask[v]) type_rows.push_back(v);
    }
    if (lane_rows.empty() && type_rows.empty()) throw DataError("empty loss set");

    LossParts parts;
    parts.ce_lane =
        tape.mean_rows(tape.cross_entropy(outputs.lane_logits, lane_classes), {lane_rows});
    parts.ce_type =
        tape.mean_rows(tape.cross_entropy(outputs.type_logits, type_classes), {type_rows});
    Var ce = tape.add(parts.ce_lane, parts.ce_type);

    if (laplace_weight > 0.0) {
        Var reg_lane = laplace_regularizer(tape, outputs.lane_probs, neighbors, labels.lanes,
                                           labels.lane_mask, loss_rows, laplace_weight);
        Var reg_type = laplace_regularizer(tape, outputs.type_probs, neighbors, labels.types,
                                           labels.type_mask, loss_rows, laplace_weight);
        parts.reg = tape.add(reg_lane, reg_type);
    } else {
        parts.reg = tape.constant(Tensor::zeros({1, 1}));
    }
    parts.total = tape.add(ce, parts.reg);
    return parts;
}

namespace {

LabelSet gather_labels(const LabelSet& labels, const std::vector<int>& vertex_ids) {
    LabelSet out;
    out.resize(static_cast<int>(vertex_ids.size()));
    for (std::size_t i = 0; i < vertex_ids.size(); ++i) {
        const int v = vertex_ids[i];
        out.lanes[i] = labels.lanes[v];
        out.lane_mask[i] = labels.lane_mask[v];
        out.types[i] = labels.types[v];
        out.type_mask[i] = labels.type_mask[v];
    }
    return out;
}

Tensor gather_rows(const Tensor& t, const std::vector<int>& rows) {
    Tensor out({static_cast<int>(rows.size()), t.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < t.cols(); ++c) out.at(static_cast<int>(i), c) = t.at(rows[i], c);
    return out;
}

struct ValScore {
    double lane_acc = 0.0, type_acc = 0.0, ale = 0.0, mean_acc = 0.0;
};

ValScore validate_model(const std::vector<TrainDataset>& validation,
                        const ModelConfig& model_config, ModelParams& params) {
    std::vector<int> lane_pred, type_pred;
    LabelSet labels;
    labels.resize(0);
    for (const auto& ds : validation) {
        PredictionSet preds = predict_dataset(ds, model_config, params);
        const auto lp = preds.lane_argmax();
        const auto tp = preds.type_argmax();
        lane_pred.insert(lane_pred.end(), lp.begin(), lp.end());
        type_pred.insert(type_pred.end(), tp.begin(), tp.end());
        labels.append(ds.network.labels);
    }
    ValScore score;
    score.lane_acc = accuracy(lane_pred, labels.lanes, labels.lane_mask);
    score.type_acc = accuracy(type_pred, labels.types, labels.type_mask);
    score.ale = absolute_lane_error(lane_pred, labels.lanes, labels.lane_mask);
    score.mean_acc = 0.5 * (score.lane_acc + score.type_acc);
    return score;
}

}  // namespace

PredictionSet predict_dataset(const TrainDataset& dataset, const ModelConfig& model_config,
                              ModelParams& params) {
    Tape tape;
    ModelOutputs out =
        model_forward(tape, dataset.features, dataset.structures, model_config, params);
    return extract_predictions(tape, out);
}

TrainResult train_model(const std::vector<TrainDataset>& train,
                        const std::vector<TrainDataset>& validation,
                        const ModelConfig& model_config, ModelParams& params,
                        const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (train.empty()) throw DataError("train_model: no training networks");
    for (const auto& ds : train)
        if (ds.network.graph.vertex_count() == 0)
            throw DataError("train_model: empty training network");

    Rng rng(config.rng_seed);
    Adam adam(config.adam_beta1, config.adam_beta2, config.adam_eps);
    TrainResult result;
    std::vector<Tensor> best_state;

    for (int iter = 0; iter < config.iterations; ++iter) {
        const auto& ds = train.size() == 1
                             ? train[0]
                             : train[std::uniform_int_distribution<std::size_t>(
                                   0, train.size() - 1)(rng)];
        const int seed_vertex = std::uniform_int_distribution<int>(
            0, ds.network.graph.vertex_count() - 1)(rng);
        const TraversalMode mode =
            std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? TraversalMode::BFS
                                                               : TraversalMode::DFS;
        const std::uint64_t sample_seed = rng();
        SubgraphSample sample =
            sample_subgraph(ds.network.graph, ds.structures, seed_vertex, config.subgraph_size,
                            mode, config.loss_vertex_count, sample_seed);

        const Tensor features = gather_rows(ds.features, sample.vertex_ids);
        const LabelSet labels = gather_labels(ds.network.labels, sample.vertex_ids);
        const std::vector<int> loss_rows = sample.loss_local_indices();

        TrainMetricsRow row;
        row.iteration = iter;
        try {
            Tape tape;
            EmbedTransform transform;
            if (hooks.use_dropout && config.dropout_rate > 0.0) {
                transform = [&](Tape& t, Var e) {
                    return vertex_dropout(t, e, config.dropout_rate, rng);
                };
            }
            ModelOutputs out = model_forward(tape, features, sample.structures, model_config,
                                             params, transform);
            LossParts loss =
                total_loss(tape, out, labels, sample.adjacency, loss_rows,
                           hooks.use_laplace ? config.laplace_weight : 0.0);
            row.loss = tape.value(loss.total).item();
            row.ce_lane = tape.value(loss.ce_lane).item();
            row.ce_type = tape.value(loss.ce_type).item();
            row.reg = tape.value(loss.reg).item();
            tape.backward(loss.total);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at iteration " + std::to_string(iter) + ": " +
                               e.what());
        }
        adam.step(params.store, scheduled_lr(config, iter));

        const bool last = iter + 1 == config.iterations;
        if (!validation.empty() &&
            ((iter + 1) % config.validation_interval == 0 || last)) {
            const ValScore score = validate_model(validation, model_config, params);
            row.has_val = true;
            row.val_acc_lane = score.lane_acc;
            row.val_acc_type = score.type_acc;
            row.ale = score.ale;
            if (score.mean_acc > result.best_val_accuracy) {
                result.best_val_accuracy = score.mean_acc;
                result.best_iteration = iter;
                best_state = params.store.state();
            }
        }
        result.history.push_back(row);
    }

    if (!best_state.empty()) params.store.set_state(best_state);
    return result;
}

std::string metrics_to_csv(const std::vector<TrainMetricsRow>& history) {
    std::ostringstream out;
    out << "iteration,loss,ce_lane,ce_type,reg,val_acc_lane,val_acc_type,ale\n";
    char line[256];
    for (const auto& row : history) {
        if (row.has_val) {
            std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                          row.iteration, row.loss, row.ce_lane, row.ce_type, row.reg,
                          row.val_acc_lane, row.val_acc_type, row.ale);
        } else {
            std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,,,\n", row.iteration,
                          row.loss, row.ce_lane, row.ce_type, row.reg);
        }
        out << line;
    }
    return out.str();
}

}  // namespace roadtagger
