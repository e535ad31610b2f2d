#include "roadtagger/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "roadtagger/errors.hpp"
#include "roadtagger/metrics.hpp"

namespace roadtagger {

void ClassifierConfig::validate() const {
    if (receptive_hops < 0 || receptive_hops > 2)
        throw DataError("ClassifierConfig: receptive_hops must be 0, 1 or 2");
    if (feature_dim < 1 || embed_dim < 1)
        throw DataError("ClassifierConfig: dimensions must be positive");
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

ClassifierParams::ClassifierParams(const ClassifierConfig& config, std::uint64_t seed) {
    config.validate();
    std::uint64_t s = seed;
    auto next_seed = [&s]() { return s = splitmix64(s); };

    int in = config.input_dim();
    for (std::size_t i = 0; i < config.encoder_hidden.size(); ++i) {
        encoder.push_back(make_dense(store, "encoder.l" + std::to_string(i), in,
                                     config.encoder_hidden[i], next_seed()));
        in = config.encoder_hidden[i];
    }
    encoder.push_back(make_dense(store, "encoder.out", in, config.embed_dim, next_seed()));

    auto make_head = [&](const std::string& name, int classes) {
        Head head;
        head.l1 = make_dense(store, name + ".l1", config.embed_dim, 128, next_seed());
        head.l2 = make_dense(store, name + ".l2", 128, 64, next_seed());
        head.l3 = make_dense(store, name + ".l3", 64, classes, next_seed());
        return head;
    };
    lane_head = make_head("lane_head", config.lane_classes);
    type_head = make_head("type_head", config.type_classes);
}

Tensor expand_receptive_field(const Tensor& features,
                              const std::vector<std::vector<int>>& adjacency, int hops) {
    if (hops <= 0) return features;
    const int n = features.rows(), fd = features.cols();
    if (static_cast<int>(adjacency.size()) != n)
        throw DataError("expand_receptive_field: adjacency size mismatch");

    Tensor out({n, fd * (1 + 2 * hops)});
    for (int v = 0; v < n; ++v) {
        for (int c = 0; c < fd; ++c) out.at(v, c) = features.at(v, c);
        // ring 1: the (at most two) lowest-index direct neighbors
        std::vector<int> ring1(adjacency[v].begin(), adjacency[v].end());
        if (static_cast<int>(ring1.size()) > 2) ring1.resize(2);
        int off = fd;
        for (std::size_t i = 0; i < 2; ++i, off += fd)
            if (i < ring1.size())
                for (int c = 0; c < fd; ++c) out.at(v, off + c) = features.at(ring1[i], c);
        if (hops >= 2) {
            std::vector<int> ring2;
            for (int u : adjacency[v])
                for (int w : adjacency[u])
                    if (w != v &&
                        !std::binary_search(adjacency[v].begin(), adjacency[v].end(), w))
                        ring2.push_back(w);
            std::sort(ring2.begin(), ring2.end());
            ring2.erase(std::unique(ring2.begin(), ring2.end()), ring2.end());
            if (static_cast<int>(ring2.size()) > 2) ring2.resize(2);
            for (std::size_t i = 0; i < 2; ++i, off += fd)
                if (i < ring2.size())
                    for (int c = 0; c < fd; ++c) out.at(v, off + c) = features.at(ring2[i], c);
        }
    }
    return out;
}

ClassifierOutputs classifier_forward_tape(Tape& tape, Var features,
                                          const ClassifierConfig& config,
                                          ClassifierParams& params) {
    if (tape.value(features).cols() != config.input_dim())
        throw ShapeError("classifier_forward: input dim " +
                         std::to_string(tape.value(features).cols()) + " != expected " +
                         std::to_string(config.input_dim()));
    Var x = features;
    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        x = dense(tape, x, params.encoder[i]);
        if (i + 1 < params.encoder.size()) x = tape.relu(x);
    }
    auto head = [&](const ClassifierParams::Head& h) {
        Var y = tape.relu(dense(tape, x, h.l1));
        y = tape.relu(dense(tape, y, h.l2));
        return dense(tape, y, h.l3);
    };
    ClassifierOutputs out;
    out.lane_logits = head(params.lane_head);
    out.type_logits = head(params.type_head);
    out.lane_probs = tape.softmax_rows(out.lane_logits);
    out.type_probs = tape.softmax_rows(out.type_logits);
    return out;
}

PredictionSet classifier_forward(const Tensor& expanded_features, const ClassifierConfig& config,
                                 ClassifierParams& params) {
    Tape tape;
    ClassifierOutputs out =
        classifier_forward_tape(tape, tape.input(expanded_features), config, params);
    return PredictionSet{tape.value(out.lane_probs), tape.value(out.type_probs)};
}

PredictionSet classifier_predict_dataset(const TrainDataset& dataset,
                                         const ClassifierConfig& config,
                                         ClassifierParams& params) {
    const Tensor expanded = expand_receptive_field(dataset.features,
                                                   dataset.network.graph.adjacency(),
                                                   config.receptive_hops);
    return classifier_forward(expanded, config, params);
}

namespace {

struct LabeledVertex {
    int dataset;
    int vertex;
};

}  // namespace

TrainResult train_classifier(const std::vector<TrainDataset>& train,
                             const std::vector<TrainDataset>& validation,
                             const ClassifierConfig& config, ClassifierParams& params,
                             const TrainConfig& train_config) {
    train_config.validate();
    if (train.empty()) throw DataError("train_classifier: no training networks");

    std::vector<Tensor> expanded;
    std::vector<LabeledVertex> pool;
    for (std::size_t d = 0; d < train.size(); ++d) {
        expanded.push_back(expand_receptive_field(
            train[d].features, train[d].network.graph.adjacency(), config.receptive_hops));
        const auto& labels = train[d].network.labels;
        for (int v = 0; v < labels.size(); ++v)
            if (labels.lane_mask[v] || labels.type_mask[v])
                pool.push_back({static_cast<int>(d), v});
    }
    if (pool.empty()) throw DataError("train_classifier: no labeled vertices");

    std::vector<Tensor> val_expanded;
    for (const auto& ds : validation)
        val_expanded.push_back(expand_receptive_field(ds.features, ds.network.graph.adjacency(),
                                                      config.receptive_hops));

    Rng rng(train_config.rng_seed);
    Adam adam(train_config.adam_beta1, train_config.adam_beta2, train_config.adam_eps);
    TrainResult result;
    std::vector<Tensor> best_state;
    const int batch = train_config.loss_vertex_count;

    for (int iter = 0; iter < train_config.iterations; ++iter) {
        Tensor batch_features({batch, config.input_dim()});
        LabelSet batch_labels;
        batch_labels.resize(batch);
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (int i = 0; i < batch; ++i) {
            const LabeledVertex lv = pool[pick(rng)];
            for (int c = 0; c < config.input_dim(); ++c)
                batch_features.at(i, c) = expanded[lv.dataset].at(lv.vertex, c);
            const auto& labels = train[lv.dataset].network.labels;
            batch_labels.lanes[i] = labels.lanes[lv.vertex];
            batch_labels.lane_mask[i] = labels.lane_mask[lv.vertex];
            batch_labels.types[i] = labels.types[lv.vertex];
            batch_labels.type_mask[i] = labels.type_mask[lv.vertex];
        }

        TrainMetricsRow row;
        row.iteration = iter;
        try {
            Tape tape;
            ClassifierOutputs out =
                classifier_forward_tape(tape, tape.input(batch_features), config, params);
            std::vector<int> lane_classes(batch, 0), type_classes(batch, 0);
            std::vector<int> lane_rows, type_rows;
            for (int i = 0; i < batch; ++i) {
                if (batch_labels.lane_mask[i]) {
                    lane_classes[i] = batch_labels.lanes[i] - 1;
                    lane_rows.push_back(i);
                }
                if (batch_labels.type_mask[i]) {
                    type_classes[i] = batch_labels.types[i];
                    type_rows.push_back(i);
                }
            }
            Var ce_lane =
                tape.mean_rows(tape.cross_entropy(out.lane_logits, lane_classes), {lane_rows});
            Var ce_type =
                tape.mean_rows(tape.cross_entropy(out.type_logits, type_classes), {type_rows});
            Var loss = tape.add(ce_lane, ce_type);
            row.loss = tape.value(loss).item();
            row.ce_lane = tape.value(ce_lane).item();
            row.ce_type = tape.value(ce_type).item();
            tape.backward(loss);
        } catch (const NumericError& e) {
            throw NumericError("classifier training diverged at iteration " +
                               std::to_string(iter) + ": " + e.what());
        }
        adam.step(params.store, scheduled_lr(train_config, iter));

        const bool last = iter + 1 == train_config.iterations;
        if (!validation.empty() &&
            ((iter + 1) % train_config.validation_interval == 0 || last)) {
            std::vector<int> lane_pred, type_pred;
            LabelSet labels;
            labels.resize(0);
            for (std::size_t d = 0; d < validation.size(); ++d) {
                PredictionSet preds = classifier_forward(val_expanded[d], config, params);
                const auto lp = preds.lane_argmax();
                const auto tp = preds.type_argmax();
                lane_pred.insert(lane_pred.end(), lp.begin(), lp.end());
                type_pred.insert(type_pred.end(), tp.begin(), tp.end());
                labels.append(validation[d].network.labels);
            }
            row.has_val = true;
            row.val_acc_lane = accuracy(lane_pred, labels.lanes, labels.lane_mask);
            row.val_acc_type = accuracy(type_pred, labels.types, labels.type_mask);
            row.ale = absolute_lane_error(lane_pred, labels.lanes, labels.lane_mask);
            const double mean_acc = 0.5 * (row.val_acc_lane + row.val_acc_type);
            if (mean_acc > result.best_val_accuracy) {
                result.best_val_accuracy = mean_acc;
                result.best_iteration = iter;
                best_state = params.store.state();
            }
        }
        result.history.push_back(row);
    }
    if (!best_state.empty()) params.store.set_state(best_state);
    return result;
}

PredictionSet smooth_predictions(const PredictionSet& predictions, const RoadGraph& graph) {
    const int n = graph.vertex_count();
    if (predictions.vertex_count() != n)
        throw DataError("smooth_predictions: prediction count mismatch");
    auto smooth = [&](const Tensor& probs) {
        Tensor out({n, probs.cols()});
        for (int v = 0; v < n; ++v) {
            const auto& nb = graph.neighbors(v);
            const double inv = 1.0 / (1.0 + static_cast<double>(nb.size()));
            for (int c = 0; c < probs.cols(); ++c) {
                double acc = probs.at(v, c);
                for (int u : nb) acc += probs.at(u, c);
                out.at(v, c) = acc * inv;
            }
        }
        return out;
    };
    return PredictionSet{smooth(predictions.lane_probs), smooth(predictions.type_probs)};
}

// ---------------------------------------------------------------------------
// MRF on road chains
// ---------------------------------------------------------------------------

namespace {

constexpr double kProbFloor = 1e-9;

double pairwise_cost(int a, int b, double lambda, int exponent, bool ordinal) {
    if (!ordinal) return a == b ? 0.0 : lambda;
    const double d = std::abs(a - b);
    return exponent == 1 ? lambda * d : lambda * d * d;
}

}  // namespace

std::vector<std::vector<double>> chain_unaries(const Tensor& probs,
                                               const std::vector<int>& vertex_sequence) {
    std::vector<std::vector<double>> unaries;
    unaries.reserve(vertex_sequence.size());
    for (int v : vertex_sequence) {
        std::vector<double> u(probs.cols());
        for (int c = 0; c < probs.cols(); ++c)
            u[c] = -std::log(std::max(probs.at(v, c), kProbFloor));
        unaries.push_back(std::move(u));
    }
    return unaries;
}

double chain_energy(const std::vector<std::vector<double>>& unaries,
                    const std::vector<int>& labels, double lambda, int exponent, bool ordinal,
                    bool closed) {
    const int n = static_cast<int>(unaries.size());
    double e = 0.0;
    for (int i = 0; i < n; ++i) e += unaries[i][labels[i]];
    for (int i = 0; i + 1 < n; ++i)
        e += pairwise_cost(labels[i], labels[i + 1], lambda, exponent, ordinal);
    if (closed && n > 1)
        e += pairwise_cost(labels[n - 1], labels[0], lambda, exponent, ordinal);
    return e;
}

namespace {

// Open-chain Viterbi. When clamp_first >= 0 the first label is fixed and
// the tail selection pays the cycle-closing pairwise term back to it.
std::vector<int> viterbi(const std::vector<std::vector<double>>& unaries, double lambda,
                         int exponent, bool ordinal, int clamp_first) {
    const int n = static_cast<int>(unaries.size());
    const int labels = static_cast<int>(unaries[0].size());
    std::vector<std::vector<double>> cost(n, std::vector<double>(labels));
    std::vector<std::vector<int>> from(n, std::vector<int>(labels, -1));
    for (int c = 0; c < labels; ++c) {
        cost[0][c] = unaries[0][c];
        if (clamp_first >= 0 && c != clamp_first)
            cost[0][c] = std::numeric_limits<double>::infinity();
    }
    for (int i = 1; i < n; ++i) {
        for (int c = 0; c < labels; ++c) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int p = 0; p < labels; ++p) {
                const double v = cost[i - 1][p] + pairwise_cost(p, c, lambda, exponent, ordinal);
                if (v < best) {  // ties keep the smallest p
                    best = v;
                    arg = p;
                }
            }
            cost[i][c] = best + unaries[i][c];
            from[i][c] = arg;
        }
    }
    int tail = 0;
    double tail_cost = std::numeric_limits<double>::infinity();
    for (int c = 0; c < labels; ++c) {
        double v = cost[n - 1][c];
        if (clamp_first >= 0)
            v += pairwise_cost(c, clamp_first, lambda, exponent, ordinal);
        if (v < tail_cost) {
            tail_cost = v;
            tail = c;
        }
    }
    std::vector<int> out(n);
    out[n - 1] = tail;
    for (int i = n - 1; i > 0; --i) out[i - 1] = from[i][out[i]];
    return out;
}

}  // namespace

std::vector<int> chain_min_sum(const std::vector<std::vector<double>>& unaries, double lambda,
                               int exponent, bool ordinal, bool closed) {
    if (unaries.empty()) return {};
    const int n = static_cast<int>(unaries.size());
    const int labels = static_cast<int>(unaries[0].size());
    if (n == 1 || !closed) {
        if (n == 1) {
            int best = 0;
            for (int c = 1; c < labels; ++c)
                if (unaries[0][c] < unaries[0][best]) best = c;
            return {best};
        }
        return viterbi(unaries, lambda, exponent, ordinal, -1);
    }
    // cycle: condition on the first label and take the cheapest closure
    std::vector<int> best;
    double best_energy = std::numeric_limits<double>::infinity();
    for (int first = 0; first < labels; ++first) {
        std::vector<int> cand = viterbi(unaries, lambda, exponent, ordinal, first);
        const double e = chain_energy(unaries, cand, lambda, exponent, ordinal, true);
        if (e < best_energy - 1e-15) {
            best_energy = e;
            best = std::move(cand);
        }
    }
    return best;
}

MrfLabels mrf_infer(const PredictionSet& predictions, const std::vector<RoadChain>& chains,
                    const MrfParams& params) {
    if (params.lambda < 0.0 || (params.exponent != 1 && params.exponent != 2))
        throw DataError("mrf_infer: invalid parameters");
    MrfLabels out;
    out.lanes = predictions.lane_argmax();
    out.types = predictions.type_argmax();

    const int n = predictions.vertex_count();
    std::vector<bool> decided(n, false);
    for (const auto& chain : chains) {
        if (chain.vertex_sequence.empty()) continue;  // empty chain skipped
        const auto& seq = chain.vertex_sequence;

        const auto lane_labels = chain_min_sum(chain_unaries(predictions.lane_probs, seq),
                                               params.lambda, params.exponent, /*ordinal=*/true,
                                               chain.closed);
        const auto type_labels = chain_min_sum(chain_unaries(predictions.type_probs, seq),
                                               params.lambda, params.exponent, /*ordinal=*/false,
                                               chain.closed);
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (decided[seq[i]]) continue;  // earlier chain keeps the junction label
            decided[seq[i]] = true;
            out.lanes[seq[i]] = lane_labels[i] + 1;
            out.types[seq[i]] = type_labels[i];
        }
    }
    return out;
}

MrfParams mrf_grid_search(const std::vector<PredictionSet>& predictions,
                          const std::vector<LabelSet>& labels,
                          const std::vector<std::vector<RoadChain>>& chains, const MrfGrid& grid) {
    if (grid.lambdas.empty() || grid.exponents.empty())
        throw DataError("mrf_grid_search: empty grid");
    if (predictions.size() != labels.size() || predictions.size() != chains.size())
        throw DataError("mrf_grid_search: input size mismatch");
    if (predictions.empty()) throw DataError("mrf_grid_search: no validation data");

    MrfParams best;
    double best_score = -1.0;
    for (double lambda : grid.lambdas) {
        for (int exponent : grid.exponents) {
            int lane_total = 0, lane_ok = 0, type_total = 0, type_ok = 0;
            for (std::size_t w = 0; w < predictions.size(); ++w) {
                const MrfLabels decoded =
                    mrf_infer(predictions[w], chains[w], {lambda, exponent});
                for (int v = 0; v < labels[w].size(); ++v) {
                    if (labels[w].lane_mask[v]) {
                        ++lane_total;
                        if (decoded.lanes[v] == labels[w].lanes[v]) ++lane_ok;
                    }
                    if (labels[w].type_mask[v]) {
                        ++type_total;
                        if (decoded.types[v] == labels[w].types[v]) ++type_ok;
                    }
                }
            }
            const double lane_acc = lane_total ? static_cast<double>(lane_ok) / lane_total : 0.0;
            const double type_acc = type_total ? static_cast<double>(type_ok) / type_total : 0.0;
            const double score = 0.5 * (lane_acc + type_acc);
            // strict improvement only: earlier grid points win ties, and the
            // grid iterates smallest lambda then smallest exponent first
            if (score > best_score + 1e-12) {
                best_score = score;
                best = {lambda, exponent};
            }
        }
    }
    return best;
}

}  // namespace roadtagger
