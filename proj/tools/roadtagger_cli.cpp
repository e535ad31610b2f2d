#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

#include "roadtagger/baselines.hpp"
#include "roadtagger/checkpoint.hpp"
#include "roadtagger/config_io.hpp"
#include "roadtagger/errors.hpp"
#include "roadtagger/gradcheck.hpp"
#include "roadtagger/ingest.hpp"
#include "roadtagger/metrics.hpp"
#include "roadtagger/model.hpp"
#include "roadtagger/synth.hpp"
#include "roadtagger/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roadtagger;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct LoadedWorld {
    std::string name;
    LabeledNetwork network;
    FeatureFile features;
};

void save_world(const World& world, const fs::path& dir) {
    write_network_geojson(world.network, (dir / (world.name + ".geojson")).string());
    write_features_csv(world, (dir / (world.name + ".features.csv")).string());
}

std::vector<LoadedWorld> load_worlds(const fs::path& dir, const std::vector<std::string>& names) {
    std::vector<LoadedWorld> out;
    for (const auto& name : names) {
        LoadedWorld world;
        world.name = name;
        world.network = parse_geojson_network(read_file((dir / (name + ".geojson")).string()));
        world.features = read_features_csv((dir / (name + ".features.csv")).string());
        if (world.features.features.rows() != world.network.graph.vertex_count())
            throw DataError(name + ": feature rows do not match the network vertex count");
        out.push_back(std::move(world));
    }
    return out;
}

json read_manifest(const fs::path& data_dir) {
    const fs::path path = data_dir / "manifest.json";
    try {
        return json::parse(read_file(path.string()));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

TrainDataset to_dataset(const LoadedWorld& world, const std::vector<std::string>& structures) {
    TrainDataset ds;
    ds.name = world.name;
    ds.network = world.network;
    ds.features = world.features.features;
    ds.structures = derive_structures(world.network.graph, structures);
    ds.occluded = world.features.occluded;
    return ds;
}

// Every fifth training world (offset 3) is held out for validation and
// checkpoint selection; the stride is coprime with the suite topology
// cycles, so validation sees a mix of world kinds.
bool is_validation_index(std::size_t index) { return index % 5 == 3; }

int cmd_generate(const std::string& preset, std::uint64_t seed, const std::string& out_dir) {
    const ScenarioSuite suite = scenario_suite(preset, seed);
    const fs::path root(out_dir);
    fs::create_directories(root / "train");
    fs::create_directories(root / "test");

    json manifest;
    manifest["preset"] = suite.preset;
    manifest["seed"] = seed;
    json train_names = json::array(), test_names = json::array(), annotations = json::object();
    for (const auto& world : suite.train) {
        save_world(world, root / "train");
        train_names.push_back(world.name);
        if (!world.annotations.empty()) annotations[world.name] = world.annotations;
    }
    for (const auto& world : suite.test) {
        save_world(world, root / "test");
        test_names.push_back(world.name);
        if (!world.annotations.empty()) annotations[world.name] = world.annotations;
    }
    manifest["train"] = train_names;
    manifest["test"] = test_names;
    manifest["annotations"] = annotations;
    write_file_atomic((root / "manifest.json").string(), manifest.dump(1));
    std::cout << "generated " << suite.train.size() << " train and " << suite.test.size()
              << " test worlds under " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt, const std::vector<std::string>& models,
              const std::string& log_path) {
    RunConfig config;
    if (!config_path.empty()) config = parse_run_config_file(config_path);

    const json manifest = read_manifest(data_dir);
    const auto names = manifest.at("train").get<std::vector<std::string>>();
    const auto worlds = load_worlds(fs::path(data_dir) / "train", names);
    if (worlds.empty()) throw DataError("train: no training worlds in " + data_dir);

    std::vector<TrainDataset> train, validation;
    for (std::size_t i = 0; i < worlds.size(); ++i) {
        TrainDataset ds = to_dataset(worlds[i], config.model.structures);
        if (is_validation_index(i) && worlds.size() > 3)
            validation.push_back(std::move(ds));
        else
            train.push_back(std::move(ds));
    }

    Checkpoint checkpoint;
    checkpoint.model_config = config.model;
    checkpoint.classifier_config = config.classifier;

    const std::string log_base = log_path.empty() ? out_ckpt : log_path;
    for (const auto& model : models) {
        if (model == "roadtagger") {
            ModelParams params(config.model, config.train.rng_seed);
            const TrainResult result =
                train_model(train, validation, config.model, params, config.train);
            checkpoint.add_section("roadtagger", params.store);
            write_file_atomic(log_base + ".metrics.csv", metrics_to_csv(result.history));
            std::cout << "roadtagger: best validation accuracy "
                      << result.best_val_accuracy << " at iteration " << result.best_iteration
                      << "\n";
        } else if (model == "classifier" || model == "classifier_rf1" ||
                   model == "classifier_rf2") {
            ClassifierConfig cc = config.classifier;
            cc.receptive_hops = model == "classifier" ? 0 : (model == "classifier_rf1" ? 1 : 2);
            ClassifierParams params(cc, config.train.rng_seed);
            const TrainResult result =
                train_classifier(train, validation, cc, params, config.train);
            checkpoint.add_section(model, params.store);
            write_file_atomic(log_base + "." + model + ".metrics.csv",
                              metrics_to_csv(result.history));
            std::cout << model << ": best validation accuracy " << result.best_val_accuracy
                      << " at iteration " << result.best_iteration << "\n";
        } else {
            throw DataError("train: unknown model '" + model + "'");
        }
    }
    save_checkpoint(checkpoint, out_ckpt);
    std::cout << "checkpoint written to " << out_ckpt << "\n";
    return 0;
}

PredictionSet one_hot_predictions(const MrfLabels& labels, int lane_classes, int type_classes) {
    const int n = static_cast<int>(labels.lanes.size());
    PredictionSet out;
    out.lane_probs = Tensor({n, lane_classes});
    out.type_probs = Tensor({n, type_classes});
    for (int v = 0; v < n; ++v) {
        out.lane_probs.at(v, labels.lanes[v] - 1) = 1.0;
        out.type_probs.at(v, labels.types[v]) = 1.0;
    }
    return out;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::vector<std::string>& schemes, const std::string& report_path,
             double mrf_lambda, int mrf_exponent) {
    const Checkpoint checkpoint = load_checkpoint(ckpt_path);
    const json manifest = read_manifest(data_dir);
    const auto test_names = manifest.at("test").get<std::vector<std::string>>();
    const auto test_worlds = load_worlds(fs::path(data_dir) / "test", test_names);
    if (test_worlds.empty()) throw DataError("eval: no test worlds in " + data_dir);

    ModelParams model_params(checkpoint.model_config, 0);
    if (checkpoint.has_section("roadtagger"))
        load_section_into(checkpoint, "roadtagger", model_params.store);

    auto classifier_for = [&](const std::string& section) {
        ClassifierConfig cc = checkpoint.classifier_config;
        cc.receptive_hops = section == "classifier" ? 0 : (section == "classifier_rf1" ? 1 : 2);
        auto params = std::make_unique<ClassifierParams>(cc, 0);
        load_section_into(checkpoint, section, params->store);
        return std::make_pair(cc, std::move(params));
    };

    // per-world classifier predictions are shared by smooth and mrf
    std::vector<TrainDataset> datasets;
    for (const auto& world : test_worlds)
        datasets.push_back(to_dataset(world, checkpoint.model_config.structures));

    std::vector<PredictionSet> classifier_preds;
    const bool needs_classifier =
        std::any_of(schemes.begin(), schemes.end(), [](const std::string& s) {
            return s == "classifier" || s == "smooth" || s == "mrf";
        });
    std::unique_ptr<ClassifierParams> classifier_params;
    ClassifierConfig classifier_config;
    if (needs_classifier) {
        auto [cc, params] = classifier_for("classifier");
        classifier_config = cc;
        classifier_params = std::move(params);
        for (const auto& ds : datasets)
            classifier_preds.push_back(
                classifier_predict_dataset(ds, classifier_config, *classifier_params));
    }

    MrfParams mrf_params{mrf_lambda, mrf_exponent};
    if (std::find(schemes.begin(), schemes.end(), "mrf") != schemes.end() && mrf_lambda < 0.0) {
        // grid search on the validation split of the training worlds
        const auto train_names = manifest.at("train").get<std::vector<std::string>>();
        std::vector<std::string> val_names;
        for (std::size_t i = 0; i < train_names.size(); ++i)
            if (is_validation_index(i) && train_names.size() > 3)
                val_names.push_back(train_names[i]);
        if (val_names.empty()) val_names = train_names;
        const auto val_worlds = load_worlds(fs::path(data_dir) / "train", val_names);
        std::vector<PredictionSet> val_preds;
        std::vector<LabelSet> val_labels;
        std::vector<std::vector<RoadChain>> val_chains;
        for (const auto& world : val_worlds) {
            TrainDataset ds = to_dataset(world, checkpoint.model_config.structures);
            val_preds.push_back(
                classifier_predict_dataset(ds, classifier_config, *classifier_params));
            val_labels.push_back(world.network.labels);
            val_chains.push_back(extract_road_chains(world.network.graph));
        }
        mrf_params = mrf_grid_search(val_preds, val_labels, val_chains, MrfGrid{});
        std::cout << "mrf grid search selected lambda=" << mrf_params.lambda
                  << " n=" << mrf_params.exponent << "\n";
    }

    // concatenated predictions over all test worlds, per scheme
    std::vector<std::pair<std::string, PredictionSet>> rows;
    for (const auto& scheme : schemes) {
        PredictionSet combined;
        std::vector<double> lanes, types;
        int lane_cols = checkpoint.model_config.lane_classes;
        int type_cols = checkpoint.model_config.type_classes;
        auto append = [&](const PredictionSet& p) {
            for (int v = 0; v < p.lane_probs.rows(); ++v) {
                for (int c = 0; c < lane_cols; ++c) lanes.push_back(p.lane_probs.at(v, c));
                for (int c = 0; c < type_cols; ++c) types.push_back(p.type_probs.at(v, c));
            }
        };
        for (std::size_t w = 0; w < datasets.size(); ++w) {
            if (scheme == "roadtagger") {
                append(predict_dataset(datasets[w], checkpoint.model_config, model_params));
            } else if (scheme == "classifier") {
                append(classifier_preds[w]);
            } else if (scheme == "classifier_rf1" || scheme == "classifier_rf2") {
                auto [cc, params] = classifier_for(scheme);
                append(classifier_predict_dataset(datasets[w], cc, *params));
            } else if (scheme == "smooth") {
                append(smooth_predictions(classifier_preds[w], datasets[w].network.graph));
            } else if (scheme == "mrf") {
                const auto chains = extract_road_chains(datasets[w].network.graph);
                append(one_hot_predictions(mrf_infer(classifier_preds[w], chains, mrf_params),
                                           lane_cols, type_cols));
            } else {
                throw DataError("eval: unknown scheme '" + scheme + "'");
            }
        }
        const int n = static_cast<int>(lanes.size()) / lane_cols;
        combined.lane_probs = Tensor({n, lane_cols}, std::move(lanes));
        combined.type_probs = Tensor({n, type_cols}, std::move(types));
        rows.emplace_back(scheme, std::move(combined));
    }

    LabelSet labels;
    labels.resize(0);
    std::vector<bool> occluded, disrupted;
    for (const auto& world : test_worlds) {
        labels.append(world.network.labels);
        occluded.insert(occluded.end(), world.features.occluded.begin(),
                        world.features.occluded.end());
        disrupted.insert(disrupted.end(), world.features.disrupted.begin(),
                         world.features.disrupted.end());
    }
    std::vector<bool> clean(disrupted.size());
    for (std::size_t i = 0; i < disrupted.size(); ++i) clean[i] = !disrupted[i];
    const Subsets subsets = {{"occluded", occluded}, {"clean", clean}};

    const ComparisonTable table = compare_report(rows, labels, subsets);
    std::cout << table.to_text();
    if (!report_path.empty()) {
        write_file_atomic(report_path, table.to_csv());
        json side{{"mrf_lambda", mrf_params.lambda}, {"mrf_exponent", mrf_params.exponent}};
        write_file_atomic(report_path + ".mrf.json", side.dump(1));
        std::cout << "report written to " << report_path << "\n";
    }
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& network_path,
              const std::string& features_path, const std::string& out_path, double spacing) {
    const Checkpoint checkpoint = load_checkpoint(ckpt_path);
    LabeledNetwork network = parse_geojson_network(read_file(network_path));
    if (spacing > 0.0) {
        const int before = network.graph.vertex_count();
        RoadGraph dense = densify(network.graph, spacing);
        if (dense.vertex_count() != before) {
            // labels extend to interpolated vertices as masked entries
            LabelSet labels = network.labels;
            const int extra = dense.vertex_count() - before;
            LabelSet pad;
            pad.resize(extra);
            labels.append(pad);
            network.graph = std::move(dense);
            network.labels = std::move(labels);
        }
    }
    const FeatureFile features = read_features_csv(features_path);
    if (features.features.rows() != network.graph.vertex_count())
        throw DataError("infer: feature rows (" + std::to_string(features.features.rows()) +
                        ") do not match the network vertex count (" +
                        std::to_string(network.graph.vertex_count()) + ")");

    ModelParams params(checkpoint.model_config, 0);
    load_section_into(checkpoint, "roadtagger", params.store);

    TrainDataset ds;
    ds.network = network;
    ds.features = features.features;
    ds.structures = derive_structures(network.graph, checkpoint.model_config.structures);
    const PredictionSet preds = predict_dataset(ds, checkpoint.model_config, params);
    write_predictions(network, preds, out_path);
    std::cout << "predictions written to " << out_path << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const GradCheckResult result = run_gradient_checks(seed);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "gradcheck: " << result.checked << " coordinates checked, " << result.skipped
              << " skipped (unstable difference), " << result.failed << " failed ["
              << elapsed << " s]\n";
    for (const auto& f : result.failures) std::cerr << "  " << f << "\n";
    return result.ok() ? 0 : kExitCheck;
}

int cmd_mrf_search(const std::string& grid_path, const std::string& ckpt_path,
                   const std::string& data_dir) {
    MrfGrid grid;
    if (!grid_path.empty()) {
        json doc;
        try {
            doc = json::parse(read_file(grid_path));
        } catch (const json::parse_error& e) {
            throw ParseError(grid_path + ": " + e.what());
        }
        if (doc.contains("lambdas")) grid.lambdas = doc.at("lambdas").get<std::vector<double>>();
        if (doc.contains("exponents"))
            grid.exponents = doc.at("exponents").get<std::vector<int>>();
    }
    const Checkpoint checkpoint = load_checkpoint(ckpt_path);
    const json manifest = read_manifest(data_dir);
    const auto train_names = manifest.at("train").get<std::vector<std::string>>();
    std::vector<std::string> val_names;
    for (std::size_t i = 0; i < train_names.size(); ++i)
        if (is_validation_index(i) && train_names.size() > 3) val_names.push_back(train_names[i]);
    if (val_names.empty()) val_names = train_names;
    const auto worlds = load_worlds(fs::path(data_dir) / "train", val_names);

    ClassifierConfig cc = checkpoint.classifier_config;
    cc.receptive_hops = 0;
    ClassifierParams params(cc, 0);
    load_section_into(checkpoint, "classifier", params.store);

    std::vector<PredictionSet> preds;
    std::vector<LabelSet> labels;
    std::vector<std::vector<RoadChain>> chains;
    for (const auto& world : worlds) {
        TrainDataset ds = to_dataset(world, checkpoint.model_config.structures);
        preds.push_back(classifier_predict_dataset(ds, cc, params));
        labels.push_back(world.network.labels);
        chains.push_back(extract_road_chains(world.network.graph));
    }
    const MrfParams best = mrf_grid_search(preds, labels, chains, grid);
    std::cout << "selected lambda=" << best.lambda << " n=" << best.exponent << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"road attribute inference over road-network graphs"};
    app.require_subcommand(1);

    // generate
    auto* generate = app.add_subcommand("generate", "generate a synthetic scenario suite");
    std::string gen_preset = "basic", gen_out;
    std::uint64_t gen_seed = 0;
    generate->add_option("--preset", gen_preset,
                         "suite preset: basic, occlusion_sweep, overpass, long_disruption");
    generate->add_option("--seed", gen_seed, "generation seed");
    generate->add_option("--out", gen_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train the model and baselines");
    std::string train_config, train_data, train_out, train_log;
    std::vector<std::string> train_models = {"roadtagger", "classifier"};
    train->add_option("--config", train_config, "run config JSON");
    train->add_option("--data", train_data, "data directory from generate")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--log", train_log, "metrics log base path (default: checkpoint path)");
    train->add_option("--models", train_models,
                      "models to train: roadtagger, classifier, classifier_rf1, classifier_rf2")
        ->delimiter(',');

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate schemes on the test worlds");
    std::string eval_ckpt, eval_data, eval_report;
    std::vector<std::string> eval_schemes = {"roadtagger", "classifier", "smooth", "mrf"};
    double eval_mrf_lambda = -1.0;
    int eval_mrf_exponent = 1;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "data directory")->required();
    eval->add_option("--schemes", eval_schemes,
                     "schemes: roadtagger, classifier, classifier_rf1, classifier_rf2, smooth, mrf")
        ->delimiter(',');
    eval->add_option("--report", eval_report, "report CSV output path");
    eval->add_option("--mrf-lambda", eval_mrf_lambda,
                     "fixed MRF lambda (skips the validation grid search)");
    eval->add_option("--mrf-n", eval_mrf_exponent, "fixed MRF exponent (1 or 2)");

    // infer
    auto* infer = app.add_subcommand("infer", "label a network with a trained model");
    std::string infer_ckpt, infer_network, infer_features, infer_out;
    double infer_spacing = 0.0;
    infer->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
    infer->add_option("--network", infer_network, "network GeoJSON")->required();
    infer->add_option("--features", infer_features, "per-vertex feature CSV")->required();
    infer->add_option("--out", infer_out, "output GeoJSON path")->required();
    infer->add_option("--spacing", infer_spacing,
                      "densify the network at this spacing in meters before inference");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient self-test");
    std::uint64_t grad_seed = 1;
    gradcheck->add_option("--seed", grad_seed, "random seed");

    // baseline
    auto* baseline = app.add_subcommand("baseline", "baseline utilities");
    baseline->require_subcommand(1);
    auto* mrf_search = baseline->add_subcommand("mrf-search", "grid-search MRF parameters");
    std::string search_grid, search_ckpt, search_data;
    mrf_search->add_option("--grid", search_grid, "grid JSON ({\"lambdas\":[],\"exponents\":[]})");
    mrf_search->add_option("--ckpt", search_ckpt, "checkpoint path")->required();
    mrf_search->add_option("--data", search_data, "data directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen_preset, gen_seed, gen_out);
        if (train->parsed())
            return cmd_train(train_config, train_data, train_out, train_models, train_log);
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_data, eval_schemes, eval_report, eval_mrf_lambda,
                            eval_mrf_exponent);
        if (infer->parsed())
            return cmd_infer(infer_ckpt, infer_network, infer_features, infer_out, infer_spacing);
        if (gradcheck->parsed()) return cmd_gradcheck(grad_seed);
        if (baseline->parsed() && mrf_search->parsed())
            return cmd_mrf_search(search_grid, search_ckpt, search_data);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheck;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
