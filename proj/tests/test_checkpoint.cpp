#include <doctest.h>

#include "roadtagger/checkpoint.hpp"
#include "roadtagger/config_io.hpp"
#include "roadtagger/errors.hpp"
#include "roadtagger/ingest.hpp"

using namespace roadtagger;

TEST_CASE("checkpoints round-trip parameters bit-exactly") {
    ModelConfig mc;
    mc.feature_dim = 5;
    mc.embed_dim = 8;
    mc.hidden_chunk = 8;
    mc.encoder_hidden = {8};
    mc.steps = 2;
    mc.structures = {"original"};
    ModelParams params(mc, 77);

    Checkpoint ckpt;
    ckpt.model_config = mc;
    ckpt.add_section("roadtagger", params.store);
    save_checkpoint(ckpt, "/tmp/roadtagger_test.ckpt");

    const Checkpoint loaded = load_checkpoint("/tmp/roadtagger_test.ckpt");
    CHECK(loaded.model_config.steps == 2);
    CHECK(loaded.model_config.structures == std::vector<std::string>{"original"});

    ModelParams restored(loaded.model_config, 0);
    load_section_into(loaded, "roadtagger", restored.store);
    REQUIRE(restored.store.items().size() == params.store.items().size());
    for (std::size_t i = 0; i < params.store.items().size(); ++i) {
        const auto& a = params.store.items()[i]->value;
        const auto& b = restored.store.items()[i]->value;
        REQUIRE(a.size() == b.size());
        for (std::size_t j = 0; j < a.size(); ++j) CHECK(a.data()[j] == b.data()[j]);
    }
}

TEST_CASE("files without the versioned header are rejected") {
    write_file_atomic("/tmp/roadtagger_bad.ckpt", "{\"format\": \"something-else\"}");
    CHECK_THROWS_AS(load_checkpoint("/tmp/roadtagger_bad.ckpt"), DataError);
    write_file_atomic("/tmp/roadtagger_corrupt.ckpt", "not json at all {");
    CHECK_THROWS_AS(load_checkpoint("/tmp/roadtagger_corrupt.ckpt"), ParseError);
    CHECK_THROWS_AS(load_checkpoint("/tmp/roadtagger_missing_file.ckpt"), DataError);
}

TEST_CASE("missing sections are reported by name") {
    ModelConfig mc;
    mc.structures = {"original"};
    mc.feature_dim = 4;
    mc.embed_dim = 8;
    mc.hidden_chunk = 8;
    mc.encoder_hidden = {8};
    ModelParams params(mc, 1);
    Checkpoint ckpt;
    ckpt.model_config = mc;
    ckpt.add_section("roadtagger", params.store);
    CHECK_THROWS_WITH_AS(ckpt.section("classifier"), doctest::Contains("classifier"), DataError);
}

TEST_CASE("run configs parse with defaults and reject unknown keys") {
    const RunConfig defaults = parse_run_config_text("{}");
    CHECK(defaults.train.iterations == 5000);
    CHECK(defaults.train.lr_initial == 1e-4);
    CHECK(defaults.train.laplace_weight == 3.0);
    CHECK(defaults.train.dropout_rate == 0.10);
    CHECK(defaults.train.subgraph_size == 256);
    CHECK(defaults.train.loss_vertex_count == 128);
    CHECK(defaults.model.steps == 8);
    CHECK(defaults.model.hidden_chunk == 128);
    CHECK(defaults.model.embed_dim == 64);

    const RunConfig parsed = parse_run_config_text(
        R"({"train": {"iterations": 10, "seed": 4}, "model": {"steps": 3}})");
    CHECK(parsed.train.iterations == 10);
    CHECK(parsed.model.steps == 3);

    CHECK_THROWS_WITH_AS(parse_run_config_text(R"({"trian": {}})"),
                         doctest::Contains("trian"), ParseError);
    CHECK_THROWS_WITH_AS(parse_run_config_text(R"({"train": {"iters": 10}})"),
                         doctest::Contains("iters"), ParseError);
    CHECK_THROWS_AS(parse_run_config_text("{"), ParseError);

    // round trip
    const RunConfig again = parse_run_config_text(run_config_to_json(parsed));
    CHECK(again.train.iterations == 10);
    CHECK(again.model.steps == 3);
}
