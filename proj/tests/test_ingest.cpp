#include <doctest.h>

#include <cmath>

#include "roadtagger/errors.hpp"
#include "roadtagger/ingest.hpp"
#include "roadtagger/road_graph.hpp"
#include "test_helpers.hpp"

using namespace roadtagger;

namespace {

const char* kSingleLine = R"({
  "type": "FeatureCollection",
  "coordinate_system": "local_meters",
  "features": [
    {"type": "Feature",
     "geometry": {"type": "LineString", "coordinates": [[0,0],[50,0],[100,0]]},
     "properties": {"lanes": 4, "highway": "primary"}}
  ]
})";

const char* kSharedEndpoint = R"({
  "type": "FeatureCollection",
  "coordinate_system": "local_meters",
  "features": [
    {"type": "Feature",
     "geometry": {"type": "LineString", "coordinates": [[0,0],[100,0]]},
     "properties": {"lanes": 2, "highway": "residential"}},
    {"type": "Feature",
     "geometry": {"type": "LineString", "coordinates": [[100,0.003],[200,0]]},
     "properties": {"lanes": 2, "highway": "residential"}}
  ]
})";

}  // namespace

TEST_CASE("a single labeled LineString parses into a labeled path") {
    const LabeledNetwork net = parse_geojson_network(kSingleLine);
    CHECK(net.graph.vertex_count() == 3);
    CHECK(net.graph.edge_count() == 2);
    const auto chains = extract_road_chains(net.graph);
    CHECK(chains.size() == 1);
    for (int v = 0; v < 3; ++v) {
        CHECK(net.labels.lane_mask[v]);
        CHECK(net.labels.lanes[v] == 4);
        CHECK(net.labels.type_mask[v]);
        CHECK(net.labels.types[v] == static_cast<int>(RoadType::Primary));
    }
}

TEST_CASE("shared endpoints merge within a centimeter") {
    const LabeledNetwork net = parse_geojson_network(kSharedEndpoint);
    CHECK(net.graph.vertex_count() == 3);  // the junction counted once
    CHECK(net.graph.edge_count() == 2);
    int junction = -1;
    for (int v = 0; v < 3; ++v)
        if (net.graph.neighbors(v).size() == 2) junction = v;
    REQUIRE(junction >= 0);
    CHECK(std::fabs(net.graph.position(junction).x - 100.0) < 0.01);
}

TEST_CASE("out-of-range lanes are clamped with a warning") {
    const std::string text = R"({
      "type": "FeatureCollection",
      "coordinate_system": "local_meters",
      "features": [
        {"type": "Feature",
         "geometry": {"type": "LineString", "coordinates": [[0,0],[30,0]]},
         "properties": {"lanes": 8}}
      ]})";
    ParseReport report;
    const LabeledNetwork net = parse_geojson_network(text, {}, &report);
    CHECK(net.labels.lanes[0] == 6);
    CHECK(net.labels.lane_mask[0]);
    CHECK_FALSE(net.labels.type_mask[0]);  // no highway property
    REQUIRE_FALSE(report.warnings.empty());
    CHECK(report.warnings.front().find("clamped") != std::string::npos);
}

TEST_CASE("malformed JSON reports the offending line") {
    const std::string bad = "{\n \"type\": \"FeatureCollection\",\n \"features\": [oops]\n}";
    try {
        parse_geojson_network(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("non-LineString features are skipped and counted") {
    const std::string text = R"({
      "type": "FeatureCollection",
      "coordinate_system": "local_meters",
      "features": [
        {"type": "Feature", "geometry": {"type": "Point", "coordinates": [1,2]},
         "properties": {}},
        {"type": "Feature",
         "geometry": {"type": "LineString", "coordinates": [[0,0],[30,0]]},
         "properties": {}}
      ]})";
    ParseReport report;
    const LabeledNetwork net = parse_geojson_network(text, {}, &report);
    CHECK(net.graph.vertex_count() == 2);
    CHECK(report.skipped_features == 1);
}

TEST_CASE("unknown highway values leave the type masked") {
    const std::string text = R"({
      "type": "FeatureCollection",
      "coordinate_system": "local_meters",
      "features": [
        {"type": "Feature",
         "geometry": {"type": "LineString", "coordinates": [[0,0],[30,0]]},
         "properties": {"highway": "footway"}}
      ]})";
    ParseReport report;
    const LabeledNetwork net = parse_geojson_network(text, {}, &report);
    CHECK_FALSE(net.labels.type_mask[0]);
    CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("tag map overrides reclassify highway values") {
    TagMap tags;
    tags.primary.push_back("footway");
    const std::string text = R"({
      "type": "FeatureCollection",
      "coordinate_system": "local_meters",
      "features": [
        {"type": "Feature",
         "geometry": {"type": "LineString", "coordinates": [[0,0],[30,0]]},
         "properties": {"highway": "footway"}}
      ]})";
    const LabeledNetwork net = parse_geojson_network(text, tags);
    CHECK(net.labels.type_mask[0]);
    CHECK(net.labels.types[0] == static_cast<int>(RoadType::Primary));
}

// ---------------------------------------------------------------------------
// OSM XML
// ---------------------------------------------------------------------------

namespace {

const char* kOsmThreeNodeWay = R"(<?xml version="1.0"?>
<osm>
  <node id="1" lat="47.6000" lon="-122.3300"/>
  <node id="2" lat="47.6002" lon="-122.3300"/>
  <node id="3" lat="47.6004" lon="-122.3300"/>
  <way id="10">
    <nd ref="1"/><nd ref="2"/><nd ref="3"/>
    <tag k="highway" v="residential"/>
    <tag k="lanes" v="2"/>
  </way>
</osm>)";

}  // namespace

TEST_CASE("a three-node residential way parses into a labeled path") {
    const LabeledNetwork net = parse_osm_xml(kOsmThreeNodeWay);
    CHECK(net.graph.vertex_count() == 3);
    CHECK(net.graph.edge_count() == 2);
    REQUIRE(net.projection.has_value());
    for (int v = 0; v < 3; ++v) {
        CHECK(net.labels.lanes[v] == 2);
        CHECK(net.labels.types[v] == static_cast<int>(RoadType::Residential));
    }
    // ~22 m node spacing after projection
    CHECK(net.graph.edge_length(0, 1) == doctest::Approx(22.2).epsilon(0.05));
}

TEST_CASE("a way referencing a missing node names the way and the node") {
    const std::string text = R"(<osm>
      <node id="1" lat="47.0" lon="-122.0"/>
      <way id="77"><nd ref="1"/><nd ref="99"/><tag k="highway" v="primary"/></way>
    </osm>)";
    try {
        parse_osm_xml(text);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("way 77") != std::string::npos);
        CHECK(msg.find("node 99") != std::string::npos);
    }
}

TEST_CASE("ways sharing a node become a junction") {
    const std::string text = R"(<osm>
      <node id="1" lat="47.0000" lon="-122.0000"/>
      <node id="2" lat="47.0004" lon="-122.0000"/>
      <node id="3" lat="47.0008" lon="-122.0000"/>
      <node id="4" lat="47.0004" lon="-122.0006"/>
      <node id="5" lat="47.0004" lon="-122.0012"/>
      <way id="1"><nd ref="1"/><nd ref="2"/><nd ref="3"/><tag k="highway" v="primary"/></way>
      <way id="2"><nd ref="4"/><nd ref="2"/><nd ref="5"/><tag k="highway" v="residential"/></way>
    </osm>)";
    const LabeledNetwork net = parse_osm_xml(text);
    CHECK(net.graph.vertex_count() == 5);
    int max_degree = 0;
    for (int v = 0; v < net.graph.vertex_count(); ++v)
        max_degree = std::max(max_degree, static_cast<int>(net.graph.neighbors(v).size()));
    CHECK(max_degree == 4);
}

TEST_CASE("ways without a highway tag are ignored") {
    const std::string text = R"(<osm>
      <node id="1" lat="47.0" lon="-122.0"/>
      <node id="2" lat="47.001" lon="-122.0"/>
      <way id="5"><nd ref="1"/><nd ref="2"/><tag k="waterway" v="river"/></way>
    </osm>)";
    const LabeledNetwork net = parse_osm_xml(text);
    CHECK(net.graph.vertex_count() == 0);
}

// ---------------------------------------------------------------------------
// Round trips and projection
// ---------------------------------------------------------------------------

TEST_CASE("parse -> densify -> serialize -> parse preserves adjacency and labels") {
    const LabeledNetwork parsed = parse_geojson_network(kSingleLine);
    LabeledNetwork dense;
    dense.graph = densify(parsed.graph, 20.0);
    dense.labels.resize(dense.graph.vertex_count());
    for (int v = 0; v < parsed.labels.size(); ++v) {
        dense.labels.lanes[v] = parsed.labels.lanes[v];
        dense.labels.lane_mask[v] = parsed.labels.lane_mask[v];
        dense.labels.types[v] = parsed.labels.types[v];
        dense.labels.type_mask[v] = parsed.labels.type_mask[v];
    }

    const std::string text = network_to_geojson(dense);
    const LabeledNetwork reparsed = parse_geojson_network(text);
    REQUIRE(reparsed.graph.vertex_count() == dense.graph.vertex_count());
    CHECK(reparsed.graph.adjacency() == dense.graph.adjacency());
    CHECK(reparsed.labels.lanes == dense.labels.lanes);
    CHECK(reparsed.labels.lane_mask == dense.labels.lane_mask);
    CHECK(reparsed.labels.types == dense.labels.types);
    CHECK(reparsed.labels.type_mask == dense.labels.type_mask);
    for (int v = 0; v < dense.graph.vertex_count(); ++v)
        CHECK(distance(reparsed.graph.position(v), dense.graph.position(v)) < 1e-9);
}

TEST_CASE("osm networks survive the serialize/parse round trip") {
    const LabeledNetwork net = parse_osm_xml(kOsmThreeNodeWay);
    const LabeledNetwork reparsed = parse_geojson_network(network_to_geojson(net));
    REQUIRE(reparsed.graph.vertex_count() == net.graph.vertex_count());
    CHECK(reparsed.graph.adjacency() == net.graph.adjacency());
    CHECK(reparsed.labels.lanes == net.labels.lanes);
    for (int v = 0; v < net.graph.vertex_count(); ++v)
        CHECK(distance(reparsed.graph.position(v), net.graph.position(v)) < 1e-6);
}

TEST_CASE("the projection inverts within 1e-6 relative error at city scale") {
    const Projection proj{-122.33, 47.60};
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dx(-2500.0, 2500.0);
    for (int i = 0; i < 200; ++i) {
        const GeoPoint p{dx(rng), dx(rng)};
        const auto [lon, lat] = proj.to_lonlat(p);
        const GeoPoint back = proj.to_planar(lon, lat);
        CHECK(std::fabs(back.x - p.x) <= 1e-6 * std::max(1.0, std::fabs(p.x)));
        CHECK(std::fabs(back.y - p.y) <= 1e-6 * std::max(1.0, std::fabs(p.y)));
    }
}

TEST_CASE("prediction files carry argmax labels, probabilities, and truth") {
    LabeledNetwork net;
    net.graph.add_vertex({0, 0});
    net.graph.add_vertex({20, 0});
    net.graph.add_edge(0, 1);
    net.labels.resize(2);
    net.labels.lanes = {3, 2};
    net.labels.lane_mask = {true, false};
    net.labels.types = {1, 0};
    net.labels.type_mask = {true, true};

    PredictionSet preds;
    preds.lane_probs = Tensor({2, 6}, {0.1, 0.5, 0.1, 0.1, 0.1, 0.1,  //
                                       0.05, 0.05, 0.05, 0.05, 0.75, 0.05});
    preds.type_probs = Tensor({2, 2}, {0.9, 0.1, 0.25, 0.75});

    const std::string text = predictions_to_geojson(net, preds);
    CHECK(text.find("\"lane_pred\": 2") != std::string::npos);
    CHECK(text.find("\"lane_pred\": 5") != std::string::npos);
    CHECK(text.find("\"lane_true\": 3") != std::string::npos);
    CHECK(text.find("\"type_pred\": \"residential\"") != std::string::npos);
    CHECK(text.find("\"type_pred\": \"primary\"") != std::string::npos);
    // two point features, probabilities present
    CHECK(text.find("lane_probs") != std::string::npos);
}
