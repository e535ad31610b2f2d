#pragma once

#include <optional>
#include <string>
#include <vector>

#include "roadtagger/predictions.hpp"
#include "roadtagger/road_graph.hpp"

namespace roadtagger {

enum class RoadType { Residential = 0, Primary = 1 };

// Per-vertex ground-truth labels with per-attribute masks. Masked entries
// hold a valid placeholder but must never be read.
struct LabelSet {
    std::vector<int> lanes;       // 1..6
    std::vector<bool> lane_mask;  // true when labeled
    std::vector<int> types;       // 0 residential, 1 primary
    std::vector<bool> type_mask;

    int size() const { return static_cast<int>(lanes.size()); }
    void resize(int n);
    void append(const LabelSet& other);
};

// Equirectangular projection about a fixed origin; adequate below ~5 km
// extents and exactly invertible.
struct Projection {
    double lon0 = 0.0, lat0 = 0.0;

    GeoPoint to_planar(double lon, double lat) const;
    std::pair<double, double> to_lonlat(const GeoPoint& p) const;
};

struct LabeledNetwork {
    RoadGraph graph;
    LabelSet labels;
    std::optional<Projection> projection;  // set when input was geographic
};

// OSM highway-value classification; overridable from a JSON config file
// ({"residential": [...], "primary": [...]}).
struct TagMap {
    std::vector<std::string> residential = {"residential", "living_street", "unclassified"};
    std::vector<std::string> primary = {"primary", "secondary", "trunk", "motorway", "tertiary"};

    std::optional<RoadType> classify(const std::string& highway) const;
    static TagMap from_json_file(const std::string& path);
};

struct ParseReport {
    int skipped_features = 0;
    std::vector<std::string> warnings;
};

// Feature collection of LineStrings with optional `lanes` / `highway`
// properties. Shared endpoints merge within 0.01 m. Files written by
// write_network_geojson carry a format marker and reconstruct exactly.
LabeledNetwork parse_geojson_network(const std::string& text, const TagMap& tags = {},
                                     ParseReport* report = nullptr);

// <node>/<way> subset of OSM XML; ways without a highway tag are ignored;
// lon/lat projected about the bounding-box centroid.
LabeledNetwork parse_osm_xml(const std::string& text, const TagMap& tags = {},
                             ParseReport* report = nullptr);

std::string network_to_geojson(const LabeledNetwork& network);
void write_network_geojson(const LabeledNetwork& network, const std::string& path);

// Point feature per vertex: argmax labels, per-class probabilities, and
// ground truth where unmasked.
std::string predictions_to_geojson(const LabeledNetwork& network, const PredictionSet& predictions);
void write_predictions(const LabeledNetwork& network, const PredictionSet& predictions,
                       const std::string& path);

// Atomic file write (temp + rename).
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace roadtagger
