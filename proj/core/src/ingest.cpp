#include "roadtagger/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "roadtagger/errors.hpp"

namespace roadtagger {

using nlohmann::json;

namespace {

constexpr double kEarthRadius = 6378137.0;     // meters
constexpr double kMergeTolerance = 0.01;       // meters
constexpr const char* kNetworkFormat = "roadtagger-network-v1";

int line_of_offset(const std::string& text, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string(what) + " parse error at line " +
                         std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }
}

// Merges positions within kMergeTolerance using a quantized hash grid.
class VertexMerger {
public:
    int intern(RoadGraph& graph, GeoPoint p) {
        const long long cx = static_cast<long long>(std::floor(p.x / kMergeTolerance));
        const long long cy = static_cast<long long>(std::floor(p.y / kMergeTolerance));
        for (long long dx = -1; dx <= 1; ++dx) {
            for (long long dy = -1; dy <= 1; ++dy) {
                auto it = cells_.find(key(cx + dx, cy + dy));
                if (it == cells_.end()) continue;
                for (int v : it->second)
                    if (distance(graph.position(v), p) <= kMergeTolerance) return v;
            }
        }
        const int v = graph.add_vertex(p);
        cells_[key(cx, cy)].push_back(v);
        return v;
    }

private:
    static std::uint64_t key(long long cx, long long cy) {
        return static_cast<std::uint64_t>(cx) * 0x9e3779b97f4a7c15ULL ^
               static_cast<std::uint64_t>(cy);
    }
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

void set_lane_label(LabelSet& labels, int v, int lanes, ParseReport* report) {
    if (labels.lane_mask[v]) return;
    if (lanes < 1 || lanes > 6) {
        const int clamped = std::clamp(lanes, 1, 6);
        if (report)
            report->warnings.push_back("lanes=" + std::to_string(lanes) + " clamped to " +
                                       std::to_string(clamped));
        lanes = clamped;
    }
    labels.lanes[v] = lanes;
    labels.lane_mask[v] = true;
}

void set_type_label(LabelSet& labels, int v, RoadType type) {
    if (labels.type_mask[v]) return;
    labels.types[v] = static_cast<int>(type);
    labels.type_mask[v] = true;
}

std::string type_name(int type) { return type == 1 ? "primary" : "residential"; }

std::optional<RoadType> type_from_name(const std::string& name) {
    if (name == "residential") return RoadType::Residential;
    if (name == "primary") return RoadType::Primary;
    return std::nullopt;
}

}  // namespace

void LabelSet::resize(int n) {
    lanes.assign(n, 1);
    lane_mask.assign(n, false);
    types.assign(n, 0);
    type_mask.assign(n, false);
}

void LabelSet::append(const LabelSet& other) {
    lanes.insert(lanes.end(), other.lanes.begin(), other.lanes.end());
    lane_mask.insert(lane_mask.end(), other.lane_mask.begin(), other.lane_mask.end());
    types.insert(types.end(), other.types.begin(), other.types.end());
    type_mask.insert(type_mask.end(), other.type_mask.begin(), other.type_mask.end());
}

GeoPoint Projection::to_planar(double lon, double lat) const {
    const double x = kEarthRadius * deg_to_rad(lon - lon0) * std::cos(deg_to_rad(lat0));
    const double y = kEarthRadius * deg_to_rad(lat - lat0);
    return {x, y};
}

std::pair<double, double> Projection::to_lonlat(const GeoPoint& p) const {
    const double lon = lon0 + rad_to_deg(p.x / (kEarthRadius * std::cos(deg_to_rad(lat0))));
    const double lat = lat0 + rad_to_deg(p.y / kEarthRadius);
    return {lon, lat};
}

std::optional<RoadType> TagMap::classify(const std::string& highway) const {
    if (std::find(residential.begin(), residential.end(), highway) != residential.end())
        return RoadType::Residential;
    if (std::find(primary.begin(), primary.end(), highway) != primary.end())
        return RoadType::Primary;
    return std::nullopt;
}

TagMap TagMap::from_json_file(const std::string& path) {
    const json j = parse_json(read_file(path), "tag map");
    TagMap map;
    if (j.contains("residential")) map.residential = j.at("residential").get<std::vector<std::string>>();
    if (j.contains("primary")) map.primary = j.at("primary").get<std::vector<std::string>>();
    return map;
}

namespace {

// Exact reconstruction of files produced by network_to_geojson.
LabeledNetwork parse_network_format(const json& doc) {
    LabeledNetwork net;
    if (doc.contains("projection")) {
        Projection proj;
        proj.lon0 = doc.at("projection").at("lon0").get<double>();
        proj.lat0 = doc.at("projection").at("lat0").get<double>();
        net.projection = proj;
    }
    const auto& features = doc.at("features");

    // vertices first, in id order
    std::vector<const json*> points;
    for (const auto& f : features)
        if (f.at("geometry").at("type") == "Point") points.push_back(&f);
    net.labels.resize(static_cast<int>(points.size()));
    for (const auto* f : points) {
        const auto& props = f->at("properties");
        const int id = props.at("vertex").get<int>();
        if (id < 0 || id >= static_cast<int>(points.size()))
            throw DataError("network file: vertex id " + std::to_string(id) + " out of range");
        const auto& coords = f->at("geometry").at("coordinates");
        GeoPoint p{coords.at(0).get<double>(), coords.at(1).get<double>()};
        if (net.projection) p = net.projection->to_planar(p.x, p.y);
        const int v = net.graph.add_vertex(p);
        if (v != id) throw DataError("network file: vertex ids must be dense and ordered");
        if (props.contains("lanes")) {
            net.labels.lanes[v] = props.at("lanes").get<int>();
            net.labels.lane_mask[v] = true;
        }
        if (props.contains("road_type")) {
            const auto t = type_from_name(props.at("road_type").get<std::string>());
            if (!t) throw DataError("network file: unknown road_type");
            set_type_label(net.labels, v, *t);
        }
    }
    for (const auto& f : features) {
        if (f.at("geometry").at("type") != "LineString") continue;
        const auto& props = f.at("properties");
        const auto& edge = props.at("edge");
        const std::int64_t way = props.contains("way") ? props.at("way").get<std::int64_t>() : -1;
        net.graph.add_edge(edge.at(0).get<int>(), edge.at(1).get<int>(), way);
    }
    return net;
}

}  // namespace

LabeledNetwork parse_geojson_network(const std::string& text, const TagMap& tags,
                                     ParseReport* report) {
    const json doc = parse_json(text, "GeoJSON");
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection")
        throw ParseError("GeoJSON: expected a FeatureCollection");
    if (doc.value("format", "") == kNetworkFormat) return parse_network_format(doc);

    const bool local = doc.value("coordinate_system", "") == "local_meters";
    std::optional<Projection> projection;
    if (!local) {
        // bounding-box centroid of all LineString coordinates
        double lon_min = 1e18, lon_max = -1e18, lat_min = 1e18, lat_max = -1e18;
        for (const auto& f : doc.at("features")) {
            if (!f.contains("geometry") || f.at("geometry").value("type", "") != "LineString")
                continue;
            for (const auto& c : f.at("geometry").at("coordinates")) {
                lon_min = std::min(lon_min, c.at(0).get<double>());
                lon_max = std::max(lon_max, c.at(0).get<double>());
                lat_min = std::min(lat_min, c.at(1).get<double>());
                lat_max = std::max(lat_max, c.at(1).get<double>());
            }
        }
        if (lon_min <= lon_max)
            projection = Projection{(lon_min + lon_max) / 2.0, (lat_min + lat_max) / 2.0};
    }

    LabeledNetwork net;
    net.projection = projection;
    VertexMerger merger;
    std::vector<std::tuple<int, std::optional<int>, std::optional<RoadType>>> vertex_labels;
    std::int64_t next_way = 0;

    for (const auto& f : doc.at("features")) {
        if (!f.is_object() || !f.contains("geometry") || f.at("geometry").is_null() ||
            f.at("geometry").value("type", "") != "LineString") {
            if (report) {
                ++report->skipped_features;
                report->warnings.push_back("skipped non-LineString feature");
            }
            continue;
        }
        std::optional<int> lanes;
        std::optional<RoadType> type;
        if (f.contains("properties") && f.at("properties").is_object()) {
            const auto& props = f.at("properties");
            if (props.contains("lanes") && props.at("lanes").is_number())
                lanes = props.at("lanes").get<int>();
            if (props.contains("highway") && props.at("highway").is_string()) {
                type = tags.classify(props.at("highway").get<std::string>());
                if (!type && report)
                    report->warnings.push_back("unmapped highway value '" +
                                               props.at("highway").get<std::string>() + "'");
            }
        }
        const std::int64_t way = next_way++;
        int prev = -1;
        for (const auto& c : f.at("geometry").at("coordinates")) {
            GeoPoint p{c.at(0).get<double>(), c.at(1).get<double>()};
            if (projection) p = projection->to_planar(p.x, p.y);
            const int v = merger.intern(net.graph, p);
            vertex_labels.emplace_back(v, lanes, type);
            if (prev >= 0 && prev != v) net.graph.add_edge(prev, v, way);
            prev = v;
        }
    }

    net.labels.resize(net.graph.vertex_count());
    for (const auto& [v, lanes, type] : vertex_labels) {
        if (lanes) set_lane_label(net.labels, v, *lanes, report);
        if (type) set_type_label(net.labels, v, *type);
    }
    return net;
}

// ---------------------------------------------------------------------------
// OSM XML
// ---------------------------------------------------------------------------

namespace {

std::string xml_unescape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out += s[i];
            continue;
        }
        const auto end = s.find(';', i);
        const std::string ent = end == std::string::npos ? "" : s.substr(i, end - i + 1);
        if (ent == "&amp;") out += '&';
        else if (ent == "&lt;") out += '<';
        else if (ent == "&gt;") out += '>';
        else if (ent == "&quot;") out += '"';
        else if (ent == "&apos;") out += '\'';
        else { out += s[i]; continue; }
        i = end;
    }
    return out;
}

struct XmlTag {
    std::string name;
    std::unordered_map<std::string, std::string> attrs;
    bool closing = false;      // </name>
    bool self_closing = false; // <name ... />
};

// Minimal scanner for the <node>/<way>/<nd>/<tag> subset.
class XmlScanner {
public:
    explicit XmlScanner(const std::string& text) : text_(text) {}

    std::optional<XmlTag> next() {
        while (true) {
            pos_ = text_.find('<', pos_);
            if (pos_ == std::string::npos) return std::nullopt;
            if (text_.compare(pos_, 4, "<!--") == 0) {
                pos_ = text_.find("-->", pos_);
                if (pos_ == std::string::npos) return std::nullopt;
                pos_ += 3;
                continue;
            }
            if (pos_ + 1 < text_.size() && (text_[pos_ + 1] == '?' || text_[pos_ + 1] == '!')) {
                pos_ = text_.find('>', pos_);
                if (pos_ == std::string::npos) return std::nullopt;
                ++pos_;
                continue;
            }
            break;
        }
        const auto end = text_.find('>', pos_);
        if (end == std::string::npos) throw ParseError("OSM XML: unterminated tag");
        std::string body = text_.substr(pos_ + 1, end - pos_ - 1);
        pos_ = end + 1;

        XmlTag tag;
        if (!body.empty() && body.front() == '/') {
            tag.closing = true;
            body.erase(body.begin());
        }
        if (!body.empty() && body.back() == '/') {
            tag.self_closing = true;
            body.pop_back();
        }
        std::size_t i = 0;
        while (i < body.size() && !isspace(static_cast<unsigned char>(body[i]))) ++i;
        tag.name = body.substr(0, i);
        while (i < body.size()) {
            while (i < body.size() && isspace(static_cast<unsigned char>(body[i]))) ++i;
            const auto eq = body.find('=', i);
            if (eq == std::string::npos) break;
            const std::string key = body.substr(i, eq - i);
            const auto q0 = body.find_first_of("\"'", eq);
            if (q0 == std::string::npos) throw ParseError("OSM XML: unquoted attribute " + key);
            const auto q1 = body.find(body[q0], q0 + 1);
            if (q1 == std::string::npos) throw ParseError("OSM XML: unterminated attribute " + key);
            tag.attrs[key] = xml_unescape(body.substr(q0 + 1, q1 - q0 - 1));
            i = q1 + 1;
        }
        return tag;
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;
};

}  // namespace

LabeledNetwork parse_osm_xml(const std::string& text, const TagMap& tags, ParseReport* report) {
    struct OsmWay {
        std::string id;
        std::vector<std::string> refs;
        std::unordered_map<std::string, std::string> way_tags;
    };
    std::unordered_map<std::string, std::pair<double, double>> nodes;  // id -> lon/lat
    std::vector<OsmWay> ways;

    XmlScanner scanner(text);
    OsmWay* open_way = nullptr;
    while (auto tag = scanner.next()) {
        if (tag->closing) {
            if (tag->name == "way") open_way = nullptr;
            continue;
        }
        if (tag->name == "node") {
            const auto id = tag->attrs.find("id");
            const auto lat = tag->attrs.find("lat");
            const auto lon = tag->attrs.find("lon");
            if (id == tag->attrs.end() || lat == tag->attrs.end() || lon == tag->attrs.end())
                throw ParseError("OSM XML: node missing id/lat/lon");
            nodes[id->second] = {std::stod(lon->second), std::stod(lat->second)};
        } else if (tag->name == "way") {
            ways.push_back({tag->attrs.count("id") ? tag->attrs.at("id") : "?", {}, {}});
            open_way = tag->self_closing ? nullptr : &ways.back();
        } else if (tag->name == "nd" && open_way) {
            if (!tag->attrs.count("ref")) throw ParseError("OSM XML: nd without ref");
            open_way->refs.push_back(tag->attrs.at("ref"));
        } else if (tag->name == "tag" && open_way) {
            if (tag->attrs.count("k") && tag->attrs.count("v"))
                open_way->way_tags[tag->attrs.at("k")] = tag->attrs.at("v");
        }
    }

    // roads only
    std::vector<const OsmWay*> roads;
    for (const auto& w : ways)
        if (w.way_tags.count("highway")) roads.push_back(&w);

    // projection about the bbox centroid of the referenced nodes
    double lon_min = 1e18, lon_max = -1e18, lat_min = 1e18, lat_max = -1e18;
    for (const auto* w : roads) {
        for (const auto& ref : w->refs) {
            auto it = nodes.find(ref);
            if (it == nodes.end())
                throw DataError("way " + w->id + " references missing node " + ref);
            lon_min = std::min(lon_min, it->second.first);
            lon_max = std::max(lon_max, it->second.first);
            lat_min = std::min(lat_min, it->second.second);
            lat_max = std::max(lat_max, it->second.second);
        }
    }

    LabeledNetwork net;
    if (roads.empty()) {
        net.labels.resize(0);
        return net;
    }
    const Projection projection{(lon_min + lon_max) / 2.0, (lat_min + lat_max) / 2.0};
    net.projection = projection;

    std::unordered_map<std::string, int> vertex_of;
    std::vector<std::tuple<int, std::optional<int>, std::optional<RoadType>>> vertex_labels;
    std::int64_t way_index = 0;
    for (const auto* w : roads) {
        std::optional<int> lanes;
        std::optional<RoadType> type = tags.classify(w->way_tags.at("highway"));
        if (!type && report)
            report->warnings.push_back("way " + w->id + ": unmapped highway value '" +
                                       w->way_tags.at("highway") + "'");
        if (auto it = w->way_tags.find("lanes"); it != w->way_tags.end()) {
            try {
                lanes = std::stoi(it->second);
            } catch (const std::exception&) {
                if (report)
                    report->warnings.push_back("way " + w->id + ": unparsable lanes '" +
                                               it->second + "'");
            }
        }
        const std::int64_t way_id = way_index++;
        int prev = -1;
        for (const auto& ref : w->refs) {
            int v;
            auto it = vertex_of.find(ref);
            if (it != vertex_of.end()) {
                v = it->second;
            } else {
                const auto& [lon, lat] = nodes.at(ref);
                v = net.graph.add_vertex(projection.to_planar(lon, lat));
                vertex_of.emplace(ref, v);
            }
            vertex_labels.emplace_back(v, lanes, type);
            if (prev >= 0 && prev != v) net.graph.add_edge(prev, v, way_id);
            prev = v;
        }
    }

    net.labels.resize(net.graph.vertex_count());
    for (const auto& [v, lanes, type] : vertex_labels) {
        if (lanes) set_lane_label(net.labels, v, *lanes, report);
        if (type) set_type_label(net.labels, v, *type);
    }
    return net;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string network_to_geojson(const LabeledNetwork& network) {
    json features = json::array();
    for (int v = 0; v < network.graph.vertex_count(); ++v) {
        json coords;
        if (network.projection) {
            const auto [lon, lat] = network.projection->to_lonlat(network.graph.position(v));
            coords = {lon, lat};
        } else {
            coords = {network.graph.position(v).x, network.graph.position(v).y};
        }
        json props{{"vertex", v}};
        if (network.labels.lane_mask[v]) props["lanes"] = network.labels.lanes[v];
        if (network.labels.type_mask[v]) props["road_type"] = type_name(network.labels.types[v]);
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Point"}, {"coordinates", coords}}},
                            {"properties", props}});
    }
    for (const auto& [u, v] : network.graph.edges()) {
        json a, b;
        if (network.projection) {
            const auto [lon_u, lat_u] = network.projection->to_lonlat(network.graph.position(u));
            const auto [lon_v, lat_v] = network.projection->to_lonlat(network.graph.position(v));
            a = {lon_u, lat_u};
            b = {lon_v, lat_v};
        } else {
            a = {network.graph.position(u).x, network.graph.position(u).y};
            b = {network.graph.position(v).x, network.graph.position(v).y};
        }
        json props{{"edge", {u, v}}};
        if (network.graph.way_of(u, v) >= 0) props["way"] = network.graph.way_of(u, v);
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "LineString"}, {"coordinates", {a, b}}}},
                            {"properties", props}});
    }
    json doc{{"type", "FeatureCollection"}, {"format", kNetworkFormat}, {"features", features}};
    if (network.projection)
        doc["projection"] = {{"lon0", network.projection->lon0}, {"lat0", network.projection->lat0}};
    else
        doc["coordinate_system"] = "local_meters";
    return doc.dump(1);
}

void write_network_geojson(const LabeledNetwork& network, const std::string& path) {
    write_file_atomic(path, network_to_geojson(network));
}

std::string predictions_to_geojson(const LabeledNetwork& network,
                                   const PredictionSet& predictions) {
    if (predictions.vertex_count() != network.graph.vertex_count())
        throw DataError("write_predictions: prediction count " +
                        std::to_string(predictions.vertex_count()) + " != vertex count " +
                        std::to_string(network.graph.vertex_count()));
    const auto lanes = predictions.lane_argmax();
    const auto types = predictions.type_argmax();
    json features = json::array();
    for (int v = 0; v < network.graph.vertex_count(); ++v) {
        json coords;
        if (network.projection) {
            const auto [lon, lat] = network.projection->to_lonlat(network.graph.position(v));
            coords = {lon, lat};
        } else {
            coords = {network.graph.position(v).x, network.graph.position(v).y};
        }
        json lane_probs = json::array(), type_probs = json::array();
        for (int c = 0; c < predictions.lane_probs.cols(); ++c)
            lane_probs.push_back(predictions.lane_probs.at(v, c));
        for (int c = 0; c < predictions.type_probs.cols(); ++c)
            type_probs.push_back(predictions.type_probs.at(v, c));
        json props{{"vertex", v},
                   {"lane_pred", lanes[v]},
                   {"lane_probs", lane_probs},
                   {"type_pred", type_name(types[v])},
                   {"type_probs", type_probs}};
        if (network.labels.lane_mask[v]) props["lane_true"] = network.labels.lanes[v];
        if (network.labels.type_mask[v]) props["type_true"] = type_name(network.labels.types[v]);
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Point"}, {"coordinates", coords}}},
                            {"properties", props}});
    }
    json doc{{"type", "FeatureCollection"},
             {"format", "roadtagger-predictions-v1"},
             {"features", features}};
    if (!network.projection) doc["coordinate_system"] = "local_meters";
    return doc.dump(1);
}

void write_predictions(const LabeledNetwork& network, const PredictionSet& predictions,
                       const std::string& path) {
    write_file_atomic(path, predictions_to_geojson(network, predictions));
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot rename " + tmp + " to " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace roadtagger
