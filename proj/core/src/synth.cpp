#include "roadtagger/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "roadtagger/errors.hpp"
#include "roadtagger/model.hpp"

namespace roadtagger {

namespace chan = feature_channel;

namespace {

constexpr double kLaneWidthMeters = 3.5;
constexpr double kWidthScale = 30.0;
constexpr double kResidentialCue = 0.25;
constexpr double kPrimaryCue = 0.75;
constexpr double kOccluderCue = 0.5;

double type_cue(RoadType t) { return t == RoadType::Primary ? kPrimaryCue : kResidentialCue; }

struct Way {
    std::vector<GeoPoint> polyline;
    RoadSpec spec;
};

double way_length(const Way& way) {
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < way.polyline.size(); ++i)
        len += distance(way.polyline[i], way.polyline[i + 1]);
    return len;
}

// Fraction along the way of the nearest point on its polyline.
double way_fraction(const Way& way, const GeoPoint& p) {
    double best_d = 1e18, best_arc = 0.0, arc = 0.0;
    for (std::size_t i = 0; i + 1 < way.polyline.size(); ++i) {
        const GeoPoint a = way.polyline[i], b = way.polyline[i + 1];
        const double seg = distance(a, b);
        double t = 0.0;
        if (seg > 0.0) {
            t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (seg * seg);
            t = std::clamp(t, 0.0, 1.0);
        }
        const GeoPoint q{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        const double d = distance(p, q);
        if (d < best_d) {
            best_d = d;
            best_arc = arc + t * seg;
        }
        arc += seg;
    }
    const double total = way_length(way);
    return total > 0.0 ? best_arc / total : 0.0;
}

int lanes_at(const RoadSpec& spec, double fraction) {
    int lanes = spec.lane_profile.empty() ? 2 : spec.lane_profile.front().lanes;
    for (const auto& step : spec.lane_profile)
        if (fraction + 1e-9 >= step.from_fraction) lanes = step.lanes;
    return std::clamp(lanes, 1, 6);
}

RoadType type_at(const RoadSpec& spec, double fraction) {
    RoadType type = spec.type;
    for (const auto& step : spec.type_profile)
        if (fraction + 1e-9 >= step.from_fraction) type = step.type;
    return type;
}

std::vector<Way> build_ways(const ScenarioSpec& spec) {
    auto road = [&](std::size_t i) {
        return i < spec.roads.size() ? spec.roads[i] : RoadSpec{};
    };
    std::vector<Way> ways;
    switch (spec.topology) {
        case Topology::StraightCorridor: {
            const double len = road(0).length;
            ways.push_back({{{0.0, 0.0}, {len, 0.0}}, road(0)});
            break;
        }
        case Topology::PlusIntersection: {
            const double h = road(0).length / 2.0;
            const double v = road(1).length / 2.0;
            ways.push_back({{{-h, 0.0}, {h, 0.0}}, road(0)});
            ways.push_back({{{0.0, -v}, {0.0, v}}, road(1)});
            break;
        }
        case Topology::ParallelPair: {
            const double len = road(0).length;
            ways.push_back({{{0.0, 0.0}, {len, 0.0}}, road(0)});
            ways.push_back({{{0.0, spec.pair_gap}, {road(1).length, spec.pair_gap}}, road(1)});
            break;
        }
        case Topology::OverpassCrossing: {
            const double h = road(0).length / 2.0;
            const double v = road(1).length / 2.0;
            ways.push_back({{{-h, 0.0}, {h, 0.0}}, road(0)});   // lower (target) road
            ways.push_back({{{0.0, -v}, {0.0, v}}, road(1)});   // upper road, no junction
            break;
        }
        case Topology::CityGrid: {
            const double w = (spec.grid_cols - 1) * spec.grid_block;
            const double h = (spec.grid_rows - 1) * spec.grid_block;
            for (int r = 0; r < spec.grid_rows; ++r) {
                RoadSpec rs = road(r % std::max<std::size_t>(spec.roads.size(), 1));
                ways.push_back({{{0.0, r * spec.grid_block}, {w, r * spec.grid_block}}, rs});
            }
            for (int c = 0; c < spec.grid_cols; ++c) {
                RoadSpec rs = road((spec.grid_rows + c) % std::max<std::size_t>(spec.roads.size(), 1));
                ways.push_back({{{c * spec.grid_block, 0.0}, {c * spec.grid_block, h}}, rs});
            }
            break;
        }
    }
    return ways;
}

RoadGraph raw_graph(const std::vector<Way>& ways) {
    RoadGraph g;
    std::map<std::pair<double, double>, int> seen;
    auto intern = [&](const GeoPoint& p) {
        const auto key = std::make_pair(p.x, p.y);
        auto it = seen.find(key);
        if (it != seen.end()) return it->second;
        const int v = g.add_vertex(p);
        seen.emplace(key, v);
        return v;
    };
    for (std::size_t w = 0; w < ways.size(); ++w) {
        int prev = -1;
        for (const auto& p : ways[w].polyline) {
            const int v = intern(p);
            if (prev >= 0 && prev != v) g.add_edge(prev, v, static_cast<std::int64_t>(w));
            prev = v;
        }
    }
    return g;
}

// OverpassCrossing only: the lower road is junction-free against the upper
// road, so the crossing is a shared coordinate, not a shared vertex.
bool is_overpass(const ScenarioSpec& spec) { return spec.topology == Topology::OverpassCrossing; }

// Single-vertex readings barely separate adjacent lane counts; the marking
// count and especially the road width only become reliable when integrated
// along the road, which is the receptive-field gap this benchmark probes.
constexpr double kMarkingNoiseBoost = 1.5;
constexpr double kWidthNoiseBoost = 2.5;

double analog_noise(const ScenarioSpec& spec, int vertex, int channel) {
    double boost = 1.0;
    if (channel == chan::kRoadWidth) boost = kWidthNoiseBoost;
    if (channel == chan::kMarkingCount) boost = kMarkingNoiseBoost;
    return boost * spec.noise_sigma *
           counter_gaussian(hash_combine(spec.rng_seed, 0x6f697365), // noise stream
                            static_cast<std::uint64_t>(vertex) * 64 + channel);
}

void render_clean(World& world, const ScenarioSpec& spec, int v, int lanes, RoadType type) {
    Tensor& f = world.features;
    f.at(v, chan::kMarkingCount) = lanes / 6.0 + analog_noise(spec, v, chan::kMarkingCount);
    f.at(v, chan::kRoadWidth) =
        lanes * kLaneWidthMeters / kWidthScale + analog_noise(spec, v, chan::kRoadWidth);
    f.at(v, chan::kLeftMark) = 1.0;
    f.at(v, chan::kRightMark) = 1.0;
    f.at(v, chan::kOccNone) = 1.0;
    f.at(v, chan::kOccTree) = 0.0;
    f.at(v, chan::kOccBuilding) = 0.0;
    f.at(v, chan::kOccOverpass) = 0.0;
    f.at(v, chan::kSurfaceCue) = type_cue(type) + analog_noise(spec, v, chan::kSurfaceCue);
    for (int c = chan::kNoiseStart; c < spec.feature_dim; ++c)
        f.at(v, c) = analog_noise(spec, v, c);
}

}  // namespace

std::string to_string(DisruptionKind kind) {
    switch (kind) {
        case DisruptionKind::RemoveMarkings: return "remove_markings";
        case DisruptionKind::AlternateSideOcclusion: return "alternate_side_occlusion";
        case DisruptionKind::TreeOcclusion: return "tree_occlusion";
        case DisruptionKind::BuildingOcclusion: return "building_occlusion";
        case DisruptionKind::OverpassOcclusion: return "overpass_occlusion";
        case DisruptionKind::LaneChangeUnderOcclusion: return "lane_change_under_occlusion";
    }
    return "unknown";
}

DisruptionKind disruption_kind_from_string(const std::string& name) {
    if (name == "remove_markings") return DisruptionKind::RemoveMarkings;
    if (name == "alternate_side_occlusion") return DisruptionKind::AlternateSideOcclusion;
    if (name == "tree_occlusion") return DisruptionKind::TreeOcclusion;
    if (name == "building_occlusion") return DisruptionKind::BuildingOcclusion;
    if (name == "overpass_occlusion") return DisruptionKind::OverpassOcclusion;
    if (name == "lane_change_under_occlusion") return DisruptionKind::LaneChangeUnderOcclusion;
    throw DataError("unknown disruption kind '" + name + "'");
}

void inject_disruption(World& world, const ScenarioSpec& spec, const DisruptionSpan& span,
                       Rng& rng) {
    if (span.chain < 0 || span.chain >= static_cast<int>(world.chains.size()))
        throw DataError("inject_disruption: chain index out of range");
    const auto& seq = world.chains[span.chain].vertex_sequence;
    if (span.start < 0 || span.length < 1 ||
        span.start + span.length > static_cast<int>(seq.size()))
        throw DataError("inject_disruption: span outside chain");

    for (int i = 0; i < span.length; ++i)
        if (world.disrupted[seq[span.start + i]])
            throw DataError("inject_disruption: overlapping disruptions at vertex " +
                            std::to_string(seq[span.start + i]));

    const bool occludes = span.kind == DisruptionKind::TreeOcclusion ||
                          span.kind == DisruptionKind::BuildingOcclusion ||
                          span.kind == DisruptionKind::OverpassOcclusion ||
                          span.kind == DisruptionKind::LaneChangeUnderOcclusion;

    int transition = -1;
    if (span.kind == DisruptionKind::LaneChangeUnderOcclusion) {
        if (span.length < 3)
            throw DataError("inject_disruption: lane change needs a span of >= 3 vertices");
        transition =
            std::uniform_int_distribution<int>(span.start + 1, span.start + span.length - 2)(rng);
        // the step applies from the transition vertex to the end of the chain;
        // vertices outside the occluded span re-render from their new truth
        for (int i = transition; i < static_cast<int>(seq.size()); ++i) {
            const int v = seq[i];
            world.network.labels.lanes[v] = std::clamp(span.to_lanes, 1, 6);
            world.network.labels.lane_mask[v] = true;
            if (!world.disrupted[v] && (i < span.start || i >= span.start + span.length))
                render_clean(world, spec, v, world.network.labels.lanes[v],
                             static_cast<RoadType>(world.network.labels.types[v]));
        }
        world.annotations["lane_change_vertex"] = seq[transition];
    }

    Tensor& f = world.features;
    for (int i = 0; i < span.length; ++i) {
        const int v = seq[span.start + i];
        world.disrupted[v] = true;
        world.occluded[v] = world.occluded[v] || occludes;
        world.kinds[v] = to_string(span.kind);

        switch (span.kind) {
            case DisruptionKind::RemoveMarkings:
                f.at(v, chan::kMarkingCount) = analog_noise(spec, v, chan::kMarkingCount);
                f.at(v, chan::kLeftMark) = 0.0;
                f.at(v, chan::kRightMark) = 0.0;
                break;
            case DisruptionKind::AlternateSideOcclusion:
                if (i % 2 == 0)
                    f.at(v, chan::kLeftMark) = 0.0;
                else
                    f.at(v, chan::kRightMark) = 0.0;
                break;
            case DisruptionKind::TreeOcclusion:
            case DisruptionKind::BuildingOcclusion:
            case DisruptionKind::LaneChangeUnderOcclusion: {
                const bool tree = span.kind != DisruptionKind::BuildingOcclusion;
                f.at(v, chan::kMarkingCount) = analog_noise(spec, v, chan::kMarkingCount);
                f.at(v, chan::kRoadWidth) = analog_noise(spec, v, chan::kRoadWidth);
                f.at(v, chan::kLeftMark) = 0.0;
                f.at(v, chan::kRightMark) = 0.0;
                f.at(v, chan::kOccNone) = 0.0;
                f.at(v, chan::kOccTree) = tree ? 1.0 : 0.0;
                f.at(v, chan::kOccBuilding) = tree ? 0.0 : 1.0;
                f.at(v, chan::kSurfaceCue) = kOccluderCue + analog_noise(spec, v, chan::kSurfaceCue);
                break;
            }
            case DisruptionKind::OverpassOcclusion: {
                // the upper road is what the observation shows
                const int cover = std::clamp(span.cover_lanes, 1, 6);
                f.at(v, chan::kMarkingCount) =
                    cover / 6.0 + analog_noise(spec, v, chan::kMarkingCount);
                f.at(v, chan::kRoadWidth) = cover * kLaneWidthMeters / kWidthScale +
                                            analog_noise(spec, v, chan::kRoadWidth);
                f.at(v, chan::kLeftMark) = 1.0;
                f.at(v, chan::kRightMark) = 1.0;
                f.at(v, chan::kOccNone) = 0.0;
                f.at(v, chan::kOccOverpass) = 1.0;
                f.at(v, chan::kSurfaceCue) =
                    type_cue(span.cover_type) + analog_noise(spec, v, chan::kSurfaceCue);
                break;
            }
        }
    }
}

World generate_world(const ScenarioSpec& spec) {
    if (spec.feature_dim < chan::kNoiseStart + 1)
        throw DataError("generate_world: feature_dim too small for the channel layout");
    if (spec.spacing <= 0.0) throw DataError("generate_world: spacing must be positive");

    const std::vector<Way> ways = build_ways(spec);
    World world;
    world.network.graph = densify(raw_graph(ways), spec.spacing);
    world.chains = extract_road_chains(world.network.graph);

    const int n = world.network.graph.vertex_count();
    world.network.labels.resize(n);
    world.features = Tensor({n, spec.feature_dim});
    world.occluded.assign(n, false);
    world.disrupted.assign(n, false);
    world.kinds.assign(n, "none");

    // label each vertex from its way's profile; junction vertices take the
    // lowest incident way id
    for (int v = 0; v < n; ++v) {
        std::int64_t way = -1;
        for (int u : world.network.graph.neighbors(v)) {
            const std::int64_t w = world.network.graph.way_of(u, v);
            if (w >= 0 && (way < 0 || w < way)) way = w;
        }
        if (way < 0) way = 0;
        const auto& road = ways[static_cast<std::size_t>(way)];
        const double fraction = way_fraction(road, world.network.graph.position(v));
        const int lanes = lanes_at(road.spec, fraction);
        const RoadType type = type_at(road.spec, fraction);
        world.network.labels.lanes[v] = lanes;
        world.network.labels.lane_mask[v] = true;
        world.network.labels.types[v] = static_cast<int>(type);
        world.network.labels.type_mask[v] = true;
        render_clean(world, spec, v, lanes, type);
    }

    std::vector<DisruptionSpan> spans;
    if (is_overpass(spec) && ways.size() >= 2) {
        // occlude the run of lower-road vertices under the upper road
        const RoadSpec upper = ways[1].spec;
        const double half_width =
            lanes_at(upper, 0.5) * kLaneWidthMeters / 2.0 + spec.spacing * 0.26;
        for (std::size_t c = 0; c < world.chains.size(); ++c) {
            const auto& seq = world.chains[c].vertex_sequence;
            int start = -1, len = 0;
            for (std::size_t i = 0; i < seq.size(); ++i) {
                const GeoPoint p = world.network.graph.position(seq[i]);
                const bool under = std::fabs(p.y) < 1e-6 && std::fabs(p.x) <= half_width;
                if (under && len == 0) start = static_cast<int>(i);
                if (under) ++len;
                else if (len > 0) break;
            }
            if (len > 0) {
                DisruptionSpan span;
                span.kind = DisruptionKind::OverpassOcclusion;
                span.chain = static_cast<int>(c);
                span.start = start;
                span.length = len;
                span.cover_lanes = lanes_at(upper, 0.5);
                span.cover_type = upper.type;
                spans.push_back(span);
                break;
            }
        }
    }
    spans.insert(spans.end(), spec.disruptions.begin(), spec.disruptions.end());

    Rng disruption_rng(hash_combine(spec.rng_seed, 0x64697372));
    for (const auto& span : spans) inject_disruption(world, spec, span, disruption_rng);
    return world;
}

// ---------------------------------------------------------------------------
// Scenario suites
// ---------------------------------------------------------------------------

namespace {

int chain_vertices(double length, double spacing) {
    return static_cast<int>(std::ceil(length / spacing - 1e-9)) + 1;
}

// Deterministic round-robin over lane counts and road types so every class
// is equally represented in each suite split; i.i.d. draws leave classes
// missing at this world count. The type pattern has period 4 against the
// lane period of 6, so lane count and road type stay decorrelated.
struct ProfileCycle {
    int lane_index = 0;
    int type_index = 0;

    int lanes() { return 1 + (lane_index++ % 6); }
    RoadType type() {
        return (type_index++ % 4) < 2 ? RoadType::Residential : RoadType::Primary;
    }
};

// Non-overlapping spans with >= 2 clean vertices of margin, greedily placed
// left to right.
std::vector<std::pair<int, int>> place_spans(Rng& rng, int chain_len, int target_vertices,
                                             int min_len, int max_len, int margin) {
    std::vector<std::pair<int, int>> spans;
    int cursor = margin;
    int placed = 0;
    while (placed < target_vertices && cursor + min_len + margin < chain_len) {
        const int len = std::min(
            {std::uniform_int_distribution<int>(min_len, max_len)(rng),
             target_vertices - placed, chain_len - margin - cursor});
        if (len < 1) break;
        spans.emplace_back(cursor, len);
        placed += len;
        cursor += len + margin +
                  std::uniform_int_distribution<int>(0, 3)(rng);  // jitter the gaps
    }
    return spans;
}

World corridor_world(std::uint64_t seed, const std::string& name, double length, int base_lanes,
                     bool lane_change, bool type_change, RoadType type,
                     const std::vector<DisruptionKind>& kinds, int target_disrupted, int min_len,
                     int max_len) {
    Rng rng(hash_combine(seed, 0x776f726c));
    ScenarioSpec spec;
    spec.topology = Topology::StraightCorridor;
    spec.rng_seed = seed;
    RoadSpec road;
    road.length = length;
    road.type = type;
    road.lane_profile = {{0.0, base_lanes}};
    const int n = chain_vertices(length, spec.spacing);

    if (lane_change) {
        // a short genuine widening pocket: real roads gain a lane for a few
        // hundred meters around junctions and bus stops
        const int other = base_lanes == 6 ? 5 : base_lanes + 1;
        road.lane_profile.push_back({0.45, other});
        road.lane_profile.push_back({0.57, base_lanes});
    }
    if (type_change) {
        const RoadType other =
            type == RoadType::Primary ? RoadType::Residential : RoadType::Primary;
        road.type_profile = {{0.0, type}, {0.5, other}};
    }
    spec.roads = {road};

    // keep spans away from the mid-chain label step
    const int mid = n / 2;
    const auto spans = place_spans(rng, n, target_disrupted, min_len, max_len, 2);
    std::size_t kind_index = 0;
    for (const auto& [start, len] : spans) {
        if ((lane_change || type_change) && start <= mid + 4 && start + len >= mid - 4) continue;
        DisruptionSpan span;
        span.kind = kinds[kind_index++ % kinds.size()];
        span.chain = 0;
        span.start = start;
        span.length = len;
        spec.disruptions.push_back(span);
    }
    World world = generate_world(spec);
    world.name = name;
    return world;
}

// Fig-2a-style case: the lane count steps in the middle of a stretch whose
// lane markings are missing, so only the (noisy) width channel carries the
// transition. Post-processing over per-vertex class probabilities cannot
// localize it; propagation over raw evidence can.
World change_under_markings_world(std::uint64_t seed, const std::string& name, int base_lanes,
                                  RoadType type) {
    Rng rng(hash_combine(seed, 0x6d61726b));
    ScenarioSpec spec;
    spec.topology = Topology::StraightCorridor;
    spec.rng_seed = seed;
    RoadSpec road;
    road.length = 900.0;
    road.type = type;
    const int up = base_lanes == 6 ? 5 : base_lanes + 1;
    const int down = base_lanes == 1 ? 2 : base_lanes - 1;
    road.lane_profile = {{0.0, base_lanes}, {1.0 / 3.0, up}, {2.0 / 3.0, down}};
    spec.roads = {road};

    const int n = chain_vertices(road.length, spec.spacing);
    // two unmarked stretches, each hiding one of the profile steps
    for (int region = 0; region < 2; ++region) {
        DisruptionSpan marking;
        marking.kind = DisruptionKind::RemoveMarkings;
        marking.chain = 0;
        marking.start = (region == 0 ? n / 3 : 2 * n / 3) - 5;
        marking.length = 11;
        spec.disruptions.push_back(marking);
    }
    DisruptionSpan extra;
    extra.kind = DisruptionKind::TreeOcclusion;
    extra.chain = 0;
    extra.start = std::uniform_int_distribution<int>(3, n / 3 - 9)(rng);
    extra.length = std::uniform_int_distribution<int>(2, 4)(rng);
    spec.disruptions.push_back(extra);
    World world = generate_world(spec);
    world.name = name;
    world.annotations["change_under_markings"] = 1.0;
    return world;
}

World change_under_occlusion_world(std::uint64_t seed, const std::string& name, int base_lanes,
                                   RoadType type) {
    Rng rng(hash_combine(seed, 0x63686f63));
    ScenarioSpec spec;
    spec.topology = Topology::StraightCorridor;
    spec.rng_seed = seed;
    RoadSpec road;
    road.length = 900.0;
    road.type = type;
    road.lane_profile = {{0.0, base_lanes}};
    spec.roads = {road};

    const int n = chain_vertices(road.length, spec.spacing);
    DisruptionSpan span;
    span.kind = DisruptionKind::LaneChangeUnderOcclusion;
    span.chain = 0;
    span.start = n / 2 - 4;
    span.length = 8;
    span.to_lanes = base_lanes == 6 ? 5 : base_lanes + 1;
    spec.disruptions = {span};
    DisruptionSpan extra;
    extra.kind = DisruptionKind::RemoveMarkings;
    extra.chain = 0;
    extra.start = std::uniform_int_distribution<int>(3, n / 2 - 9)(rng);
    extra.length = std::uniform_int_distribution<int>(3, 5)(rng);
    spec.disruptions.push_back(extra);

    World world = generate_world(spec);
    world.name = name;
    world.annotations["change_under_occlusion"] = 1.0;
    return world;
}

World sweep_world(std::uint64_t seed, const std::string& name, double fraction, int lanes,
                  RoadType type, bool type_change) {
    Rng rng(hash_combine(seed, 0x73776565));
    const double length = 880.0;
    ScenarioSpec spec;
    spec.topology = Topology::StraightCorridor;
    spec.rng_seed = seed;
    RoadSpec road;
    road.length = length;
    road.type = type;
    road.lane_profile = {{0.0, lanes}};
    if (type_change) {
        // a mid-road type transition keeps road type a local property the
        // observation must carry, not something a whole world shares
        const RoadType other =
            type == RoadType::Primary ? RoadType::Residential : RoadType::Primary;
        road.type_profile = {{0.0, type}, {0.5, other}};
    }
    spec.roads = {road};

    const int n = chain_vertices(length, spec.spacing);
    const int target = static_cast<int>(fraction * n);
    const int mid = n / 2;
    // spans stay well inside the T = 8 propagation horizon; the
    // long_disruption preset probes the horizon itself
    const auto spans = place_spans(rng, n, target, 1, 6, 2);
    std::size_t i = 0;
    for (const auto& [start, len] : spans) {
        if (type_change && start <= mid + 1 && start + len >= mid - 1) continue;
        DisruptionSpan span;
        span.kind = (i++ % 2 == 0) ? DisruptionKind::TreeOcclusion
                                   : DisruptionKind::BuildingOcclusion;
        span.chain = 0;
        span.start = start;
        span.length = len;
        spec.disruptions.push_back(span);
    }
    World world = generate_world(spec);
    world.name = name;
    world.annotations["occluded_fraction"] = fraction;
    return world;
}

World long_disruption_world(std::uint64_t seed, const std::string& name, int span_len, int lanes,
                            RoadType type) {
    const double length = 1200.0;
    ScenarioSpec spec;
    spec.topology = Topology::StraightCorridor;
    spec.rng_seed = seed;
    RoadSpec road;
    road.length = length;
    road.type = type;
    road.lane_profile = {{0.0, lanes}};
    spec.roads = {road};

    const int n = chain_vertices(length, spec.spacing);
    DisruptionSpan span;
    span.kind = DisruptionKind::TreeOcclusion;
    span.chain = 0;
    span.start = (n - span_len) / 2;
    span.length = span_len;
    spec.disruptions = {span};

    World world = generate_world(spec);
    world.name = name;
    world.annotations["span"] = span_len;
    return world;
}

World intersection_world(std::uint64_t seed, const std::string& name, int lanes_a, int lanes_b) {
    Rng rng(hash_combine(seed, 0x696e7472));
    ScenarioSpec spec;
    spec.topology = Topology::PlusIntersection;
    spec.rng_seed = seed;
    RoadSpec a, b;
    a.length = 600.0;
    b.length = 600.0;
    a.type = RoadType::Primary;
    b.type = RoadType::Residential;
    a.lane_profile = {{0.0, lanes_a}};
    b.lane_profile = {{0.0, lanes_b}};
    spec.roads = {a, b};

    const int n = chain_vertices(600.0, spec.spacing);
    for (int c = 0; c < 2; ++c) {
        DisruptionSpan span;
        span.kind = c == 0 ? DisruptionKind::TreeOcclusion : DisruptionKind::RemoveMarkings;
        span.chain = c;
        span.start = std::uniform_int_distribution<int>(2, n / 2 - 4)(rng);
        span.length = std::uniform_int_distribution<int>(1, 3)(rng);
        spec.disruptions.push_back(span);
    }
    World world = generate_world(spec);
    world.name = name;
    return world;
}

World pair_world(std::uint64_t seed, const std::string& name, int lanes_a, int lanes_b,
                 RoadType type) {
    Rng rng(hash_combine(seed, 0x70616972));
    ScenarioSpec spec;
    spec.topology = Topology::ParallelPair;
    spec.rng_seed = seed;
    RoadSpec a;
    a.length = 700.0;
    a.type = type;  // a parallel pair shares its road type
    a.lane_profile = {{0.0, lanes_a}};
    RoadSpec b = a;
    b.lane_profile = {{0.0, lanes_b}};
    spec.roads = {a, b};

    const int n = chain_vertices(700.0, spec.spacing);
    DisruptionSpan span;
    span.kind = DisruptionKind::BuildingOcclusion;
    span.chain = 0;
    span.start = std::uniform_int_distribution<int>(2, n - 8)(rng);
    span.length = std::uniform_int_distribution<int>(2, 5)(rng);
    spec.disruptions = {span};

    World world = generate_world(spec);
    world.name = name;
    return world;
}

World overpass_world(std::uint64_t seed, const std::string& name, int lower_lanes,
                     int upper_lanes, RoadType lower_type, RoadType upper_type) {
    ScenarioSpec spec;
    spec.topology = Topology::OverpassCrossing;
    spec.rng_seed = seed;
    RoadSpec lower, upper;
    lower.length = 720.0;
    upper.length = 400.0;
    lower.type = lower_type;
    upper.type = upper_type;
    lower.lane_profile = {{0.0, lower_lanes}};
    upper.lane_profile = {{0.0, upper_lanes}};
    spec.roads = {lower, upper};
    World world = generate_world(spec);
    world.name = name;
    return world;
}

}  // namespace

ScenarioSuite scenario_suite(const std::string& preset, std::uint64_t rng_seed) {
    ScenarioSuite suite;
    suite.preset = preset;
    auto wseed = [&](int role, int index) {
        return hash_combine(hash_combine(rng_seed, static_cast<std::uint64_t>(role)),
                            static_cast<std::uint64_t>(index));
    };
    auto wname = [](const char* role, int index) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s_%03d", role, index);
        return std::string(buf);
    };

    if (preset == "basic") {
        const std::vector<DisruptionKind> kinds = {
            DisruptionKind::TreeOcclusion, DisruptionKind::RemoveMarkings,
            DisruptionKind::BuildingOcclusion, DisruptionKind::AlternateSideOcclusion};
        auto make = [&](int role, int index, const char* rolename, ProfileCycle& cycle) {
            const std::uint64_t s = wseed(role, index);
            const std::string name = wname(rolename, index);
            switch (index % 6) {
                case 0:
                    return corridor_world(s, name, 900.0, cycle.lanes(), false, true,
                                          cycle.type(), kinds, 14, 2, 5);
                case 1:
                    return change_under_markings_world(s, name, cycle.lanes(), cycle.type());
                case 2:
                    return corridor_world(s, name, 900.0, cycle.lanes(), true, false,
                                          cycle.type(), kinds, 14, 2, 5);
                case 3:
                    return change_under_occlusion_world(s, name, cycle.lanes(), cycle.type());
                case 4:
                    return intersection_world(s, name, cycle.lanes(), cycle.lanes());
                default:
                    return pair_world(s, name, cycle.lanes(), cycle.lanes(), cycle.type());
            }
        };
        ProfileCycle train_cycle, test_cycle;
        test_cycle.lane_index = 3;
        test_cycle.type_index = 1;  // offset the test assignments from the train ones
        for (int i = 0; i < 36; ++i) suite.train.push_back(make(1, i, "train", train_cycle));
        for (int i = 0; i < 12; ++i) suite.test.push_back(make(2, i, "test", test_cycle));
    } else if (preset == "occlusion_sweep") {
        const double fractions[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
        ProfileCycle cycle;
        for (int i = 0; i < 36; ++i) {
            const double f = fractions[(i + i / 6) % 6];
            suite.train.push_back(sweep_world(wseed(1, i), wname("train", i), f, cycle.lanes(),
                                              cycle.type(), i % 2 == 0));
        }
        ProfileCycle test_cycle;
        test_cycle.lane_index = 2;
        test_cycle.type_index = 1;
        for (int i = 0; i < 12; ++i) {
            const double f = fractions[(5 * i + 1) % 6];
            suite.test.push_back(sweep_world(wseed(2, i), wname("test", i), f,
                                             test_cycle.lanes(), test_cycle.type(),
                                             i % 2 == 1));
        }
    } else if (preset == "overpass") {
        ProfileCycle cycle;
        for (int i = 0; i < 20; ++i)
            suite.train.push_back(overpass_world(wseed(1, i), wname("train", i), cycle.lanes(),
                                                 cycle.lanes(), cycle.type(), cycle.type()));
        ProfileCycle test_cycle;
        test_cycle.lane_index = 1;
        test_cycle.type_index = 2;
        for (int i = 0; i < 5; ++i)
            suite.test.push_back(overpass_world(wseed(2, i), wname("test", i),
                                                test_cycle.lanes(), test_cycle.lanes(),
                                                test_cycle.type(), test_cycle.type()));
    } else if (preset == "long_disruption") {
        const int train_spans[] = {2, 4, 6, 8};
        const int test_spans[] = {4, 16};  // T/2 and 2T for the default T = 8
        ProfileCycle cycle;
        for (int i = 0; i < 24; ++i)
            suite.train.push_back(long_disruption_world(
                wseed(1, i), wname("train", i), train_spans[i % 4], cycle.lanes(), cycle.type()));
        ProfileCycle test_cycle;
        for (int i = 0; i < 12; ++i)
            suite.test.push_back(long_disruption_world(
                wseed(2, i), wname("test", i), test_spans[i % 2], test_cycle.lanes(),
                test_cycle.type()));
    } else {
        throw DataError("unknown scenario preset '" + preset + "'");
    }
    return suite;
}

// ---------------------------------------------------------------------------
// Feature sidecar files
// ---------------------------------------------------------------------------

std::string features_to_csv(const World& world) {
    std::ostringstream out;
    out << "vertex_id";
    for (int c = 0; c < world.features.cols(); ++c) out << ",f" << c;
    out << ",occluded,disrupted,kind\n";
    char num[40];
    for (int v = 0; v < world.features.rows(); ++v) {
        out << v;
        for (int c = 0; c < world.features.cols(); ++c) {
            std::snprintf(num, sizeof(num), ",%.17g", world.features.at(v, c));
            out << num;
        }
        out << ',' << (world.occluded[v] ? 1 : 0) << ',' << (world.disrupted[v] ? 1 : 0) << ','
            << world.kinds[v] << '\n';
    }
    return out.str();
}

void write_features_csv(const World& world, const std::string& path) {
    write_file_atomic(path, features_to_csv(world));
}

FeatureFile read_features_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("feature file: missing header");

    int columns = 0;
    for (std::size_t i = 0; i < line.size(); ++i)
        if (line[i] == ',') ++columns;
    const int fdim = columns - 3 + 1 - 1;  // vertex_id + f* + occluded + disrupted + kind
    if (fdim < 1) throw ParseError("feature file: bad header '" + line + "'");

    std::vector<double> values;
    FeatureFile out;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (static_cast<int>(cells.size()) != fdim + 4)
            throw ParseError("feature file: row with " + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(fdim + 4));
        for (int c = 0; c < fdim; ++c) values.push_back(std::stod(cells[1 + c]));
        out.occluded.push_back(cells[fdim + 1] == "1");
        out.disrupted.push_back(cells[fdim + 2] == "1");
        out.kinds.push_back(cells[fdim + 3]);
        ++rows;
    }
    out.features = Tensor({rows, fdim}, std::move(values));
    return out;
}

TrainDataset dataset_from_world(const World& world, const std::vector<std::string>& structures) {
    TrainDataset ds;
    ds.name = world.name;
    ds.network = world.network;
    ds.features = world.features;
    ds.structures = derive_structures(world.network.graph, structures);
    ds.occluded = world.occluded;
    return ds;
}

}  // namespace roadtagger
