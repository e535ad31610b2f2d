#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "roadtagger/ingest.hpp"
#include "roadtagger/rng.hpp"
#include "roadtagger/tensor.hpp"
#include "roadtagger/training.hpp"

namespace roadtagger {

// Feature channel layout for the synthetic observation vectors. The first
// nine channels are the rendered observation, the rest is noise.
namespace feature_channel {
inline constexpr int kMarkingCount = 0;  // visible lane markings / 6
inline constexpr int kRoadWidth = 1;     // meters / 30
inline constexpr int kLeftMark = 2;      // marking visible flags
inline constexpr int kRightMark = 3;
inline constexpr int kOccNone = 4;  // occluder one-hot
inline constexpr int kOccTree = 5;
inline constexpr int kOccBuilding = 6;
inline constexpr int kOccOverpass = 7;
inline constexpr int kSurfaceCue = 8;  // residential 0.25 / primary 0.75
inline constexpr int kNoiseStart = 9;
}  // namespace feature_channel

enum class Topology {
    StraightCorridor,
    PlusIntersection,
    ParallelPair,
    OverpassCrossing,
    CityGrid,
};

enum class DisruptionKind {
    RemoveMarkings,
    AlternateSideOcclusion,
    TreeOcclusion,
    BuildingOcclusion,
    OverpassOcclusion,
    LaneChangeUnderOcclusion,
};

std::string to_string(DisruptionKind kind);
DisruptionKind disruption_kind_from_string(const std::string& name);

// Lane count switches to `lanes` from `from_fraction` of the road onward.
struct LaneStep {
    double from_fraction = 0.0;
    int lanes = 2;
};

struct TypeStep {
    double from_fraction = 0.0;
    RoadType type = RoadType::Residential;
};

struct RoadSpec {
    double length = 900.0;
    std::vector<LaneStep> lane_profile = {{0.0, 2}};
    RoadType type = RoadType::Residential;
    std::vector<TypeStep> type_profile;  // overrides `type` when non-empty
};

struct DisruptionSpan {
    DisruptionKind kind = DisruptionKind::TreeOcclusion;
    int chain = 0;   // chain index in the generated world
    int start = 0;   // vertex offset within the chain
    int length = 1;  // vertices
    int to_lanes = 0;                       // LaneChangeUnderOcclusion target
    int cover_lanes = 2;                    // OverpassOcclusion upper-road lanes
    RoadType cover_type = RoadType::Primary;  // and its type
};

struct ScenarioSpec {
    Topology topology = Topology::StraightCorridor;
    std::vector<RoadSpec> roads;  // corridor: 1, intersection/pair/overpass: 2
    double spacing = 20.0;
    double pair_gap = 15.0;      // parallel pair separation
    int grid_rows = 3, grid_cols = 3;
    double grid_block = 200.0;
    std::vector<DisruptionSpan> disruptions;
    std::uint64_t rng_seed = 0;
    double noise_sigma = 0.05;
    int feature_dim = 16;
};

struct World {
    std::string name;
    LabeledNetwork network;
    Tensor features;  // V x feature_dim
    std::vector<RoadChain> chains;
    std::vector<bool> occluded;      // observation carries no label information
    std::vector<bool> disrupted;     // any disruption touches the vertex
    std::vector<std::string> kinds;  // per-vertex disruption name or "none"
    std::map<std::string, double> annotations;
};

// Builds the topology, densifies at spec.spacing, labels every vertex from
// the road profiles, renders observations, then applies the disruptions.
// Labels always reflect ground truth; disruptions corrupt observations only
// (except LaneChangeUnderOcclusion, which moves a label step inside its
// occluded span by design).
World generate_world(const ScenarioSpec& spec);

// Applies one disruption span in place. Spans must stay within a single
// chain and may not overlap a previously disrupted vertex.
void inject_disruption(World& world, const ScenarioSpec& spec, const DisruptionSpan& span,
                       Rng& rng);

struct ScenarioSuite {
    std::string preset;
    std::vector<World> train;
    std::vector<World> test;
};

// Presets: basic, occlusion_sweep, overpass, long_disruption.
ScenarioSuite scenario_suite(const std::string& preset, std::uint64_t rng_seed);

// Sidecar feature file: one row per vertex with the observation vector and
// the disruption annotations.
std::string features_to_csv(const World& world);
void write_features_csv(const World& world, const std::string& path);

struct FeatureFile {
    Tensor features;
    std::vector<bool> occluded;
    std::vector<bool> disrupted;
    std::vector<std::string> kinds;
};

FeatureFile read_features_csv(const std::string& path);

// Model-ready view of a world.
TrainDataset dataset_from_world(const World& world, const std::vector<std::string>& structures);

}  // namespace roadtagger
