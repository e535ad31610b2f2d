#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "roadtagger/geometry.hpp"

namespace roadtagger {

// Undirected road-network graph over densely indexed vertices.
// Adjacency lists are kept sorted; edges carry an optional source-way id.
class RoadGraph {
public:
    RoadGraph() = default;

    int add_vertex(GeoPoint p);

    // Returns false (and keeps the existing edge) on duplicates.
    // Self loops are rejected.
    bool add_edge(int u, int v, std::int64_t way_id = -1);

    int vertex_count() const { return static_cast<int>(vertices_.size()); }
    int edge_count() const;

    const GeoPoint& position(int v) const { return vertices_.at(v); }
    const std::vector<GeoPoint>& positions() const { return vertices_; }
    const std::vector<int>& neighbors(int v) const { return adjacency_.at(v); }
    const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }

    bool has_edge(int u, int v) const;
    std::int64_t way_of(int u, int v) const;  // -1 when unset

    // Edges as (u, v) with u < v, sorted lexicographically.
    std::vector<std::pair<int, int>> edges() const;

    double edge_length(int u, int v) const { return distance(position(u), position(v)); }

private:
    static std::uint64_t edge_key(int u, int v);

    std::vector<GeoPoint> vertices_;
    std::vector<std::vector<int>> adjacency_;
    std::unordered_map<std::uint64_t, std::int64_t> way_ids_;
};

// Maximal run of edges treated as one logical road. `closed` marks a cycle
// whose implicit last edge connects vertex_sequence.back() to .front().
struct RoadChain {
    std::vector<int> vertex_sequence;
    bool closed = false;

    int length_edges() const {
        const int n = static_cast<int>(vertex_sequence.size());
        return closed ? n : n - 1;
    }
};

// Directed adjacency over the shared vertex set: sources[v] lists the
// vertices whose messages v aggregates (N(v)). Lists are sorted and unique.
struct GraphStructure {
    std::string name;
    std::vector<std::vector<int>> sources;
    bool directed = false;

    int vertex_count() const { return static_cast<int>(sources.size()); }
};

enum class TraversalMode { BFS, DFS };

// Subgraph drawn by BFS/DFS; vertex_ids are global ids in traversal order,
// structures and adjacency are re-indexed to local ids 0..n-1.
struct SubgraphSample {
    std::vector<int> vertex_ids;
    std::vector<GraphStructure> structures;
    std::vector<std::vector<int>> adjacency;  // induced original-graph adjacency
    std::vector<int> loss_vertex_ids;         // global ids, subset of vertex_ids

    int size() const { return static_cast<int>(vertex_ids.size()); }
    std::vector<int> loss_local_indices() const;
};

// Splits every edge longer than `spacing` into equal segments by linear
// interpolation. Original vertices keep their indices and positions.
RoadGraph densify(const RoadGraph& graph, double spacing);

// Partitions the edges into chains. At a junction a chain continues through
// the unused edge minimizing the directional difference, only when that
// difference is below the threshold; ties break toward the lowest vertex
// index. Seeds are consumed in canonical edge order, so the result is a
// deterministic function of the graph.
std::vector<RoadChain> extract_road_chains(const RoadGraph& graph,
                                           double angle_threshold_deg = 60.0);

GraphStructure structure_original(const RoadGraph& graph);

GraphStructure structure_road(int vertex_count, const std::vector<RoadChain>& chains);

// Forward structure aggregates from the chain predecessor, backward from the
// successor; their union equals structure_road.
std::pair<GraphStructure, GraphStructure> structure_road_directional(
    int vertex_count, const std::vector<RoadChain>& chains);

// Links each vertex to its nearest vertex on a different chain when the two
// are close enough and their local chain directions are near parallel or
// antiparallel. Edges are symmetrized.
GraphStructure structure_aux_parallel(const RoadGraph& graph,
                                      const std::vector<RoadChain>& chains,
                                      double max_dist = 30.0,
                                      double max_angle_deg = 30.0);

SubgraphSample sample_subgraph(const RoadGraph& graph,
                               const std::vector<GraphStructure>& structures,
                               int seed_vertex, int n, TraversalMode mode,
                               int loss_count, std::uint64_t rng_seed);

// Directed hop distances from u in the union of the given structures,
// following message flow (edge a->b when a is a source of b). -1 means
// unreachable. Used as the oracle for propagation-locality checks.
std::vector<int> union_structure_distances(const std::vector<GraphStructure>& structures,
                                           int from);

}  // namespace roadtagger
