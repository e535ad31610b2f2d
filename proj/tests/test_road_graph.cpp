#include <doctest.h>

#include <set>

#include "roadtagger/errors.hpp"
#include "roadtagger/road_graph.hpp"
#include "test_helpers.hpp"

using namespace roadtagger;

TEST_CASE("road graph rejects self loops and dedupes edges") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({10, 0});
    CHECK(g.add_edge(0, 1));
    CHECK_FALSE(g.add_edge(1, 0));
    CHECK(g.edge_count() == 1);
    CHECK_THROWS_AS(g.add_edge(0, 0), DataError);
}

TEST_CASE("densify splits a 50 m edge at 20 m spacing into three equal segments") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({50, 0});
    g.add_edge(0, 1);
    const RoadGraph d = densify(g, 20.0);
    CHECK(d.vertex_count() == 4);
    CHECK(d.edge_count() == 3);
    for (const auto& [u, v] : d.edges())
        CHECK(d.edge_length(u, v) == doctest::Approx(50.0 / 3.0).epsilon(1e-12));
    // original endpoints keep their positions
    CHECK(d.position(0).x == 0.0);
    CHECK(d.position(1).x == 50.0);
}

TEST_CASE("densify keeps an exactly-spacing edge unchanged") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({20, 0});
    g.add_edge(0, 1);
    const RoadGraph d = densify(g, 20.0);
    CHECK(d.vertex_count() == 2);
    CHECK(d.edge_count() == 1);
}

TEST_CASE("densify on an L-shaped way yields 11 vertices and 10 edges of 20 m") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({100, 0});
    g.add_vertex({100, 100});
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    const RoadGraph d = densify(g, 20.0);
    CHECK(d.vertex_count() == 11);
    CHECK(d.edge_count() == 10);
    for (const auto& [u, v] : d.edges())
        CHECK(d.edge_length(u, v) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("densify maps the empty graph to the empty graph") {
    const RoadGraph d = densify(RoadGraph{}, 20.0);
    CHECK(d.vertex_count() == 0);
}

TEST_CASE("densify is idempotent at fixed spacing") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 10; ++round) {
        const RoadGraph g = test_util::random_graph(12, rng);
        const RoadGraph once = densify(g, 20.0);
        const RoadGraph twice = densify(once, 20.0);
        CHECK(twice.vertex_count() == once.vertex_count());
        CHECK(twice.edge_count() == once.edge_count());
    }
}

TEST_CASE("a straight path is one chain") {
    const RoadGraph g = test_util::path_graph(5);
    const auto chains = extract_road_chains(g);
    REQUIRE(chains.size() == 1);
    CHECK(chains[0].vertex_sequence.size() == 5);
    CHECK_FALSE(chains[0].closed);
}

namespace {

// + intersection: two perpendicular roads sharing the center vertex 0
RoadGraph plus_graph() {
    RoadGraph g;
    g.add_vertex({0, 0});     // center
    g.add_vertex({-20, 0});   // west
    g.add_vertex({20, 0});    // east
    g.add_vertex({0, -20});   // south
    g.add_vertex({0, 20});    // north
    g.add_edge(0, 1);
    g.add_edge(0, 2);
    g.add_edge(0, 3);
    g.add_edge(0, 4);
    return g;
}

}  // namespace

TEST_CASE("a perpendicular crossing splits into two chains through the center") {
    const auto chains = extract_road_chains(plus_graph());
    REQUIRE(chains.size() == 2);
    for (const auto& c : chains) {
        CHECK(c.vertex_sequence.size() == 3);
        CHECK(c.vertex_sequence[1] == 0);  // both pass through the center
    }
}

TEST_CASE("a 70 degree bend breaks the chain") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({20, 0});
    // 70 degrees off the incoming direction
    g.add_vertex({20 + 20 * std::cos(deg_to_rad(70)), 20 * std::sin(deg_to_rad(70))});
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    const auto chains = extract_road_chains(g);
    CHECK(chains.size() == 2);
}

TEST_CASE("a 30 degree bend keeps the chain together") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({20, 0});
    g.add_vertex({20 + 20 * std::cos(deg_to_rad(30)), 20 * std::sin(deg_to_rad(30))});
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    CHECK(extract_road_chains(g).size() == 1);
}

TEST_CASE("chains cover every edge exactly once") {
    std::mt19937_64 rng(17);
    for (int round = 0; round < 20; ++round) {
        const RoadGraph g = densify(test_util::random_graph(10, rng), 20.0);
        const auto chains = extract_road_chains(g);
        std::set<std::pair<int, int>> covered;
        for (const auto& c : chains) {
            const auto& s = c.vertex_sequence;
            const int n = static_cast<int>(s.size());
            const int edges = c.closed ? n : n - 1;
            for (int i = 0; i < edges; ++i) {
                int u = s[i], v = s[(i + 1) % n];
                CHECK(g.has_edge(u, v));
                if (u > v) std::swap(u, v);
                CHECK(covered.emplace(u, v).second);  // no double cover
            }
        }
        CHECK(static_cast<int>(covered.size()) == g.edge_count());
    }
}

TEST_CASE("a closed square is a single closed chain") {
    RoadGraph g;
    g.add_vertex({0, 0});
    g.add_vertex({20, 0});
    g.add_vertex({20, 20});
    g.add_vertex({0, 20});
    for (int i = 0; i < 4; ++i) g.add_edge(i, (i + 1) % 4);
    const auto chains = extract_road_chains(g, 120.0);
    REQUIRE(chains.size() == 1);
    CHECK(chains[0].closed);
    CHECK(chains[0].vertex_sequence.size() == 4);
}

TEST_CASE("structure_original mirrors the adjacency") {
    const RoadGraph g = test_util::path_graph(3);
    const GraphStructure s = structure_original(g);
    CHECK(s.sources[1] == std::vector<int>{0, 2});
    CHECK(s.sources[0] == std::vector<int>{1});

    RoadGraph isolated;
    isolated.add_vertex({0, 0});
    CHECK(structure_original(isolated).sources[0].empty());

    const GraphStructure plus = structure_original(plus_graph());
    CHECK(plus.sources[0].size() == 4);
}

TEST_CASE("structure_road keeps four sources at a crossing but no cross-road edges") {
    const RoadGraph g = plus_graph();
    const auto chains = extract_road_chains(g);
    const GraphStructure road = structure_road(g.vertex_count(), chains);
    CHECK(road.sources[0].size() == 4);  // center aggregates all four arms
    // arms only hear the center, never each other
    for (int arm = 1; arm <= 4; ++arm) CHECK(road.sources[arm] == std::vector<int>{0});
}

TEST_CASE("structure_road equals structure_original on a straight path") {
    const RoadGraph g = test_util::path_graph(6);
    const auto chains = extract_road_chains(g);
    CHECK(structure_road(g.vertex_count(), chains).sources ==
          structure_original(g).sources);
}

TEST_CASE("directional structures split predecessor and successor") {
    const RoadGraph g = test_util::path_graph(3);
    const auto chains = extract_road_chains(g);
    const auto [fwd, bwd] = structure_road_directional(g.vertex_count(), chains);
    CHECK(fwd.sources[1] == std::vector<int>{0});
    CHECK(bwd.sources[1] == std::vector<int>{2});
    CHECK(fwd.sources[0].empty());
    CHECK(bwd.sources[2].empty());
}

TEST_CASE("directional union equals structure_road on random graphs") {
    std::mt19937_64 rng(23);
    for (int round = 0; round < 20; ++round) {
        const RoadGraph g = densify(test_util::random_graph(9, rng), 25.0);
        const auto chains = extract_road_chains(g);
        const GraphStructure road = structure_road(g.vertex_count(), chains);
        const auto [fwd, bwd] = structure_road_directional(g.vertex_count(), chains);
        for (int v = 0; v < g.vertex_count(); ++v) {
            std::set<int> joined(fwd.sources[v].begin(), fwd.sources[v].end());
            joined.insert(bwd.sources[v].begin(), bwd.sources[v].end());
            CHECK(std::vector<int>(joined.begin(), joined.end()) == road.sources[v]);
        }
    }
}

TEST_CASE("aux structure pairs two parallel chains") {
    RoadGraph g;
    const int n = 6;
    for (int i = 0; i < n; ++i) g.add_vertex({i * 20.0, 0.0});
    for (int i = 0; i < n; ++i) g.add_vertex({i * 20.0, 15.0});
    for (int i = 0; i + 1 < n; ++i) {
        g.add_edge(i, i + 1);
        g.add_edge(n + i, n + i + 1);
    }
    const auto chains = extract_road_chains(g);
    REQUIRE(chains.size() == 2);
    const GraphStructure aux = structure_aux_parallel(g, chains);
    for (int i = 0; i < n; ++i) {
        CHECK(aux.sources[i] == std::vector<int>{n + i});
        CHECK(aux.sources[n + i] == std::vector<int>{i});
    }
}

TEST_CASE("aux structure ignores perpendicular chains") {
    const RoadGraph g = plus_graph();
    const auto chains = extract_road_chains(g);
    const GraphStructure aux = structure_aux_parallel(g, chains);
    int total = 0;
    for (const auto& s : aux.sources) total += static_cast<int>(s.size());
    CHECK(total == 0);
}

TEST_CASE("aux structure on a single chain is empty") {
    const RoadGraph g = test_util::path_graph(8);
    const auto chains = extract_road_chains(g);
    const GraphStructure aux = structure_aux_parallel(g, chains);
    for (const auto& s : aux.sources) CHECK(s.empty());
}

TEST_CASE("aux structure is symmetric on random graphs") {
    std::mt19937_64 rng(31);
    for (int round = 0; round < 15; ++round) {
        const RoadGraph g = densify(test_util::random_graph(12, rng), 20.0);
        const auto chains = extract_road_chains(g);
        const GraphStructure aux = structure_aux_parallel(g, chains);
        for (int v = 0; v < g.vertex_count(); ++v)
            for (int u : aux.sources[v])
                CHECK(std::binary_search(aux.sources[u].begin(), aux.sources[u].end(), v));
    }
}

TEST_CASE("subgraph sampling respects order, size, and determinism") {
    const RoadGraph g = test_util::path_graph(10);
    const std::vector<GraphStructure> structures = {structure_original(g)};

    const SubgraphSample bfs = sample_subgraph(g, structures, 5, 4, TraversalMode::BFS, 2, 99);
    CHECK(bfs.vertex_ids == std::vector<int>{5, 4, 6, 3});
    CHECK(bfs.loss_vertex_ids.size() == 2);

    const SubgraphSample dfs = sample_subgraph(g, structures, 5, 4, TraversalMode::DFS, 2, 99);
    CHECK(dfs.vertex_ids == std::vector<int>{5, 4, 3, 2});

    // n larger than the component returns the whole component
    const SubgraphSample all = sample_subgraph(g, structures, 0, 50, TraversalMode::BFS, 10, 1);
    CHECK(all.size() == 10);

    const SubgraphSample again = sample_subgraph(g, structures, 5, 4, TraversalMode::BFS, 2, 99);
    CHECK(again.vertex_ids == bfs.vertex_ids);
    CHECK(again.loss_vertex_ids == bfs.loss_vertex_ids);

    CHECK_THROWS_AS(sample_subgraph(g, structures, 99, 4, TraversalMode::BFS, 2, 1), DataError);
}

TEST_CASE("induced structures only reference sampled vertices") {
    std::mt19937_64 rng(37);
    const RoadGraph g = densify(test_util::random_graph(14, rng), 20.0);
    const auto chains = extract_road_chains(g);
    std::vector<GraphStructure> structures = {structure_original(g),
                                              structure_road(g.vertex_count(), chains)};
    const SubgraphSample s = sample_subgraph(g, structures, 0, 7, TraversalMode::BFS, 3, 5);
    for (const auto& st : s.structures) {
        REQUIRE(st.vertex_count() == s.size());
        for (const auto& sources : st.sources)
            for (int u : sources) CHECK(u < s.size());
    }
    // loss ids are sampled vertices
    for (int gid : s.loss_vertex_ids)
        CHECK(std::find(s.vertex_ids.begin(), s.vertex_ids.end(), gid) != s.vertex_ids.end());
}

TEST_CASE("union structure distances follow message direction") {
    const RoadGraph g = test_util::path_graph(4);
    const auto chains = extract_road_chains(g);
    const auto [fwd, bwd] = structure_road_directional(g.vertex_count(), chains);
    // forward-only: messages flow along increasing chain positions
    const auto dist = union_structure_distances({fwd}, 0);
    CHECK(dist[0] == 0);
    CHECK(dist[1] == 1);
    CHECK(dist[3] == 3);
    const auto rdist = union_structure_distances({fwd}, 3);
    CHECK(rdist[0] == -1);  // nothing flows backward
}
