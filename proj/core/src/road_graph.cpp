#include "roadtagger/road_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <stdexcept>

#include "roadtagger/errors.hpp"
#include "roadtagger/rng.hpp"

namespace roadtagger {

int RoadGraph::add_vertex(GeoPoint p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw DataError("RoadGraph: non-finite vertex position");
    vertices_.push_back(p);
    adjacency_.emplace_back();
    return static_cast<int>(vertices_.size()) - 1;
}

std::uint64_t RoadGraph::edge_key(int u, int v) {
    if (u > v) std::swap(u, v);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
           static_cast<std::uint32_t>(v);
}

bool RoadGraph::add_edge(int u, int v, std::int64_t way_id) {
    if (u < 0 || v < 0 || u >= vertex_count() || v >= vertex_count())
        throw DataError("RoadGraph: edge endpoint out of range");
    if (u == v) throw DataError("RoadGraph: self loop rejected");
    if (has_edge(u, v)) return false;
    auto& au = adjacency_[u];
    auto& av = adjacency_[v];
    au.insert(std::lower_bound(au.begin(), au.end(), v), v);
    av.insert(std::lower_bound(av.begin(), av.end(), u), u);
    if (way_id >= 0) way_ids_[edge_key(u, v)] = way_id;
    return true;
}

bool RoadGraph::has_edge(int u, int v) const {
    if (u < 0 || u >= vertex_count()) return false;
    const auto& au = adjacency_[u];
    return std::binary_search(au.begin(), au.end(), v);
}

std::int64_t RoadGraph::way_of(int u, int v) const {
    auto it = way_ids_.find(edge_key(u, v));
    return it == way_ids_.end() ? -1 : it->second;
}

int RoadGraph::edge_count() const {
    std::size_t twice = 0;
    for (const auto& a : adjacency_) twice += a.size();
    return static_cast<int>(twice / 2);
}

std::vector<std::pair<int, int>> RoadGraph::edges() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(edge_count());
    for (int u = 0; u < vertex_count(); ++u)
        for (int v : adjacency_[u])
            if (u < v) out.emplace_back(u, v);
    return out;
}

RoadGraph densify(const RoadGraph& graph, double spacing) {
    if (spacing <= 0.0) throw DataError("densify: spacing must be positive");
    RoadGraph out;
    for (const auto& p : graph.positions()) out.add_vertex(p);
    for (const auto& [u, v] : graph.edges()) {
        const std::int64_t way = graph.way_of(u, v);
        const double len = graph.edge_length(u, v);
        const int segments = std::max(1, static_cast<int>(std::ceil(len / spacing - 1e-12)));
        int prev = u;
        const GeoPoint a = graph.position(u);
        const GeoPoint b = graph.position(v);
        for (int i = 1; i < segments; ++i) {
            const double t = static_cast<double>(i) / segments;
            const int mid = out.add_vertex({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
            out.add_edge(prev, mid, way);
            prev = mid;
        }
        out.add_edge(prev, v, way);
    }
    return out;
}

namespace {

struct EdgeUse {
    // used[key] marks an undirected edge as assigned to a chain
    std::unordered_map<std::uint64_t, bool> used;

    static std::uint64_t key(int u, int v) {
        if (u > v) std::swap(u, v);
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
               static_cast<std::uint32_t>(v);
    }
    bool is_used(int u, int v) const {
        auto it = used.find(key(u, v));
        return it != used.end() && it->second;
    }
    void mark(int u, int v) { used[key(u, v)] = true; }
};

// Best unused continuation out of `cur`, entered from `prev`.
// Returns -1 when none passes the angle threshold.
int best_continuation(const RoadGraph& g, const EdgeUse& use, int prev, int cur,
                      double threshold_rad) {
    const double in_bearing = bearing(g.position(prev), g.position(cur));
    int best = -1;
    double best_angle = threshold_rad;
    for (int w : g.neighbors(cur)) {
        if (use.is_used(cur, w)) continue;
        const double ang = angle_between(in_bearing, bearing(g.position(cur), g.position(w)));
        if (ang < best_angle - 1e-12 || (std::fabs(ang - best_angle) <= 1e-12 && best >= 0 && w < best)) {
            best = w;
            best_angle = ang;
        }
    }
    return best;
}

// Extends `seq` at the back until no continuation qualifies or the chain
// closes into a cycle. Returns true when it closed.
bool extend_chain(const RoadGraph& g, EdgeUse& use, std::vector<int>& seq,
                  double threshold_rad) {
    while (true) {
        const int n = static_cast<int>(seq.size());
        const int next = best_continuation(g, use, seq[n - 2], seq[n - 1], threshold_rad);
        if (next < 0) return false;
        use.mark(seq[n - 1], next);
        if (next == seq.front()) return true;
        seq.push_back(next);
    }
}

void canonicalize(RoadChain& chain) {
    auto& s = chain.vertex_sequence;
    if (chain.closed) {
        // rotate the minimum vertex to the front, then orient toward the
        // smaller of its two cycle neighbors
        const auto min_it = std::min_element(s.begin(), s.end());
        std::rotate(s.begin(), min_it, s.end());
        if (s.size() > 2 && s.back() < s[1]) {
            std::reverse(s.begin() + 1, s.end());
        }
    } else if (s.back() < s.front()) {
        std::reverse(s.begin(), s.end());
    }
}

}  // namespace

std::vector<RoadChain> extract_road_chains(const RoadGraph& graph, double angle_threshold_deg) {
    const double threshold = deg_to_rad(angle_threshold_deg);
    EdgeUse use;
    std::vector<RoadChain> chains;
    for (const auto& [u, v] : graph.edges()) {
        if (use.is_used(u, v)) continue;
        use.mark(u, v);
        RoadChain chain;
        chain.vertex_sequence = {u, v};
        chain.closed = extend_chain(graph, use, chain.vertex_sequence, threshold);
        if (!chain.closed) {
            // grow the other end
            std::reverse(chain.vertex_sequence.begin(), chain.vertex_sequence.end());
            chain.closed = extend_chain(graph, use, chain.vertex_sequence, threshold);
        }
        canonicalize(chain);
        chains.push_back(std::move(chain));
    }
    return chains;
}

namespace {

void add_source(std::vector<std::vector<int>>& sources, int v, int from) {
    auto& s = sources[v];
    auto it = std::lower_bound(s.begin(), s.end(), from);
    if (it == s.end() || *it != from) s.insert(it, from);
}

}  // namespace

GraphStructure structure_original(const RoadGraph& graph) {
    GraphStructure s;
    s.name = "original";
    s.directed = false;
    s.sources = graph.adjacency();
    return s;
}

GraphStructure structure_road(int vertex_count, const std::vector<RoadChain>& chains) {
    GraphStructure s;
    s.name = "road";
    s.directed = false;
    s.sources.assign(vertex_count, {});
    for (const auto& chain : chains) {
        const auto& seq = chain.vertex_sequence;
        const int n = static_cast<int>(seq.size());
        for (int i = 0; i + 1 < n; ++i) {
            add_source(s.sources, seq[i], seq[i + 1]);
            add_source(s.sources, seq[i + 1], seq[i]);
        }
        if (chain.closed && n > 1) {
            add_source(s.sources, seq[n - 1], seq[0]);
            add_source(s.sources, seq[0], seq[n - 1]);
        }
    }
    return s;
}

std::pair<GraphStructure, GraphStructure> structure_road_directional(
    int vertex_count, const std::vector<RoadChain>& chains) {
    GraphStructure fwd, bwd;
    fwd.name = "road_fwd";
    bwd.name = "road_bwd";
    fwd.directed = bwd.directed = true;
    fwd.sources.assign(vertex_count, {});
    bwd.sources.assign(vertex_count, {});
    for (const auto& chain : chains) {
        const auto& seq = chain.vertex_sequence;
        const int n = static_cast<int>(seq.size());
        for (int i = 0; i + 1 < n; ++i) {
            add_source(fwd.sources, seq[i + 1], seq[i]);  // predecessor feeds forward
            add_source(bwd.sources, seq[i], seq[i + 1]);  // successor feeds backward
        }
        if (chain.closed && n > 1) {
            add_source(fwd.sources, seq[0], seq[n - 1]);
            add_source(bwd.sources, seq[n - 1], seq[0]);
        }
    }
    return {std::move(fwd), std::move(bwd)};
}

namespace {

// Local direction of a chain occurrence: bearing across the neighbors of
// position i, falling back to the single incident edge at endpoints.
double occurrence_direction(const RoadGraph& g, const RoadChain& chain, int i) {
    const auto& seq = chain.vertex_sequence;
    const int n = static_cast<int>(seq.size());
    int a = i - 1, b = i + 1;
    if (chain.closed) {
        a = (i - 1 + n) % n;
        b = (i + 1) % n;
    } else {
        a = std::max(a, 0);
        b = std::min(b, n - 1);
    }
    return bearing(g.position(seq[a]), g.position(seq[b]));
}

}  // namespace

GraphStructure structure_aux_parallel(const RoadGraph& graph,
                                      const std::vector<RoadChain>& chains,
                                      double max_dist, double max_angle_deg) {
    const int n = graph.vertex_count();
    const double max_angle = deg_to_rad(max_angle_deg);

    // chain membership and local directions per vertex
    std::vector<std::vector<int>> chain_ids(n);
    std::vector<std::vector<double>> directions(n);
    for (int c = 0; c < static_cast<int>(chains.size()); ++c) {
        const auto& seq = chains[c].vertex_sequence;
        for (int i = 0; i < static_cast<int>(seq.size()); ++i) {
            chain_ids[seq[i]].push_back(c);
            directions[seq[i]].push_back(occurrence_direction(graph, chains[c], i));
        }
    }

    auto shares_chain = [&](int u, int v) {
        for (int cu : chain_ids[u])
            for (int cv : chain_ids[v])
                if (cu == cv) return true;
        return false;
    };
    auto near_parallel = [&](int u, int v) {
        for (double du : directions[u])
            for (double dv : directions[v])
                if (line_angle_between(du, dv) <= max_angle + 1e-12) return true;
        return false;
    };

    GraphStructure s;
    s.name = "aux_parallel";
    s.directed = false;
    s.sources.assign(n, {});
    for (int v = 0; v < n; ++v) {
        if (chain_ids[v].empty()) continue;
        int best = -1;
        double best_d = max_dist;
        for (int u = 0; u < n; ++u) {
            if (u == v || chain_ids[u].empty() || shares_chain(u, v)) continue;
            const double d = distance(graph.position(u), graph.position(v));
            if (d < best_d - 1e-12 || (std::fabs(d - best_d) <= 1e-12 && best >= 0 && u < best)) {
                best = u;
                best_d = d;
            }
        }
        if (best >= 0 && near_parallel(v, best)) {
            add_source(s.sources, v, best);
            add_source(s.sources, best, v);
        }
    }
    return s;
}

SubgraphSample sample_subgraph(const RoadGraph& graph,
                               const std::vector<GraphStructure>& structures,
                               int seed_vertex, int n, TraversalMode mode,
                               int loss_count, std::uint64_t rng_seed) {
    if (seed_vertex < 0 || seed_vertex >= graph.vertex_count())
        throw DataError("sample_subgraph: seed vertex " + std::to_string(seed_vertex) +
                        " out of range");
    if (n < 1) throw DataError("sample_subgraph: n must be >= 1");
    if (loss_count > n) throw DataError("sample_subgraph: loss_count exceeds n");

    SubgraphSample sample;
    std::vector<bool> visited(graph.vertex_count(), false);
    if (mode == TraversalMode::BFS) {
        std::deque<int> queue{seed_vertex};
        visited[seed_vertex] = true;
        while (!queue.empty() && static_cast<int>(sample.vertex_ids.size()) < n) {
            const int v = queue.front();
            queue.pop_front();
            sample.vertex_ids.push_back(v);
            for (int u : graph.neighbors(v)) {
                if (!visited[u]) {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    } else {
        std::vector<int> stack{seed_vertex};
        visited[seed_vertex] = true;
        while (!stack.empty() && static_cast<int>(sample.vertex_ids.size()) < n) {
            const int v = stack.back();
            stack.pop_back();
            sample.vertex_ids.push_back(v);
            const auto& nb = graph.neighbors(v);
            for (auto it = nb.rbegin(); it != nb.rend(); ++it) {
                if (!visited[*it]) {
                    visited[*it] = true;
                    stack.push_back(*it);
                }
            }
        }
    }

    std::unordered_map<int, int> local;
    local.reserve(sample.vertex_ids.size());
    for (int i = 0; i < static_cast<int>(sample.vertex_ids.size()); ++i)
        local[sample.vertex_ids[i]] = i;

    auto induce = [&](const std::vector<std::vector<int>>& sources) {
        std::vector<std::vector<int>> out(sample.vertex_ids.size());
        for (int i = 0; i < static_cast<int>(sample.vertex_ids.size()); ++i) {
            for (int u : sources[sample.vertex_ids[i]]) {
                auto it = local.find(u);
                if (it != local.end()) out[i].push_back(it->second);
            }
            std::sort(out[i].begin(), out[i].end());
        }
        return out;
    };

    for (const auto& st : structures) {
        GraphStructure induced;
        induced.name = st.name;
        induced.directed = st.directed;
        induced.sources = induce(st.sources);
        sample.structures.push_back(std::move(induced));
    }
    sample.adjacency = induce(graph.adjacency());

    // uniform draw without replacement, clamped to the sample size
    const int k = std::min<int>(loss_count, static_cast<int>(sample.vertex_ids.size()));
    std::vector<int> pool(sample.vertex_ids.size());
    for (int i = 0; i < static_cast<int>(pool.size()); ++i) pool[i] = i;
    Rng rng(rng_seed);
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
        std::swap(pool[i], pool[pick(rng)]);
        sample.loss_vertex_ids.push_back(sample.vertex_ids[pool[i]]);
    }
    return sample;
}

std::vector<int> SubgraphSample::loss_local_indices() const {
    std::unordered_map<int, int> local;
    local.reserve(vertex_ids.size());
    for (int i = 0; i < static_cast<int>(vertex_ids.size()); ++i) local[vertex_ids[i]] = i;
    std::vector<int> out;
    out.reserve(loss_vertex_ids.size());
    for (int gid : loss_vertex_ids) out.push_back(local.at(gid));
    return out;
}

std::vector<int> union_structure_distances(const std::vector<GraphStructure>& structures,
                                           int from) {
    if (structures.empty()) return {};
    const int n = structures.front().vertex_count();
    // forward adjacency of the union: a -> b when a in sources[b]
    std::vector<std::vector<int>> next(n);
    for (const auto& st : structures)
        for (int b = 0; b < n; ++b)
            for (int a : st.sources[b]) next[a].push_back(b);

    std::vector<int> dist(n, -1);
    dist[from] = 0;
    std::deque<int> queue{from};
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int u : next[v]) {
            if (dist[u] < 0) {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    return dist;
}

}  // namespace roadtagger
