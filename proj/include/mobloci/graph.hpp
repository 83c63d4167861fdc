#pragma once

#include "mobloci/error.hpp"
#include "mobloci/mobility_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mobloci {

/// Compressed out-adjacency of a graph, indexed by VertexId.
struct Adjacency {
    std::vector<std::size_t> offsets; // size n + 1
    std::vector<VertexId> targets;

    std::span<const VertexId> out(VertexId v) const {
        return std::span<const VertexId>(targets).subspan(offsets[v], offsets[v + 1] - offsets[v]);
    }
};

inline Adjacency out_adjacency(const MobilityGraph &g) {
    Adjacency adj;
    adj.offsets.assign(g.num_vertices() + 1, 0);
    for (const Edge &e : g.edges()) ++adj.offsets[e.from + 1];
    for (std::size_t v = 0; v < g.num_vertices(); ++v) adj.offsets[v + 1] += adj.offsets[v];
    adj.targets.reserve(g.num_edges());
    // Edges are sorted by source, so targets fill in place.
    for (const Edge &e : g.edges()) adj.targets.push_back(e.to);
    return adj;
}

struct ComponentPartition {
    std::vector<std::size_t> assignment;            // vertex -> component index
    std::vector<std::vector<VertexId>> components;  // each ascending; largest first

    std::size_t size() const noexcept { return components.size(); }
};

/**
 * Maximal strongly connected components (iterative Tarjan, linear time).
 *
 * Components are ordered by descending size, ties broken by the smallest
 * member zone id.
 */
inline ComponentPartition strong_components(const MobilityGraph &g) {
    const std::size_t n = g.num_vertices();
    constexpr std::size_t unvisited = std::numeric_limits<std::size_t>::max();
    const Adjacency adj = out_adjacency(g);

    std::vector<std::size_t> index(n, unvisited), lowlink(n, 0), next_edge(n, 0);
    std::vector<bool> on_stack(n, false);
    std::vector<VertexId> stack, call;
    std::vector<std::vector<VertexId>> found;
    std::size_t counter = 0;

    for (VertexId root = 0; root < n; ++root) {
        if (index[root] != unvisited) continue;
        call.push_back(root);
        index[root] = lowlink[root] = counter++;
        next_edge[root] = adj.offsets[root];
        stack.push_back(root);
        on_stack[root] = true;

        while (!call.empty()) {
            VertexId v = call.back();
            if (next_edge[v] < adj.offsets[v + 1]) {
                VertexId w = adj.targets[next_edge[v]++];
                if (index[w] == unvisited) {
                    index[w] = lowlink[w] = counter++;
                    next_edge[w] = adj.offsets[w];
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back(w);
                } else if (on_stack[w]) {
                    lowlink[v] = std::min(lowlink[v], index[w]);
                }
                continue;
            }
            call.pop_back();
            if (!call.empty()) lowlink[call.back()] = std::min(lowlink[call.back()], lowlink[v]);
            if (lowlink[v] == index[v]) {
                std::vector<VertexId> comp;
                VertexId w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp.push_back(w);
                } while (w != v);
                std::sort(comp.begin(), comp.end());
                found.push_back(std::move(comp));
            }
        }
    }

    std::sort(found.begin(), found.end(), [](const auto &a, const auto &b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a.front() < b.front();
    });

    ComponentPartition out;
    out.assignment.assign(n, 0);
    for (std::size_t c = 0; c < found.size(); ++c)
        for (VertexId v : found[c]) out.assignment[v] = c;
    out.components = std::move(found);
    return out;
}

/// Keeps the given vertices and every edge with both endpoints among them.
inline MobilityGraph induced_subgraph(const MobilityGraph &g, std::span<const VertexId> vertices) {
    constexpr VertexId absent = std::numeric_limits<VertexId>::max();
    std::vector<VertexId> keep(vertices.begin(), vertices.end());
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());

    std::vector<VertexId> remap(g.num_vertices(), absent);
    std::vector<ZoneId> zones;
    zones.reserve(keep.size());
    for (VertexId v : keep) {
        if (v >= g.num_vertices()) throw GraphError("unknown vertex index " + std::to_string(v));
        remap[v] = static_cast<VertexId>(zones.size());
        zones.push_back(g.zone(v));
    }
    std::vector<Edge> edges;
    for (const Edge &e : g.edges())
        if (remap[e.from] != absent && remap[e.to] != absent) edges.push_back({remap[e.from], remap[e.to], e.weight});
    return MobilityGraph(std::move(zones), std::move(edges));
}

inline MobilityGraph induced_subgraph(const MobilityGraph &g, std::span<const ZoneId> zones) {
    std::vector<VertexId> ids;
    ids.reserve(zones.size());
    for (const ZoneId &z : zones) {
        auto id = g.index_of(z);
        if (!id) throw GraphError("unknown zone '" + z + "'");
        ids.push_back(*id);
    }
    return induced_subgraph(g, std::span<const VertexId>(ids));
}

inline MobilityGraph transpose(const MobilityGraph &g) {
    std::vector<Edge> edges;
    edges.reserve(g.num_edges());
    for (const Edge &e : g.edges()) edges.push_back({e.to, e.from, e.weight});
    return MobilityGraph(g.zones(), std::move(edges));
}

struct DegreeRow {
    std::size_t in_degree = 0;
    std::size_t out_degree = 0;
    double weighted_in = 0.0;
    double weighted_out = 0.0;
};

using DegreeTable = std::vector<DegreeRow>; // indexed by VertexId

inline DegreeTable degree_features(const MobilityGraph &g) {
    DegreeTable table(g.num_vertices());
    for (const Edge &e : g.edges()) {
        ++table[e.to].in_degree;
        ++table[e.from].out_degree;
        table[e.to].weighted_in += e.weight;
        table[e.from].weighted_out += e.weight;
    }
    return table;
}

struct HistogramBin {
    double low;
    double high;
    std::size_t count;
};

/**
 * Equal-width histogram of edge weights over [min, max]. The first bin is
 * closed, later bins are half-open on the left: [lo, h1], (h1, h2], ...
 */
inline std::vector<HistogramBin> edge_weight_histogram(const MobilityGraph &g, std::size_t bins) {
    if (bins == 0) throw GraphError("histogram needs at least one bin");
    if (g.num_edges() == 0) throw GraphError("histogram of a graph without edges");
    const auto weights = g.weights();
    const auto [min_it, max_it] = std::minmax_element(weights.begin(), weights.end());
    const double lo = *min_it, hi = *max_it;
    const double width = (hi - lo) / static_cast<double>(bins);

    std::vector<HistogramBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].low = lo + width * static_cast<double>(b);
        out[b].high = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
        out[b].count = 0;
    }
    for (double w : weights) {
        std::size_t b = 0;
        if (width > 0.0) {
            // Smallest b with w <= high(b); the estimate is corrected against the stored edges.
            double guess = std::ceil((w - lo) / width) - 1.0;
            b = guess <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(guess));
            while (b > 0 && w <= out[b - 1].high) --b;
            while (b + 1 < bins && w > out[b].high) ++b;
        }
        ++out[b].count;
    }
    return out;
}

} // namespace mobloci
