#pragma once

// Random inputs for property tests. Zone names are zero-padded so their
// lexicographic order matches creation order.

#include "mobloci/ingest.hpp"
#include "mobloci/markov.hpp"
#include "mobloci/mobility_graph.hpp"
#include "mobloci/rng.hpp"

#include <cstdio>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mobloci::testkit {

inline std::string zone_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "z%04zu", i);
    return buf;
}

inline std::vector<ZoneId> zone_names(std::size_t n) {
    std::vector<ZoneId> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(zone_name(i));
    return out;
}

inline double random_weight(Rng &rng, int max_weight = 20) {
    return static_cast<double>(1 + rng.uniform_below(static_cast<std::uint64_t>(max_weight)));
}

/// Arbitrary digraph: each ordered pair i != j is an edge with probability `density`.
inline MobilityGraph random_digraph(std::size_t n, double density, Rng &rng) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && rng.uniform() < density)
                edges.push_back({static_cast<VertexId>(i), static_cast<VertexId>(j), random_weight(rng)});
    return MobilityGraph(zone_names(n), std::move(edges));
}

/// Strongly connected: a random Hamiltonian cycle plus extra edges with probability `density`.
inline MobilityGraph random_strong_digraph(std::size_t n, double density, Rng &rng, int max_weight = 20) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t k = 0; k < n && n > 1; ++k) pairs.insert({order[k], order[(k + 1) % n]});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && rng.uniform() < density) pairs.insert({i, j});
    std::vector<Edge> edges;
    for (auto [i, j] : pairs)
        edges.push_back({static_cast<VertexId>(i), static_cast<VertexId>(j), random_weight(rng, max_weight)});
    return MobilityGraph(zone_names(n), std::move(edges));
}

/// Irreducible row-stochastic matrix with real-valued entries (self-loops allowed).
inline TransitionMatrix random_irreducible_matrix(std::size_t n, double density, Rng &rng) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t k = 0; k < n; ++k) rows[order[k]][order[(k + 1) % n]] = 0.05 + rng.uniform();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (rng.uniform() < density) rows[i][j] = 0.05 + rng.uniform();
    for (auto &row : rows) {
        const double sum = std::accumulate(row.begin(), row.end(), 0.0);
        for (double &v : row) v /= sum;
    }
    return TransitionMatrix::from_dense(rows);
}

inline TrajectorySet random_trajectories(std::size_t zones, std::size_t count, Rng &rng) {
    TrajectorySet set;
    for (std::size_t t = 0; t < count; ++t) {
        Trajectory traj;
        traj.count = 1 + rng.uniform_below(9);
        const std::size_t length = 1 + rng.uniform_below(6);
        while (traj.zones.size() < length) {
            ZoneId z = zone_name(rng.uniform_below(zones));
            if (traj.zones.empty() || traj.zones.back() != z) traj.zones.push_back(z);
        }
        set.trajectories.push_back(std::move(traj));
    }
    return set;
}

} // namespace mobloci::testkit
