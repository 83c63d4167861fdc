#pragma once

#include "mobloci/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mobloci {

using ZoneId = std::string;
using VertexId = std::uint32_t;

struct Edge {
    VertexId from;
    VertexId to;
    double weight;

    friend bool operator==(const Edge &, const Edge &) = default;
};

/**
 * Weighted directed graph of aggregate movement between zones.
 *
 * Vertices are kept in lexicographic ZoneId order, so VertexId order and
 * ZoneId order coincide. Edges are sorted by (from, to), carry a strictly
 * positive weight, and never form self-loops.
 */
class MobilityGraph {
public:
    MobilityGraph() = default;

    /// `zones` must be strictly increasing; edges may arrive in any order.
    MobilityGraph(std::vector<ZoneId> zones, std::vector<Edge> edges)
        : zones_(std::move(zones)), edges_(std::move(edges)) {
        for (std::size_t i = 0; i < zones_.size(); ++i) {
            if (zones_[i].empty()) throw GraphError("empty zone id");
            if (i > 0 && !(zones_[i - 1] < zones_[i]))
                throw GraphError("zone ids must be unique and sorted: '" + zones_[i] + "'");
        }
        std::sort(edges_.begin(), edges_.end(), [](const Edge &a, const Edge &b) {
            return std::pair(a.from, a.to) < std::pair(b.from, b.to);
        });
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const Edge &edge = edges_[e];
            if (edge.from >= zones_.size() || edge.to >= zones_.size())
                throw GraphError("edge endpoint out of range");
            if (edge.from == edge.to) throw GraphError("self-loop at '" + zones_[edge.from] + "'");
            if (!(edge.weight > 0.0) || !std::isfinite(edge.weight))
                throw GraphError("non-positive weight on edge '" + zones_[edge.from] + "' -> '" +
                                 zones_[edge.to] + "'");
            if (e > 0 && edges_[e - 1].from == edge.from && edges_[e - 1].to == edge.to)
                throw GraphError("duplicate edge '" + zones_[edge.from] + "' -> '" + zones_[edge.to] + "'");
        }
    }

    std::size_t num_vertices() const noexcept { return zones_.size(); }
    std::size_t num_edges() const noexcept { return edges_.size(); }

    const std::vector<ZoneId> &zones() const noexcept { return zones_; }
    const ZoneId &zone(VertexId v) const { return zones_.at(v); }
    std::span<const Edge> edges() const noexcept { return edges_; }

    std::optional<VertexId> index_of(const ZoneId &zone) const {
        auto it = std::lower_bound(zones_.begin(), zones_.end(), zone);
        if (it == zones_.end() || *it != zone) return std::nullopt;
        return static_cast<VertexId>(it - zones_.begin());
    }

    std::optional<double> weight(VertexId from, VertexId to) const {
        auto it = std::lower_bound(edges_.begin(), edges_.end(), std::pair(from, to),
                                   [](const Edge &e, const std::pair<VertexId, VertexId> &key) {
                                       return std::pair(e.from, e.to) < key;
                                   });
        if (it == edges_.end() || it->from != from || it->to != to) return std::nullopt;
        return it->weight;
    }

    std::vector<double> weights() const {
        std::vector<double> out;
        out.reserve(edges_.size());
        for (const Edge &e : edges_) out.push_back(e.weight);
        return out;
    }

    double total_weight() const noexcept {
        double sum = 0.0;
        for (const Edge &e : edges_) sum += e.weight;
        return sum;
    }

    /// Same vertices and edge structure, weights replaced in edge order.
    MobilityGraph with_weights(std::span<const double> weights) const {
        if (weights.size() != edges_.size()) throw GraphError("weight vector size does not match edge count");
        MobilityGraph out = *this;
        for (std::size_t e = 0; e < weights.size(); ++e) {
            if (!(weights[e] > 0.0) || !std::isfinite(weights[e])) throw GraphError("non-positive weight");
            out.edges_[e].weight = weights[e];
        }
        return out;
    }

    friend bool operator==(const MobilityGraph &, const MobilityGraph &) = default;

private:
    std::vector<ZoneId> zones_;
    std::vector<Edge> edges_;
};

/// Accumulates string-keyed edges; repeated (from, to) pairs are summed.
class GraphBuilder {
public:
    void add_vertex(const ZoneId &zone) {
        if (zone.empty()) throw GraphError("empty zone id");
        vertices_.emplace(zone, 0);
    }

    void add_weight(const ZoneId &from, const ZoneId &to, double weight) {
        if (from == to) throw GraphError("self-loop at '" + from + "'");
        if (!(weight > 0.0) || !std::isfinite(weight))
            throw GraphError("non-positive weight on edge '" + from + "' -> '" + to + "'");
        add_vertex(from);
        add_vertex(to);
        weights_[{from, to}] += weight;
    }

    bool contains_edge(const ZoneId &from, const ZoneId &to) const { return weights_.contains({from, to}); }

    MobilityGraph build() const {
        std::vector<ZoneId> zones;
        zones.reserve(vertices_.size());
        std::map<ZoneId, VertexId> index;
        for (const auto &[zone, unused] : vertices_) {
            index.emplace(zone, static_cast<VertexId>(zones.size()));
            zones.push_back(zone);
        }
        std::vector<Edge> edges;
        edges.reserve(weights_.size());
        for (const auto &[key, w] : weights_) edges.push_back({index.at(key.first), index.at(key.second), w});
        return MobilityGraph(std::move(zones), std::move(edges));
    }

private:
    std::map<ZoneId, int> vertices_;
    std::map<std::pair<ZoneId, ZoneId>, double> weights_;
};

} // namespace mobloci
