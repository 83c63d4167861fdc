#pragma once

// Trajectory and edge-list readers, and aggregation of commuting sequences
// into a mobility graph.
//
// Trajectory format (one commuter group per line):
//
//     count,path
//     3,A|B|C
//     # comment
//
// Edge-list format:
//
//     from,to,weight
//     A,B,3

#include "mobloci/error.hpp"
#include "mobloci/format.hpp"
#include "mobloci/mobility_graph.hpp"

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace mobloci {

enum class Direction { morning, evening };

inline Direction flipped(Direction d) noexcept {
    return d == Direction::morning ? Direction::evening : Direction::morning;
}

inline const char *to_string(Direction d) noexcept { return d == Direction::morning ? "morning" : "evening"; }

struct Trajectory {
    std::vector<ZoneId> zones; // never two equal neighbours
    std::uint64_t count = 1;

    friend bool operator==(const Trajectory &, const Trajectory &) = default;
};

struct TrajectorySet {
    std::vector<Trajectory> trajectories;
    Direction direction = Direction::morning;

    friend bool operator==(const TrajectorySet &, const TrajectorySet &) = default;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool skippable(std::string_view line) {
    std::string_view t = trim(line);
    return t.empty() || t.front() == '#';
}

/// Reads lines until the first non-comment line and checks it against `expected`.
inline std::size_t expect_header(std::istream &in, std::string_view expected) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (skippable(line)) continue;
        std::string_view got = trim(line);
        if (got.starts_with("\xEF\xBB\xBF")) got.remove_prefix(3); // UTF-8 BOM
        if (got != expected)
            throw ParseError(lineno, "expected header '" + std::string(expected) + "', got '" + std::string(got) + "'");
        return lineno;
    }
    throw ParseError(0, "empty input: missing header '" + std::string(expected) + "'");
}

} // namespace detail

/// Consecutive repeated zones are collapsed; identical records stay separate.
inline TrajectorySet parse_trajectories(std::istream &in, Direction direction = Direction::morning) {
    TrajectorySet out;
    out.direction = direction;
    std::size_t lineno = detail::expect_header(in, "count,path");
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skippable(line)) continue;
        std::string_view body = trim(line);
        std::size_t comma = body.find(',');
        if (comma == std::string_view::npos) throw ParseError(lineno, "expected 'count,path'");
        std::string_view count_text = trim(body.substr(0, comma));
        std::string_view path = trim(body.substr(comma + 1));
        auto count = parse_int(count_text);
        if (!count) throw ParseError(lineno, "invalid count '" + std::string(count_text) + "'");
        if (*count < 1) throw ParseError(lineno, "count must be at least 1");
        if (path.empty()) throw ParseError(lineno, "empty zone sequence");

        Trajectory traj;
        traj.count = static_cast<std::uint64_t>(*count);
        for (std::string_view raw : detail::split(path, '|')) {
            std::string_view zone = trim(raw);
            if (zone.empty()) throw ParseError(lineno, "empty zone id in path");
            if (zone.find(',') != std::string_view::npos) throw ParseError(lineno, "unexpected ',' in path");
            if (!traj.zones.empty() && traj.zones.back() == zone) continue;
            traj.zones.emplace_back(zone);
        }
        out.trajectories.push_back(std::move(traj));
    }
    return out;
}

inline MobilityGraph parse_edge_list(std::istream &in) {
    GraphBuilder builder;
    std::size_t lineno = detail::expect_header(in, "from,to,weight");
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skippable(line)) continue;
        auto fields = detail::split(trim(line), ',');
        if (fields.size() != 3) throw ParseError(lineno, "expected 3 fields 'from,to,weight'");
        std::string from(trim(fields[0]));
        std::string to(trim(fields[1]));
        if (from.empty() || to.empty()) throw ParseError(lineno, "empty zone id");
        auto weight = parse_double(trim(fields[2]));
        if (!weight || !std::isfinite(*weight)) throw ParseError(lineno, "invalid weight '" + std::string(trim(fields[2])) + "'");
        if (from == to) throw ParseError(lineno, "self-loop at '" + from + "'");
        if (*weight <= 0.0) throw ParseError(lineno, "non-positive weight");
        if (builder.contains_edge(from, to)) throw ParseError(lineno, "duplicate edge '" + from + "' -> '" + to + "'");
        builder.add_weight(from, to, *weight);
    }
    return builder.build();
}

inline void write_edge_list(std::ostream &out, const MobilityGraph &g) {
    out << "from,to,weight\n";
    for (const Edge &e : g.edges())
        out << g.zone(e.from) << ',' << g.zone(e.to) << ',' << format_number(e.weight) << '\n';
}

inline MobilityGraph aggregate(const TrajectorySet &trajs) {
    GraphBuilder builder;
    for (const Trajectory &t : trajs.trajectories) {
        for (const ZoneId &z : t.zones) builder.add_vertex(z);
        for (std::size_t i = 1; i < t.zones.size(); ++i)
            builder.add_weight(t.zones[i - 1], t.zones[i], static_cast<double>(t.count));
    }
    return builder.build();
}

inline TrajectorySet reverse(TrajectorySet trajs) {
    for (Trajectory &t : trajs.trajectories) std::reverse(t.zones.begin(), t.zones.end());
    trajs.direction = flipped(trajs.direction);
    return trajs;
}

} // namespace mobloci
