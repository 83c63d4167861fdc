#pragma once

// Permutation null for stationary values, tail probabilities, multiple-testing
// adjustment and selection of mobility loci.

#include "mobloci/error.hpp"
#include "mobloci/markov.hpp"
#include "mobloci/mobility_graph.hpp"
#include "mobloci/rng.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace mobloci {

/// Same edges, weight multiset shuffled uniformly across them.
inline MobilityGraph permute_weights(const MobilityGraph &g, Rng &rng) {
    auto weights = g.weights();
    rng.shuffle(std::span<double>(weights));
    return g.with_weights(weights);
}

/// Edge e receives the original weight of edge `order[e]`.
inline MobilityGraph assign_weights(const MobilityGraph &g, std::span<const std::size_t> order) {
    const auto original = g.weights();
    if (order.size() != original.size()) throw GraphError("permutation size does not match edge count");
    std::vector<double> weights(order.size());
    for (std::size_t e = 0; e < order.size(); ++e) weights[e] = original.at(order[e]);
    return g.with_weights(weights);
}

/// n!, or nullopt when it exceeds `cap`.
inline std::optional<std::uint64_t> bounded_factorial(std::size_t n, std::uint64_t cap) {
    std::uint64_t f = 1;
    for (std::size_t k = 2; k <= n; ++k) {
        if (f > cap / k) return std::nullopt;
        f *= k;
    }
    return f <= cap ? std::optional<std::uint64_t>(f) : std::nullopt;
}

/// The `rank`-th permutation of 0..n-1 in lexicographic order (rank 0 is the identity).
inline std::vector<std::size_t> nth_permutation(std::size_t n, std::uint64_t rank) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::uint64_t> fact(n + 1, 1);
    for (std::size_t k = 1; k <= n; ++k) fact[k] = fact[k - 1] * k;
    if (n > 0 && rank >= fact[n]) throw Error("permutation rank out of range");
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t k = n; k > 0; --k) {
        std::uint64_t pick = rank / fact[k - 1];
        rank %= fact[k - 1];
        out.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
}

struct NullOptions {
    std::size_t replicates = 1000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    /// Enumerate all E! weight assignments instead of sampling; `replicates` is ignored.
    bool enumerate = false;
    std::uint64_t enumeration_cap = 5040;
    std::size_t max_retries = 8;
    SolverOptions solver{};
};

/// Replicate-by-vertex matrix of null stationary values, row-major.
struct NullDistribution {
    std::size_t replicates = 0;
    std::size_t vertices = 0;
    std::vector<double> samples;
    std::uint64_t seed = 0;
    bool enumerated = false;
    std::size_t retries = 0;

    std::span<const double> row(std::size_t b) const {
        return std::span<const double>(samples).subspan(b * vertices, vertices);
    }
    double at(std::size_t b, std::size_t v) const { return samples[b * vertices + v]; }
};

/**
 * Samples the permutation null: each replicate permutes the edge weights of
 * `g`, row-normalises and solves for the stationary distribution.
 *
 * Replicate b draws from substream(seed, b). A replicate whose solve fails is
 * retried on substream(seed, B + b * max_retries + attempt), so the result is
 * the same for any worker count.
 */
inline NullDistribution sample_null(const MobilityGraph &g, const NullOptions &options) {
    if (g.num_edges() == 0) throw GraphError("permutation null needs at least one edge");
    NullDistribution null;
    null.vertices = g.num_vertices();
    null.seed = options.seed;
    null.enumerated = options.enumerate;
    if (options.enumerate) {
        auto count = bounded_factorial(g.num_edges(), options.enumeration_cap);
        if (!count)
            throw Error("cannot enumerate " + std::to_string(g.num_edges()) + "! weight assignments (cap " +
                        std::to_string(options.enumeration_cap) + ")");
        null.replicates = static_cast<std::size_t>(*count);
    } else {
        if (options.replicates == 0) throw Error("at least one permutation replicate is required");
        null.replicates = options.replicates;
    }
    null.samples.assign(null.replicates * null.vertices, 0.0);

    const std::size_t B = null.replicates;
    std::vector<std::size_t> retries(B, 0);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto solve_into = [&](const MobilityGraph &permuted, std::size_t b) {
        auto pi = stationary(row_normalize(permuted), options.solver);
        std::copy(pi.values.begin(), pi.values.end(), null.samples.begin() + static_cast<std::ptrdiff_t>(b * null.vertices));
    };

    auto run_replicate = [&](std::size_t b) {
        if (options.enumerate) {
            solve_into(assign_weights(g, nth_permutation(g.num_edges(), b)), b);
            return;
        }
        for (std::size_t attempt = 0;; ++attempt) {
            Rng rng = attempt == 0 ? substream(options.seed, b)
                                   : substream(options.seed, B + b * options.max_retries + (attempt - 1));
            try {
                solve_into(permute_weights(g, rng), b);
                return;
            } catch (const SolverError &) {
                if (attempt >= options.max_retries) throw;
                ++retries[b];
            }
        }
    };

    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            std::size_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= B) return;
            try {
                run_replicate(b);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, B);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
    null.retries = std::accumulate(retries.begin(), retries.end(), std::size_t{0});
    return null;
}

enum class TailEstimator {
    plus_one, ///< (1 + #{b : null >= observed}) / (B + 1), for sampled nulls
    exact,    ///< #{b : null >= observed} / B, for enumerated nulls (the observed assignment is one of them)
};

struct TailProbabilities {
    std::vector<double> p;
    std::vector<std::size_t> exceed_counts;
    std::size_t replicates = 0;
    TailEstimator estimator = TailEstimator::plus_one;
};

/**
 * Per-vertex probability that a null stationary value meets or exceeds the
 * observed one. Null values within `tie_tolerance` (relative) below the
 * observed value count as ties: chains with exactly equal stationary values
 * are solved to within a few ulps of each other, not bit-identically.
 */
inline TailProbabilities tail_probabilities(std::span<const double> pi, const NullDistribution &null,
                                            double tie_tolerance = 1e-12) {
    if (pi.size() != null.vertices) throw Error("stationary vector and null distribution differ in size");
    if (null.replicates == 0) throw Error("empty null distribution");
    TailProbabilities out;
    out.replicates = null.replicates;
    out.estimator = null.enumerated ? TailEstimator::exact : TailEstimator::plus_one;
    out.exceed_counts.assign(pi.size(), 0);
    std::vector<double> threshold(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) threshold[i] = pi[i] - tie_tolerance * std::abs(pi[i]);
    for (std::size_t b = 0; b < null.replicates; ++b) {
        auto row = null.row(b);
        for (std::size_t i = 0; i < pi.size(); ++i)
            if (row[i] >= threshold[i]) ++out.exceed_counts[i];
    }
    out.p.resize(pi.size());
    const auto B = static_cast<double>(null.replicates);
    for (std::size_t i = 0; i < pi.size(); ++i) {
        const auto c = static_cast<double>(out.exceed_counts[i]);
        out.p[i] = out.estimator == TailEstimator::exact ? c / B : (1.0 + c) / (B + 1.0);
    }
    return out;
}

/// Type-7 (linear interpolation) quantile of one vertex's null column.
inline double null_quantile(const NullDistribution &null, std::size_t vertex, double q) {
    if (vertex >= null.vertices || null.replicates == 0) throw Error("null quantile out of range");
    std::vector<double> column(null.replicates);
    for (std::size_t b = 0; b < null.replicates; ++b) column[b] = null.at(b, vertex);
    std::sort(column.begin(), column.end());
    const double h = (static_cast<double>(column.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, column.size() - 1);
    return column[lo] + (h - static_cast<double>(lo)) * (column[hi] - column[lo]);
}

enum class FdrMethod { bh, by, bonferroni };

inline const char *to_string(FdrMethod m) noexcept {
    switch (m) {
    case FdrMethod::bh: return "bh";
    case FdrMethod::by: return "by";
    case FdrMethod::bonferroni: return "bonferroni";
    }
    return "unknown";
}

/**
 * Multiple-testing adjustment. BH is the step-up rule
 * adj_(i) = min(1, min_{j >= i} p_(j) m / j); BY scales it by sum_{k<=m} 1/k;
 * Bonferroni is min(1, p m).
 */
inline std::vector<double> adjust_pvalues(std::span<const double> p, FdrMethod method) {
    const std::size_t m = p.size();
    for (double v : p)
        if (!(v > 0.0 && v <= 1.0)) throw Error("p-value outside (0, 1]: " + std::to_string(v));
    std::vector<double> adjusted(m);
    if (m == 0) return adjusted;
    const auto md = static_cast<double>(m);

    if (method == FdrMethod::bonferroni) {
        for (std::size_t i = 0; i < m; ++i) adjusted[i] = std::min(1.0, p[i] * md);
        return adjusted;
    }
    double scale = 1.0;
    if (method == FdrMethod::by) {
        scale = 0.0;
        for (std::size_t k = 1; k <= m; ++k) scale += 1.0 / static_cast<double>(k);
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        // The factor is formed first so that r + 1 == m gives p unchanged.
        running = std::min(running, p[order[r]] * (md * scale / static_cast<double>(r + 1)));
        adjusted[order[r]] = running;
    }
    return adjusted;
}

inline std::vector<double> bh_adjust(std::span<const double> p) { return adjust_pvalues(p, FdrMethod::bh); }

/// Vertices by descending pi; equal values keep zone-id order.
inline std::vector<VertexId> stationary_order(std::span<const double> pi) {
    std::vector<VertexId> order(pi.size());
    std::iota(order.begin(), order.end(), VertexId{0});
    std::stable_sort(order.begin(), order.end(), [&](VertexId a, VertexId b) { return pi[a] > pi[b]; });
    return order;
}

struct LocusRecord {
    VertexId vertex = 0;
    std::size_t rank = 0; // 1-based position in the pi ordering
    double pi = 0.0;
    double raw_p = 1.0;
    std::optional<double> adjusted_p; // set for the top k_star vertices
    bool is_locus = false;
};

struct LociReport {
    double alpha = 0.05;
    FdrMethod method = FdrMethod::bh;
    std::size_t k_star = 1;
    std::size_t num_loci = 0;
    std::vector<std::size_t> significant_by_k; // entry k-1: significant count among the top k
    std::vector<LocusRecord> records;          // in pi order
};

inline void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
}

/**
 * Max-k selection. For each prefix of the pi ordering, the raw tail
 * probabilities of that prefix are adjusted together and the entries with
 * adjusted p < alpha are counted. k_star is the smallest k with the largest
 * count; loci are the vertices in the top k_star whose adjusted p < alpha.
 */
inline LociReport select_loci(std::span<const double> pi, const TailProbabilities &tails, double alpha,
                              FdrMethod method = FdrMethod::bh) {
    require_alpha(alpha);
    if (pi.size() != tails.p.size()) throw Error("stationary vector and tail probabilities differ in size");
    const std::size_t n = pi.size();
    LociReport report;
    report.alpha = alpha;
    report.method = method;
    if (n == 0) return report;

    const auto order = stationary_order(pi);
    std::vector<double> ordered_p(n);
    for (std::size_t r = 0; r < n; ++r) ordered_p[r] = tails.p[order[r]];

    report.significant_by_k.resize(n);
    std::size_t best = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        auto adjusted = adjust_pvalues(std::span<const double>(ordered_p).first(k), method);
        auto count = static_cast<std::size_t>(std::count_if(adjusted.begin(), adjusted.end(), [&](double q) { return q < alpha; }));
        report.significant_by_k[k - 1] = count;
        if (k == 1 || count > best) {
            best = count;
            report.k_star = k;
        }
    }

    const auto adjusted = adjust_pvalues(std::span<const double>(ordered_p).first(report.k_star), method);
    report.records.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        LocusRecord &rec = report.records[r];
        rec.vertex = order[r];
        rec.rank = r + 1;
        rec.pi = pi[order[r]];
        rec.raw_p = ordered_p[r];
        if (r < report.k_star) {
            rec.adjusted_p = adjusted[r];
            rec.is_locus = adjusted[r] < alpha;
        }
        if (rec.is_locus) ++report.num_loci;
    }
    return report;
}

/// Single-test rule: flag_i = (p_i <= alpha), before any adjustment.
inline std::vector<bool> unadjusted_locus_flags(const TailProbabilities &tails, double alpha) {
    require_alpha(alpha);
    std::vector<bool> flags(tails.p.size());
    for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = tails.p[i] <= alpha;
    return flags;
}

// Binary null file: "MLNULL1\0", B and n as little-endian u64, then B*n
// little-endian IEEE-754 doubles, row-major.

inline constexpr std::array<char, 8> null_file_magic{'M', 'L', 'N', 'U', 'L', 'L', '1', '\0'};

namespace detail {

inline void put_u64_le(std::ostream &out, std::uint64_t v) {
    char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
    out.write(bytes, 8);
}

inline std::uint64_t get_u64_le(std::istream &in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char *>(bytes), 8)) throw ParseError(0, "truncated null file");
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
    return v;
}

} // namespace detail

inline void write_null_file(std::ostream &out, const NullDistribution &null) {
    out.write(null_file_magic.data(), null_file_magic.size());
    detail::put_u64_le(out, null.replicates);
    detail::put_u64_le(out, null.vertices);
    for (double v : null.samples) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

/// Loaded nulls carry no seed and are treated as sampled.
inline NullDistribution read_null_file(std::istream &in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != null_file_magic) throw ParseError(0, "not a null sample file");
    NullDistribution null;
    null.replicates = detail::get_u64_le(in);
    null.vertices = detail::get_u64_le(in);
    if (null.replicates == 0) throw ParseError(0, "null file holds no replicates");
    null.samples.resize(null.replicates * null.vertices);
    for (double &v : null.samples) v = std::bit_cast<double>(detail::get_u64_le(in));
    return null;
}

} // namespace mobloci
