#pragma once

#include "mobloci/error.hpp"
#include "mobloci/mobility_graph.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

namespace mobloci {

/**
 * Row-stochastic transition matrix in compressed sparse row form.
 *
 * Row i holds the probabilities of moving from zone `index()[i]` to each of
 * its successors. Every row sums to 1 within `row_sum_tolerance`.
 */
class TransitionMatrix {
public:
    static constexpr double row_sum_tolerance = 1e-12;

    TransitionMatrix() = default;

    TransitionMatrix(std::vector<ZoneId> index, std::vector<std::size_t> row_offsets, std::vector<VertexId> columns,
                     std::vector<double> values)
        : index_(std::move(index)), offsets_(std::move(row_offsets)), columns_(std::move(columns)),
          values_(std::move(values)) {
        const std::size_t n = index_.size();
        if (offsets_.size() != n + 1 || offsets_.front() != 0 || offsets_.back() != columns_.size() ||
            columns_.size() != values_.size())
            throw GraphError("malformed transition matrix storage");
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) {
                if (columns_[k] >= n) throw GraphError("transition column out of range");
                if (!(values_[k] >= 0.0 && values_[k] <= 1.0)) throw GraphError("transition probability outside [0,1]");
                sum += values_[k];
            }
            if (std::abs(sum - 1.0) > row_sum_tolerance)
                throw GraphError("row '" + index_[i] + "' does not sum to 1");
        }
    }

    /// Builds from a dense row-major matrix; zero entries are dropped.
    static TransitionMatrix from_dense(const std::vector<std::vector<double>> &rows, std::vector<ZoneId> index = {}) {
        const std::size_t n = rows.size();
        if (index.empty())
            for (std::size_t i = 0; i < n; ++i) index.push_back(std::to_string(i));
        if (index.size() != n) throw GraphError("index size does not match matrix size");
        std::vector<std::size_t> offsets{0};
        std::vector<VertexId> cols;
        std::vector<double> vals;
        for (const auto &row : rows) {
            if (row.size() != n) throw GraphError("transition matrix must be square");
            for (std::size_t j = 0; j < n; ++j)
                if (row[j] != 0.0) {
                    cols.push_back(static_cast<VertexId>(j));
                    vals.push_back(row[j]);
                }
            offsets.push_back(cols.size());
        }
        return TransitionMatrix(std::move(index), std::move(offsets), std::move(cols), std::move(vals));
    }

    std::size_t size() const noexcept { return index_.size(); }
    std::size_t nonzeros() const noexcept { return values_.size(); }
    const std::vector<ZoneId> &index() const noexcept { return index_; }

    std::span<const VertexId> row_columns(std::size_t i) const {
        return std::span<const VertexId>(columns_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
    }
    std::span<const double> row_values(std::size_t i) const {
        return std::span<const double>(values_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
    }

    double at(std::size_t i, std::size_t j) const {
        auto cols = row_columns(i);
        auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<VertexId>(j));
        if (it == cols.end() || *it != j) return 0.0;
        return row_values(i)[static_cast<std::size_t>(it - cols.begin())];
    }

    /// Row vector times matrix: out_j = sum_i v_i P_ij.
    std::vector<double> left_multiply(std::span<const double> v) const {
        std::vector<double> out(size(), 0.0);
        for (std::size_t i = 0; i < size(); ++i) {
            const double vi = v[i];
            for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) out[columns_[k]] += vi * values_[k];
        }
        return out;
    }

private:
    std::vector<ZoneId> index_;
    std::vector<std::size_t> offsets_;
    std::vector<VertexId> columns_;
    std::vector<double> values_;
};

/// P(i, j) = weight(i, j) / out-weight(i). Throws on a vertex with no out-edges.
inline TransitionMatrix row_normalize(const MobilityGraph &g) {
    const std::size_t n = g.num_vertices();
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<double> row_sum(n, 0.0);
    for (const Edge &e : g.edges()) {
        ++offsets[e.from + 1];
        row_sum[e.from] += e.weight;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (offsets[i + 1] == 0)
            throw GraphError("zone '" + g.zone(static_cast<VertexId>(i)) +
                             "' has no outgoing weight; restrict the graph to a strong component first");
        offsets[i + 1] += offsets[i];
    }
    std::vector<VertexId> cols;
    std::vector<double> vals;
    cols.reserve(g.num_edges());
    vals.reserve(g.num_edges());
    for (const Edge &e : g.edges()) {
        cols.push_back(e.to);
        vals.push_back(e.weight / row_sum[e.from]);
    }
    return TransitionMatrix(g.zones(), std::move(offsets), std::move(cols), std::move(vals));
}

enum class PeriodMethod { bfs_gcd, matrix_power };

inline const char *to_string(PeriodMethod m) noexcept { return m == PeriodMethod::bfs_gcd ? "bfs_gcd" : "matrix_power"; }

struct PeriodicityReport {
    bool aperiodic = true;
    std::size_t period = 1;
    PeriodMethod method = PeriodMethod::bfs_gcd;
};

namespace detail {

inline std::vector<std::size_t> bfs_levels(const TransitionMatrix &P, bool reversed) {
    const std::size_t n = P.size();
    constexpr std::size_t unreached = static_cast<std::size_t>(-1);
    std::vector<std::vector<VertexId>> rev;
    if (reversed) {
        rev.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            for (VertexId j : P.row_columns(i)) rev[j].push_back(static_cast<VertexId>(i));
    }
    std::vector<std::size_t> level(n, unreached);
    std::queue<std::size_t> queue;
    level[0] = 0;
    queue.push(0);
    while (!queue.empty()) {
        std::size_t u = queue.front();
        queue.pop();
        auto visit = [&](std::size_t v) {
            if (level[v] == unreached) {
                level[v] = level[u] + 1;
                queue.push(v);
            }
        };
        if (reversed)
            for (VertexId v : rev[u]) visit(v);
        else
            for (VertexId v : P.row_columns(u)) visit(v);
    }
    return level;
}

inline void require_irreducible(const TransitionMatrix &P) {
    if (P.size() == 0) throw GraphError("empty transition matrix");
    for (bool reversed : {false, true})
        for (std::size_t l : bfs_levels(P, reversed))
            if (l == static_cast<std::size_t>(-1)) throw GraphError("transition matrix is reducible");
}

} // namespace detail

/**
 * Period of an irreducible chain: the gcd of all directed cycle lengths.
 *
 * `bfs_gcd` labels vertices with BFS depth from vertex 0 and takes the gcd of
 * depth(u) + 1 - depth(v) over every edge u -> v. `matrix_power` evaluates
 * the definition directly from the diagonals of P^m for m = 1..n, and is
 * only practical for small matrices.
 */
inline PeriodicityReport check_aperiodic(const TransitionMatrix &P, PeriodMethod method = PeriodMethod::bfs_gcd) {
    detail::require_irreducible(P);
    const std::size_t n = P.size();
    std::size_t g = 0;

    if (method == PeriodMethod::bfs_gcd) {
        const auto level = detail::bfs_levels(P, false);
        for (std::size_t u = 0; u < n; ++u)
            for (VertexId v : P.row_columns(u)) {
                auto diff = static_cast<long long>(level[u]) + 1 - static_cast<long long>(level[v]);
                g = std::gcd(g, static_cast<std::size_t>(diff < 0 ? -diff : diff));
            }
    } else {
        std::vector<char> adj(n * n, 0), power(n * n, 0), next(n * n, 0);
        for (std::size_t i = 0; i < n; ++i)
            for (VertexId j : P.row_columns(i)) adj[i * n + j] = 1;
        power = adj;
        for (std::size_t m = 1; m <= n; ++m) {
            for (std::size_t i = 0; i < n; ++i)
                if (power[i * n + i]) g = std::gcd(g, m);
            if (m == n) break;
            std::fill(next.begin(), next.end(), 0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < n; ++k)
                    if (power[i * n + k])
                        for (VertexId j : P.row_columns(k)) next[i * n + j] = 1;
            std::swap(power, next);
        }
    }
    if (g == 0) throw GraphError("chain has no cycles");
    return {g == 1, g, method};
}

enum class SolverMethod { dense_lu, sparse_lu, iterative, power };

inline const char *to_string(SolverMethod m) noexcept {
    switch (m) {
    case SolverMethod::dense_lu: return "dense_lu";
    case SolverMethod::sparse_lu: return "sparse_lu";
    case SolverMethod::iterative: return "bicgstab";
    case SolverMethod::power: return "power";
    }
    return "unknown";
}

struct SolverOptions {
    double tolerance = 1e-10;
    std::size_t dense_threshold = 256;      // dense LU at or below this size
    std::size_t direct_threshold = 20000;   // sparse LU at or below, iterative above
    std::size_t max_iterations = 20000;     // iterative fallback only
};

struct StationaryDistribution {
    std::vector<double> values; // aligned with TransitionMatrix::index()
    double residual = 0.0;      // max_j |(pi P)_j - pi_j|
    SolverMethod method = SolverMethod::dense_lu;
};

inline double balance_residual(const TransitionMatrix &P, std::span<const double> pi) {
    const auto moved = P.left_multiply(pi);
    double worst = 0.0;
    for (std::size_t j = 0; j < pi.size(); ++j) worst = std::max(worst, std::abs(moved[j] - pi[j]));
    return worst;
}

namespace detail {

// Augmented balance system: rows 0..n-2 of (P^T - I), last row all ones; rhs e_{n-1}.
inline Eigen::SparseMatrix<double> augmented_sparse(const TransitionMatrix &P) {
    const std::size_t n = P.size();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(P.nonzeros() + 2 * n);
    const auto last = static_cast<VertexId>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        auto cols = P.row_columns(i);
        auto vals = P.row_values(i);
        for (std::size_t k = 0; k < cols.size(); ++k)
            if (cols[k] != last) triplets.emplace_back(static_cast<int>(cols[k]), static_cast<int>(i), vals[k]);
        if (i != last) triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), -1.0);
        triplets.emplace_back(static_cast<int>(last), static_cast<int>(i), 1.0);
    }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(triplets.begin(), triplets.end());
    A.makeCompressed();
    return A;
}

inline Eigen::MatrixXd augmented_dense(const TransitionMatrix &P) {
    const auto n = static_cast<Eigen::Index>(P.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        auto cols = P.row_columns(static_cast<std::size_t>(i));
        auto vals = P.row_values(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < cols.size(); ++k) A(cols[k], i) += vals[k];
        A(i, i) -= 1.0;
    }
    A.row(n - 1).setOnes();
    return A;
}

template <class Solve>
Eigen::VectorXd refine(Solve &&solve, const auto &A, const Eigen::VectorXd &b) {
    Eigen::VectorXd x = solve(b);
    for (int step = 0; step < 2; ++step) {
        Eigen::VectorXd r = b - A * x;
        if (r.lpNorm<Eigen::Infinity>() < 1e-15) break;
        x += solve(r);
    }
    return x;
}

} // namespace detail

/**
 * Stationary distribution pi of an irreducible chain, pi P = pi, sum(pi) = 1.
 *
 * One balance equation is replaced by the normalisation row and the square
 * system is factorised directly (dense or sparse LU by size), with BiCGSTAB
 * above `direct_threshold`. Tiny negative entries (above -tolerance) are
 * clamped to zero; anything more negative, a non-finite value, or a balance
 * residual above tolerance raises SolverError.
 */
inline StationaryDistribution stationary(const TransitionMatrix &P, const SolverOptions &options = {}) {
    const std::size_t n = P.size();
    if (n == 0) throw GraphError("empty transition matrix");
    if (!(options.tolerance > 0.0)) throw SolverError("tolerance must be positive");

    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    b(static_cast<Eigen::Index>(n - 1)) = 1.0;
    Eigen::VectorXd x;
    StationaryDistribution out;

    if (n <= options.dense_threshold) {
        out.method = SolverMethod::dense_lu;
        const Eigen::MatrixXd A = detail::augmented_dense(P);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
        x = detail::refine([&](const Eigen::VectorXd &rhs) { return Eigen::VectorXd(lu.solve(rhs)); }, A, b);
    } else if (n <= options.direct_threshold) {
        out.method = SolverMethod::sparse_lu;
        const auto A = detail::augmented_sparse(P);
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(A);
        if (lu.info() != Eigen::Success) throw SolverError("sparse LU factorisation failed: system is singular");
        x = detail::refine([&](const Eigen::VectorXd &rhs) { return Eigen::VectorXd(lu.solve(rhs)); }, A, b);
    } else {
        out.method = SolverMethod::iterative;
        const auto A = detail::augmented_sparse(P);
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> solver;
        solver.setTolerance(options.tolerance * 1e-3);
        solver.setMaxIterations(static_cast<Eigen::Index>(options.max_iterations));
        solver.compute(A);
        if (solver.info() != Eigen::Success) throw SolverError("iterative solver setup failed");
        Eigen::VectorXd guess = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
        x = solver.solveWithGuess(b, guess);
        if (solver.info() != Eigen::Success)
            throw SolverError("iterative solver did not converge in " + std::to_string(options.max_iterations) +
                              " iterations");
    }

    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = x(static_cast<Eigen::Index>(i));
        if (!std::isfinite(v)) throw SolverError("stationary solve produced non-finite values: system is singular");
        if (v < -options.tolerance) throw SolverError("stationary solve produced a negative probability");
        out.values[i] = std::max(v, 0.0);
    }
    const double sum = std::accumulate(out.values.begin(), out.values.end(), 0.0);
    for (double &v : out.values) v /= sum;
    out.residual = balance_residual(P, out.values);
    if (!(out.residual <= options.tolerance))
        throw SolverError("stationary residual " + std::to_string(out.residual) + " exceeds tolerance");
    return out;
}

/**
 * Reference solver by repeated averaging: v <- (v + vP) / 2 from the uniform
 * vector. Averaging with the previous iterate keeps periodic chains from
 * oscillating and leaves the fixed point unchanged. Stops once
 * max |vP - v| < tol.
 */
inline StationaryDistribution stationary_power_oracle(const TransitionMatrix &P, double tol = 1e-12,
                                                      std::size_t max_iter = 1'000'000) {
    const std::size_t n = P.size();
    if (n == 0) throw GraphError("empty transition matrix");
    std::vector<double> v(n, 1.0 / static_cast<double>(n));
    for (std::size_t it = 0; it < max_iter; ++it) {
        auto moved = P.left_multiply(v);
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) diff = std::max(diff, std::abs(moved[j] - v[j]));
        if (diff < tol) return {std::move(v), diff, SolverMethod::power};
        for (std::size_t j = 0; j < n; ++j) v[j] = 0.5 * (v[j] + moved[j]);
    }
    throw SolverError("power iteration did not converge in " + std::to_string(max_iter) + " iterations");
}

} // namespace mobloci
