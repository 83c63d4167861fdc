#include "mobloci/graph.hpp"
#include "mobloci/markov.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace mobloci;

namespace {

MobilityGraph graph(std::vector<std::tuple<ZoneId, ZoneId, double>> edges) {
    GraphBuilder b;
    for (const auto &[f, t, w] : edges) b.add_weight(f, t, w);
    return b.build();
}

MobilityGraph uniform_cycle(std::size_t n, double weight = 1.0) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) edges.push_back({static_cast<VertexId>(i), static_cast<VertexId>((i + 1) % n), weight});
    return MobilityGraph(testkit::zone_names(n), std::move(edges));
}

} // namespace

TEST(RowNormalize, Examples) {
    auto P = row_normalize(graph({{"A", "B", 3}, {"A", "C", 2}, {"B", "A", 1}, {"C", "A", 1}}));
    EXPECT_DOUBLE_EQ(P.at(0, 1), 0.6);
    EXPECT_DOUBLE_EQ(P.at(0, 2), 0.4);
    EXPECT_EQ(P.at(0, 0), 0.0);

    auto two = row_normalize(graph({{"A", "B", 7}, {"B", "A", 2}}));
    EXPECT_EQ(two.at(0, 1), 1.0);
    EXPECT_EQ(two.at(1, 0), 1.0);

    EXPECT_THROW(row_normalize(graph({{"A", "B", 1}})), GraphError);
}

TEST(RowNormalize, RowsSumToOneAndScaleInvariance) {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        auto g = testkit::random_strong_digraph(2 + rng.uniform_below(30), 0.2, rng, 10000);
        auto P = row_normalize(g);
        for (std::size_t i = 0; i < P.size(); ++i) {
            auto vals = P.row_values(i);
            EXPECT_NEAR(std::accumulate(vals.begin(), vals.end(), 0.0), 1.0, 1e-12);
        }
        const double c = 0.001 + 1000.0 * rng.uniform();
        std::vector<double> scaled = g.weights();
        for (double &w : scaled) w *= c;
        auto Q = row_normalize(g.with_weights(scaled));
        for (std::size_t i = 0; i < P.size(); ++i)
            for (std::size_t k = 0; k < P.row_values(i).size(); ++k)
                EXPECT_NEAR(P.row_values(i)[k], Q.row_values(i)[k], 1e-14);
        auto pi_p = stationary(P), pi_q = stationary(Q);
        for (std::size_t v = 0; v < P.size(); ++v) EXPECT_NEAR(pi_p.values[v], pi_q.values[v], 1e-12);
    }
}

TEST(TransitionMatrix, FromDenseValidates) {
    EXPECT_THROW(TransitionMatrix::from_dense({{0.5, 0.4}, {0, 1}}), GraphError);
    EXPECT_THROW(TransitionMatrix::from_dense({{1.5, -0.5}, {0, 1}}), GraphError);
    EXPECT_THROW(TransitionMatrix::from_dense({{1.0}, {0, 1}}), GraphError);
}

TEST(CheckAperiodic, Examples) {
    auto two = check_aperiodic(row_normalize(graph({{"A", "B", 1}, {"B", "A", 1}})));
    EXPECT_EQ(two.period, 2u);
    EXPECT_FALSE(two.aperiodic);

    auto mixed = check_aperiodic(
        row_normalize(graph({{"A", "B", 1}, {"B", "C", 1}, {"C", "A", 1}, {"A", "C", 1}})));
    EXPECT_EQ(mixed.period, 1u);
    EXPECT_TRUE(mixed.aperiodic);

    EXPECT_EQ(check_aperiodic(row_normalize(uniform_cycle(6))).period, 6u);
    EXPECT_EQ(check_aperiodic(row_normalize(uniform_cycle(6)), PeriodMethod::matrix_power).period, 6u);
}

TEST(CheckAperiodic, RejectsReducible) {
    auto P = TransitionMatrix::from_dense({{0.5, 0.5}, {0.0, 1.0}});
    EXPECT_THROW(check_aperiodic(P), GraphError);
    EXPECT_THROW(check_aperiodic(P, PeriodMethod::matrix_power), GraphError);
}

TEST(CheckAperiodic, BfsMatchesMatrixPowerOracle) {
    Rng rng(17);
    int periodic = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.uniform_below(8);
        // Sparse extras keep periodic chains in the mix.
        auto g = testkit::random_strong_digraph(std::max<std::size_t>(n, 2), 0.08 * rng.uniform(), rng);
        auto P = row_normalize(g);
        auto bfs = check_aperiodic(P);
        const std::size_t oracle = testkit::matrix_power_period(P);
        EXPECT_EQ(bfs.period, oracle);
        EXPECT_EQ(check_aperiodic(P, PeriodMethod::matrix_power).period, oracle);
        EXPECT_EQ(bfs.aperiodic, oracle == 1);
        periodic += oracle > 1;
    }
    EXPECT_GT(periodic, 10);
}

TEST(Stationary, UniformOnSymmetricCycles) {
    for (std::size_t n : {2, 3, 5, 17}) {
        auto pi = stationary(row_normalize(uniform_cycle(n, 4.0)));
        for (double v : pi.values) EXPECT_NEAR(v, 1.0 / static_cast<double>(n), 1e-12);
    }
}

TEST(Stationary, TwoStateHandSolution) {
    // pi0 = 0.25 pi1 and pi0 + pi1 = 1.
    auto P = TransitionMatrix::from_dense({{0.0, 1.0}, {0.25, 0.75}});
    auto pi = stationary(P);
    EXPECT_NEAR(pi.values[0], 0.2, 1e-15);
    EXPECT_NEAR(pi.values[1], 0.8, 1e-15);
    EXPECT_LE(pi.residual, 1e-10);
}

TEST(Stationary, SingleStateAndBadTolerance) {
    auto P = TransitionMatrix::from_dense({{1.0}});
    EXPECT_EQ(stationary(P).values, std::vector<double>{1.0});
    EXPECT_THROW(stationary(P, {.tolerance = 0.0}), SolverError);
}

TEST(Stationary, MatchesNullSpaceAndPowerOracle) {
    Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_below(7);
        auto P = testkit::random_irreducible_matrix(n, rng.uniform(), rng);
        auto pi = stationary(P);
        auto kernel = testkit::null_space_stationary(P);
        auto power = stationary_power_oracle(P, 1e-14);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_NEAR(pi.values[i], kernel[i], 1e-10);
            EXPECT_NEAR(pi.values[i], power.values[i], 1e-8);
            EXPECT_GE(pi.values[i], 0.0);
            sum += pi.values[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-10);
        EXPECT_LE(pi.residual, 1e-10);
        EXPECT_NEAR(balance_residual(P, pi.values), pi.residual, 1e-15);
    }
}

TEST(Stationary, AllSolverPathsAgree) {
    Rng rng(5150);
    for (int trial = 0; trial < 10; ++trial) {
        auto P = row_normalize(testkit::random_strong_digraph(40 + rng.uniform_below(40), 0.05, rng));
        auto dense = stationary(P);
        auto sparse = stationary(P, {.dense_threshold = 0});
        auto iterative = stationary(P, {.dense_threshold = 0, .direct_threshold = 0});
        EXPECT_EQ(dense.method, SolverMethod::dense_lu);
        EXPECT_EQ(sparse.method, SolverMethod::sparse_lu);
        EXPECT_EQ(iterative.method, SolverMethod::iterative);
        for (std::size_t i = 0; i < P.size(); ++i) {
            EXPECT_NEAR(dense.values[i], sparse.values[i], 1e-12);
            EXPECT_NEAR(dense.values[i], iterative.values[i], 1e-9);
        }
    }
}

TEST(Stationary, LargeSparseChain) {
    Rng rng(77);
    auto g = testkit::random_strong_digraph(3000, 0.001, rng);
    auto P = row_normalize(g);
    auto pi = stationary(P);
    EXPECT_EQ(pi.method, SolverMethod::sparse_lu);
    EXPECT_LE(pi.residual, 1e-10);
}

TEST(PowerOracle, CesaroStyleAveraging) {
    auto two = stationary_power_oracle(TransitionMatrix::from_dense({{0, 1}, {1, 0}}));
    EXPECT_NEAR(two.values[0], 0.5, 1e-12);
    EXPECT_NEAR(two.values[1], 0.5, 1e-12);

    // Period 2, non-uniform limit.
    auto per = stationary_power_oracle(TransitionMatrix::from_dense({{0, 1, 0}, {0.5, 0, 0.5}, {0, 1, 0}}));
    EXPECT_NEAR(per.values[0], 0.25, 1e-10);
    EXPECT_NEAR(per.values[1], 0.5, 1e-10);

    auto cycle = stationary_power_oracle(row_normalize(uniform_cycle(5)));
    for (double v : cycle.values) EXPECT_NEAR(v, 0.2, 1e-12);

    EXPECT_THROW(stationary_power_oracle(TransitionMatrix::from_dense({{0.1, 0.9}, {0.6, 0.4}}), 1e-300, 10),
                 SolverError);
}
