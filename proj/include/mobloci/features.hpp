#pragma once

// Local comparison features and their linear association with the
// stationary distribution.

#include "mobloci/error.hpp"
#include "mobloci/graph.hpp"
#include "mobloci/ingest.hpp"
#include "mobloci/mobility_graph.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobloci {

struct FeatureRow {
    double in_degree = 0.0;
    double weighted_in_degree = 0.0;
    double total_incoming = 0.0; // commuters whose trajectory ends here
    double total_traffic = 0.0;  // commuters whose trajectory visits here at least once
};

struct FeatureTable {
    std::vector<ZoneId> zones; // same order as the graph's vertices
    std::vector<FeatureRow> rows;
    bool has_trajectory_features = false;
};

/// Degree features only (edge-list input).
inline FeatureTable comparison_features(const MobilityGraph &g) {
    FeatureTable table;
    table.zones = g.zones();
    table.rows.resize(g.num_vertices());
    const auto degrees = degree_features(g);
    for (std::size_t v = 0; v < degrees.size(); ++v) {
        table.rows[v].in_degree = static_cast<double>(degrees[v].in_degree);
        table.rows[v].weighted_in_degree = degrees[v].weighted_in;
    }
    return table;
}

/**
 * Degree features from `g` plus the two trajectory features. Trajectories
 * may pass through zones outside `g`; only zones of `g` are reported. A
 * single-zone trajectory counts as both ending at and visiting its zone.
 */
inline FeatureTable comparison_features(const MobilityGraph &g, const TrajectorySet &trajs) {
    FeatureTable table = comparison_features(g);
    table.has_trajectory_features = true;
    std::vector<VertexId> visited;
    for (const Trajectory &t : trajs.trajectories) {
        if (t.zones.empty()) continue;
        const auto count = static_cast<double>(t.count);
        if (auto last = g.index_of(t.zones.back())) table.rows[*last].total_incoming += count;
        visited.clear();
        for (const ZoneId &z : t.zones)
            if (auto v = g.index_of(z)) visited.push_back(*v);
        std::sort(visited.begin(), visited.end());
        visited.erase(std::unique(visited.begin(), visited.end()), visited.end());
        for (VertexId v : visited) table.rows[v].total_traffic += count;
    }
    return table;
}

struct OlsFit {
    std::size_t n = 0;
    double slope = 0.0;
    double intercept = 0.0;
    double slope_std_error = 0.0;
    double slope_p_value = 1.0;
    double r_squared = 0.0;
    double adjusted_r_squared = 0.0;
    std::vector<double> fitted;
    std::vector<double> residuals;
};

namespace detail {

/// Two-sided p-value of a t statistic.
inline double t_test_p_value(double estimate, double std_error, double df) {
    if (std_error == 0.0) return estimate == 0.0 ? 1.0 : 0.0;
    const double t = std::abs(estimate / std_error);
    if (!std::isfinite(t)) return 0.0;
    boost::math::students_t dist(df);
    return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, t)), 0.0, 1.0);
}

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace detail

/// Simple linear regression y = intercept + slope x, t-test on the slope with n-2 df.
inline OlsFit ols_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("regression inputs differ in length");
    const std::size_t n = x.size();
    if (n < 3) throw Error("regression needs at least 3 observations");
    const double mx = detail::mean(x), my = detail::mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw Error("regressor is constant; slope is undefined");

    OlsFit fit;
    fit.n = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.fitted.resize(n);
    fit.residuals.resize(n);
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        fit.fitted[i] = fit.intercept + fit.slope * x[i];
        fit.residuals[i] = y[i] - fit.fitted[i];
        sse += fit.residuals[i] * fit.residuals[i];
    }
    const auto nd = static_cast<double>(n);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 0.0;
    fit.adjusted_r_squared = 1.0 - (1.0 - fit.r_squared) * (nd - 1.0) / (nd - 2.0);
    fit.slope_std_error = std::sqrt(sse / (nd - 2.0) / sxx);
    fit.slope_p_value = detail::t_test_p_value(fit.slope, fit.slope_std_error, nd - 2.0);
    return fit;
}

struct MultiFit {
    std::size_t n = 0;
    std::vector<double> coefficients; // intercept first
    std::vector<double> p_values;
    double r_squared = 0.0;
    double adjusted_r_squared = 0.0;
    std::vector<double> fitted;
    std::vector<double> residuals;
};

/// Least squares with an intercept and several predictors (column-pivoted QR).
inline MultiFit ols_multi(const std::vector<std::span<const double>> &predictors, std::span<const double> y) {
    const std::size_t n = y.size();
    const std::size_t p = predictors.size();
    if (p == 0) throw Error("no predictors");
    if (n < p + 2) throw Error("too few observations for " + std::to_string(p) + " predictors");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    Eigen::VectorXd Y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        X(row, 0) = 1.0;
        for (std::size_t k = 0; k < p; ++k) {
            if (predictors[k].size() != n) throw Error("regression inputs differ in length");
            X(row, static_cast<Eigen::Index>(k + 1)) = predictors[k][i];
        }
        Y(row) = y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < static_cast<Eigen::Index>(p + 1)) throw Error("predictors are collinear or constant");
    const Eigen::VectorXd beta = qr.solve(Y);
    const Eigen::VectorXd fitted = X * beta;
    const Eigen::VectorXd resid = Y - fitted;

    MultiFit fit;
    fit.n = n;
    const double my = detail::mean(y);
    double syy = 0.0;
    for (double v : y) syy += (v - my) * (v - my);
    const double sse = resid.squaredNorm();
    const auto nd = static_cast<double>(n), pd = static_cast<double>(p);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 0.0;
    fit.adjusted_r_squared = 1.0 - (1.0 - fit.r_squared) * (nd - 1.0) / (nd - pd - 1.0);
    const double sigma2 = sse / (nd - pd - 1.0);
    const Eigen::MatrixXd cov = (X.transpose() * X).inverse() * sigma2;
    for (std::size_t k = 0; k <= p; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        fit.coefficients.push_back(beta(kk));
        fit.p_values.push_back(detail::t_test_p_value(beta(kk), std::sqrt(std::max(cov(kk, kk), 0.0)), nd - pd - 1.0));
    }
    fit.fitted.assign(fitted.data(), fitted.data() + fitted.size());
    fit.residuals.assign(resid.data(), resid.data() + resid.size());
    return fit;
}

enum class Response { sqrt_pi, pi };

inline const char *to_string(Response r) noexcept { return r == Response::sqrt_pi ? "sqrt_pi" : "pi"; }

struct AssociationRow {
    std::string feature;
    Response response = Response::sqrt_pi;
    std::optional<OlsFit> fit; // empty when skipped as undefined
    std::string note;
};

struct AssociationReport {
    std::vector<AssociationRow> rows;
    std::optional<MultiFit> joint_sqrt_pi; // total_incoming + total_traffic
    std::optional<MultiFit> joint_pi;
    std::optional<OlsFit> incoming_on_traffic; // total_incoming ~ total_traffic
    std::string joint_note;
};

struct AssociationOptions {
    /// Record undefined fits (constant feature, n < 3) instead of throwing.
    bool skip_undefined = false;
};

inline std::vector<double> feature_column(const FeatureTable &t, double FeatureRow::*field) {
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (const FeatureRow &r : t.rows) out.push_back(r.*field);
    return out;
}

/**
 * One simple regression per comparison feature against sqrt(pi) and against
 * pi, plus the joint trajectory-feature model when trajectory features exist.
 */
inline AssociationReport association_report(const FeatureTable &features, std::span<const double> pi,
                                            const AssociationOptions &options = {}) {
    if (features.rows.size() != pi.size()) throw Error("feature table and stationary vector differ in size");
    std::vector<double> sqrt_pi(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) sqrt_pi[i] = std::sqrt(pi[i]);

    struct Named {
        const char *name;
        double FeatureRow::*field;
    };
    std::vector<Named> names{{"in_degree", &FeatureRow::in_degree},
                             {"weighted_in_degree", &FeatureRow::weighted_in_degree}};
    if (features.has_trajectory_features) {
        names.push_back({"total_incoming", &FeatureRow::total_incoming});
        names.push_back({"total_traffic", &FeatureRow::total_traffic});
    }

    AssociationReport report;
    for (Response response : {Response::sqrt_pi, Response::pi}) {
        std::span<const double> y = response == Response::sqrt_pi ? std::span<const double>(sqrt_pi) : pi;
        for (const Named &named : names) {
            AssociationRow row{named.name, response, std::nullopt, {}};
            const auto x = feature_column(features, named.field);
            try {
                row.fit = ols_fit(x, y);
            } catch (const Error &e) {
                if (!options.skip_undefined) throw;
                row.note = e.what();
            }
            report.rows.push_back(std::move(row));
        }
    }

    if (features.has_trajectory_features) {
        const auto incoming = feature_column(features, &FeatureRow::total_incoming);
        const auto traffic = feature_column(features, &FeatureRow::total_traffic);
        const std::vector<std::span<const double>> predictors{incoming, traffic};
        try {
            report.joint_sqrt_pi = ols_multi(predictors, sqrt_pi);
            report.joint_pi = ols_multi(predictors, pi);
            report.incoming_on_traffic = ols_fit(traffic, incoming);
        } catch (const Error &e) {
            if (!options.skip_undefined) throw;
            report.joint_note = e.what();
        }
    }
    return report;
}

} // namespace mobloci
