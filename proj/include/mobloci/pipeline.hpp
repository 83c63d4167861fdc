#pragma once

// End-to-end runs behind the command-line tool: ingest, component selection,
// stationary solve, permutation test, loci selection and features, each
// writing plot-ready CSV tables plus a manifest into the output directory.

#include "mobloci/features.hpp"
#include "mobloci/format.hpp"
#include "mobloci/graph.hpp"
#include "mobloci/ingest.hpp"
#include "mobloci/loci.hpp"
#include "mobloci/markov.hpp"
#include "mobloci/version.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mobloci {

namespace fs = std::filesystem;

enum class InputFormat { trajectories, edges };
enum class DirectionChoice { morning, evening, both };
enum class Command { build, stationary, loci, features, report };

inline const char *to_string(InputFormat f) noexcept { return f == InputFormat::trajectories ? "traj" : "edges"; }

inline const char *to_string(DirectionChoice d) noexcept {
    switch (d) {
    case DirectionChoice::morning: return "morning";
    case DirectionChoice::evening: return "evening";
    case DirectionChoice::both: return "both";
    }
    return "unknown";
}

inline const char *to_string(Command c) noexcept {
    switch (c) {
    case Command::build: return "build";
    case Command::stationary: return "stationary";
    case Command::loci: return "loci";
    case Command::features: return "features";
    case Command::report: return "report";
    }
    return "unknown";
}

/// `largest`, or a 0-based index into the size-ordered component list.
struct ComponentSelector {
    std::optional<std::size_t> index;

    std::string describe() const { return index ? std::to_string(*index) : "largest"; }
};

struct RunConfig {
    std::vector<fs::path> inputs;
    InputFormat format = InputFormat::trajectories;
    DirectionChoice direction = DirectionChoice::morning;
    double alpha = 0.05;
    std::size_t permutations = 1000;
    std::optional<std::uint64_t> seed;
    double tolerance = 1e-10;
    fs::path out_dir = ".";
    ComponentSelector component;
    bool enumerate = false;
    FdrMethod fdr = FdrMethod::bh;
    std::size_t workers = 1; // does not affect results, so it is left out of the manifest
    std::size_t histogram_bins = 30;
    std::optional<fs::path> save_null;
    std::optional<fs::path> load_null;

    void validate() const {
        if (inputs.empty()) throw Error("no input files given");
        require_alpha(alpha);
        if (permutations < 1) throw Error("permutations must be at least 1");
        if (!(tolerance > 0.0)) throw Error("tolerance must be positive");
        if (histogram_bins < 1) throw Error("histogram bins must be at least 1");
        if (direction == DirectionChoice::both && (save_null || load_null))
            throw Error("--save-null/--load-null need a single direction");
    }
};

struct InputDigest {
    std::string path;
    std::string sha256;
    std::uint64_t bytes = 0;
};

inline std::string sha256_hex(const std::string &data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1)
        throw Error("sha256 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

inline std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path.string() + ": cannot open input file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Parsed inputs. Trajectories and `graph` are in the morning direction.
struct Dataset {
    std::optional<TrajectorySet> trajectories;
    MobilityGraph graph;
    std::vector<InputDigest> digests;
};

inline Dataset load_dataset(const RunConfig &config) {
    Dataset data;
    TrajectorySet all;
    GraphBuilder merged;
    for (const fs::path &path : config.inputs) {
        const std::string text = read_file(path);
        data.digests.push_back({path.generic_string(), sha256_hex(text), text.size()});
        std::istringstream in(text);
        try {
            if (config.format == InputFormat::trajectories) {
                auto part = parse_trajectories(in);
                for (auto &t : part.trajectories) all.trajectories.push_back(std::move(t));
            } else {
                MobilityGraph part = parse_edge_list(in);
                for (const Edge &e : part.edges()) {
                    if (merged.contains_edge(part.zone(e.from), part.zone(e.to)))
                        throw ParseError(0, "duplicate edge '" + part.zone(e.from) + "' -> '" + part.zone(e.to) +
                                                "' across input files");
                    merged.add_weight(part.zone(e.from), part.zone(e.to), e.weight);
                }
            }
        } catch (const Error &e) {
            throw Error(path.string() + ": " + e.what());
        }
    }
    if (config.format == InputFormat::trajectories) {
        data.graph = aggregate(all);
        data.trajectories = std::move(all);
    } else {
        data.graph = merged.build();
    }
    if (data.graph.num_vertices() == 0) {
        std::string names;
        for (const auto &p : config.inputs) names += (names.empty() ? "" : ", ") + p.string();
        throw Error(names + ": input contains no zones");
    }
    return data;
}

/// One commute direction: its graph, partition and the component under analysis.
struct DirectionView {
    Direction direction = Direction::morning;
    std::optional<TrajectorySet> trajectories;
    MobilityGraph graph;
    ComponentPartition partition;
    std::size_t component_index = 0;
    MobilityGraph component;
};

/// Evening views reverse trajectories when present and transpose edge lists otherwise.
inline DirectionView analyze_direction(const Dataset &data, Direction direction, const ComponentSelector &selector) {
    DirectionView view;
    view.direction = direction;
    if (direction == Direction::morning) {
        view.trajectories = data.trajectories;
        view.graph = data.graph;
    } else if (data.trajectories) {
        view.trajectories = reverse(*data.trajectories);
        view.graph = aggregate(*view.trajectories);
    } else {
        view.graph = transpose(data.graph);
    }
    view.partition = strong_components(view.graph);
    view.component_index = selector.index.value_or(0);
    if (view.component_index >= view.partition.size())
        throw Error("component " + std::to_string(view.component_index) + " requested but the " +
                    to_string(direction) + " graph has " + std::to_string(view.partition.size()) + " components");
    view.component = induced_subgraph(view.graph, view.partition.components[view.component_index]);
    return view;
}

/// Files written by one command; removed again unless the command commits.
class OutputSet {
public:
    OutputSet() = default;
    OutputSet(const OutputSet &) = delete;
    OutputSet &operator=(const OutputSet &) = delete;

    ~OutputSet() {
        if (committed_) return;
        std::error_code ec;
        for (auto it = written_.rbegin(); it != written_.rend(); ++it) fs::remove(*it, ec);
    }

    void write(const fs::path &path, const std::string &content) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        written_.push_back(path);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) throw Error(path.string() + ": write failed");
    }

    void commit() noexcept { committed_ = true; }
    const std::vector<fs::path> &written() const noexcept { return written_; }

private:
    std::vector<fs::path> written_;
    bool committed_ = false;
};

struct StationaryResult {
    TransitionMatrix transition;
    StationaryDistribution pi;
    PeriodicityReport periodicity;
};

struct LociResult {
    NullDistribution null;
    TailProbabilities tails;
    LociReport report;
    std::vector<bool> unadjusted;
};

namespace detail {

using Json = nlohmann::ordered_json;

class Csv {
public:
    explicit Csv(const std::string &header) { out_ << header << '\n'; }

    template <class... Fields>
    void row(const Fields &...fields) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(fields), first = false), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    static std::string cell(const std::string &s) { return s; }
    static std::string cell(const char *s) { return s; }
    static std::string cell(double v) { return format_number(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    static std::string cell(const std::optional<double> &v) { return v ? format_number(*v) : "NA"; }
    template <class I>
        requires std::is_integral_v<I>
    static std::string cell(I v) { return std::to_string(v); }

    std::ostringstream out_;
};

inline Json config_json(const RunConfig &c) {
    Json j;
    j["format"] = to_string(c.format);
    j["direction"] = to_string(c.direction);
    j["component"] = c.component.describe();
    j["alpha"] = c.alpha;
    j["permutations"] = c.permutations;
    j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
    j["tolerance"] = c.tolerance;
    j["enumerate"] = c.enumerate;
    j["fdr"] = to_string(c.fdr);
    j["histogram_bins"] = c.histogram_bins;
    j["load_null"] = c.load_null ? Json(c.load_null->generic_string()) : Json(nullptr);
    return j;
}

inline Json graph_json(const DirectionView &view) {
    Json j;
    j["direction"] = to_string(view.direction);
    j["vertices"] = view.graph.num_vertices();
    j["edges"] = view.graph.num_edges();
    j["total_weight"] = view.graph.total_weight();
    j["components"] = view.partition.size();
    j["component_index"] = view.component_index;
    j["component_vertices"] = view.component.num_vertices();
    j["component_edges"] = view.component.num_edges();
    return j;
}

} // namespace detail

/// Runs one command for one direction, writing into `dir` and filling `manifest`.
class DirectionRun {
public:
    DirectionRun(const RunConfig &config, const DirectionView &view, fs::path dir, OutputSet &outputs,
                 detail::Json &manifest, std::ostream &log)
        : config_(config), view_(view), dir_(std::move(dir)), outputs_(outputs), manifest_(manifest), log_(log) {}

    void build() {
        const MobilityGraph &g = view_.graph;
        std::ostringstream edges;
        write_edge_list(edges, g);
        emit("graph.csv", edges.str());

        detail::Csv components("zone,component");
        for (VertexId v = 0; v < g.num_vertices(); ++v) components.row(g.zone(v), view_.partition.assignment[v]);
        emit("components.csv", components.str());

        const auto degrees = degree_features(g);
        detail::Csv table("zone,component,in_degree,out_degree,weighted_in,weighted_out");
        for (VertexId v = 0; v < g.num_vertices(); ++v)
            table.row(g.zone(v), view_.partition.assignment[v], degrees[v].in_degree, degrees[v].out_degree,
                      degrees[v].weighted_in, degrees[v].weighted_out);
        emit("degrees.csv", table.str());

        // Edge weights of the analysed component; the whole graph when the component has no edges.
        const bool component_scope = view_.component.num_edges() > 0;
        if (component_scope || g.num_edges() > 0) {
            detail::Csv hist("bin_low,bin_high,count");
            for (const auto &bin : edge_weight_histogram(component_scope ? view_.component : g, config_.histogram_bins))
                hist.row(bin.low, bin.high, bin.count);
            emit("histogram.csv", hist.str());
        }
        manifest_["build"] = {{"histogram_scope", component_scope ? "component" : (g.num_edges() > 0 ? "graph" : "none")}};
    }

    const StationaryResult &stationary() {
        if (stationary_) return *stationary_;
        StationaryResult result;
        try {
            result.transition = row_normalize(view_.component);
        } catch (const GraphError &e) {
            throw Error(std::string("selected component ") + std::to_string(view_.component_index) + " of the " +
                        to_string(view_.direction) + " graph is not irreducible: " + e.what());
        }
        result.periodicity = check_aperiodic(result.transition);
        result.pi = mobloci::stationary(result.transition, solver_options());

        detail::Json section;
        section["solver"] = to_string(result.pi.method);
        section["tolerance"] = config_.tolerance;
        section["residual"] = result.pi.residual;
        section["period"] = result.periodicity.period;
        section["aperiodic"] = result.periodicity.aperiodic;
        section["interpretation"] = result.periodicity.aperiodic
                                        ? "limiting distribution of the chain"
                                        : "long-run visit proportions only; the chain is periodic and has no limit";
        section["warnings"] = detail::Json::array();
        if (!result.periodicity.aperiodic) {
            std::string warning = std::string("the ") + to_string(view_.direction) +
                                  " transition matrix is periodic (period " +
                                  std::to_string(result.periodicity.period) +
                                  "); stationary values are time averages, not limits";
            log_ << "warning: " << warning << '\n';
            section["warnings"].push_back(warning);
        }
        manifest_["stationary"] = section;
        stationary_ = std::move(result);
        return *stationary_;
    }

    void write_stationary() {
        const auto &s = stationary();
        detail::Csv csv("zone,pi");
        for (VertexId v : stationary_order(s.pi.values)) csv.row(view_.component.zone(v), s.pi.values[v]);
        emit("stationary.csv", csv.str());
    }

    const LociResult &loci() {
        if (loci_) return *loci_;
        if (!config_.seed) throw Error("a seed is required for the permutation test (--seed)");
        const auto &s = stationary();
        LociResult result;
        if (config_.load_null) {
            std::ifstream in(*config_.load_null, std::ios::binary);
            if (!in) throw Error(config_.load_null->string() + ": cannot open null sample file");
            result.null = read_null_file(in);
            if (result.null.vertices != view_.component.num_vertices())
                throw Error(config_.load_null->string() + ": null samples cover " +
                            std::to_string(result.null.vertices) + " vertices, component has " +
                            std::to_string(view_.component.num_vertices()));
        } else {
            NullOptions options;
            options.replicates = config_.permutations;
            options.seed = *config_.seed;
            options.workers = config_.workers;
            options.enumerate = config_.enumerate;
            options.solver = solver_options();
            result.null = sample_null(view_.component, options);
            if (result.null.retries > 0)
                log_ << "note: " << result.null.retries << " permutation replicate(s) retried after a failed solve\n";
        }
        if (config_.save_null) {
            std::ostringstream bytes;
            write_null_file(bytes, result.null);
            outputs_.write(*config_.save_null, bytes.str());
        }
        result.tails = tail_probabilities(s.pi.values, result.null);
        result.report = select_loci(s.pi.values, result.tails, config_.alpha, config_.fdr);
        result.unadjusted = unadjusted_locus_flags(result.tails, config_.alpha);

        detail::Json section;
        section["replicates"] = result.null.replicates;
        section["enumerated"] = result.null.enumerated;
        section["estimator"] = result.tails.estimator == TailEstimator::exact ? "exact" : "plus_one";
        section["retries"] = result.null.retries;
        section["k_star"] = result.report.k_star;
        section["num_loci"] = result.report.num_loci;
        section["unadjusted_below_alpha"] = std::count(result.unadjusted.begin(), result.unadjusted.end(), true);
        manifest_["loci"] = section;
        loci_ = std::move(result);
        return *loci_;
    }

    void write_loci() {
        const auto &l = loci();
        const auto &g = view_.component;

        detail::Csv pvalues("rank,zone,pi,raw_p,exceed_count,null_quantile,below_alpha");
        const double level = 1.0 - config_.alpha;
        for (const auto &rec : l.report.records)
            pvalues.row(rec.rank, g.zone(rec.vertex), rec.pi, rec.raw_p, l.tails.exceed_counts[rec.vertex],
                        null_quantile(l.null, rec.vertex, level), static_cast<bool>(l.unadjusted[rec.vertex]));
        emit("pvalues.csv", pvalues.str());

        detail::Csv by_k("k,significant");
        for (std::size_t k = 0; k < l.report.significant_by_k.size(); ++k) by_k.row(k + 1, l.report.significant_by_k[k]);
        emit("sig_loci_by_k.csv", by_k.str());

        detail::Csv adjusted("rank,zone,pi,adjusted_p,is_locus");
        for (const auto &rec : l.report.records)
            adjusted.row(rec.rank, g.zone(rec.vertex), rec.pi, rec.adjusted_p, rec.is_locus);
        emit("adjusted_p.csv", adjusted.str());

        detail::Json doc;
        doc["summary"] = {{"alpha", l.report.alpha},
                          {"fdr", to_string(l.report.method)},
                          {"permutations", l.null.replicates},
                          {"seed", config_.seed ? detail::Json(*config_.seed) : detail::Json(nullptr)},
                          {"estimator", l.tails.estimator == TailEstimator::exact ? "exact" : "plus_one"},
                          {"k_star", l.report.k_star},
                          {"num_loci", l.report.num_loci},
                          {"unadjusted_below_alpha", std::count(l.unadjusted.begin(), l.unadjusted.end(), true)}};
        doc["loci"] = detail::Json::array();
        doc["records"] = detail::Json::array();
        for (const auto &rec : l.report.records) {
            if (rec.is_locus) doc["loci"].push_back(g.zone(rec.vertex));
            doc["records"].push_back({{"zone", g.zone(rec.vertex)},
                                      {"rank", rec.rank},
                                      {"pi", rec.pi},
                                      {"raw_p", rec.raw_p},
                                      {"adjusted_p", rec.adjusted_p ? detail::Json(*rec.adjusted_p) : detail::Json(nullptr)},
                                      {"is_locus", rec.is_locus}});
        }
        emit("loci_report.json", doc.dump(2) + "\n");
    }

    void write_features() {
        const auto &s = stationary();
        const auto &g = view_.component;
        const FeatureTable table =
            view_.trajectories ? comparison_features(g, *view_.trajectories) : comparison_features(g);

        // Locus flags need the permutation test, which needs a seed.
        std::vector<std::string> locus_flag(g.num_vertices(), "NA");
        if (config_.seed) {
            const auto &l = loci();
            for (const auto &rec : l.report.records) locus_flag[rec.vertex] = rec.is_locus ? "true" : "false";
        }

        detail::Csv features("zone,in_degree,weighted_in_degree,total_incoming,total_traffic");
        for (std::size_t v = 0; v < table.rows.size(); ++v) {
            const FeatureRow &r = table.rows[v];
            std::optional<double> incoming, traffic;
            if (table.has_trajectory_features) {
                incoming = r.total_incoming;
                traffic = r.total_traffic;
            }
            features.row(table.zones[v], r.in_degree, r.weighted_in_degree, incoming, traffic);
        }
        emit("features.csv", features.str());

        const auto assoc = association_report(table, s.pi.values, {.skip_undefined = true});
        detail::Csv csv("feature,response,n,slope,intercept,slope_p_value,r_squared,adjusted_r_squared,note");
        for (const auto &row : assoc.rows) {
            if (row.fit)
                csv.row(row.feature, to_string(row.response), row.fit->n, row.fit->slope, row.fit->intercept,
                        row.fit->slope_p_value, row.fit->r_squared, row.fit->adjusted_r_squared, "");
            else
                csv.row(row.feature, to_string(row.response), g.num_vertices(), "NA", "NA", "NA", "NA", "NA",
                        sanitize(row.note));
        }
        const auto joint_row = [&](const std::optional<MultiFit> &fit, Response response) {
            if (fit)
                csv.row("total_incoming+total_traffic", to_string(response), fit->n, "NA", fit->coefficients[0],
                        "NA", fit->r_squared, fit->adjusted_r_squared, "");
            else
                csv.row("total_incoming+total_traffic", to_string(response), g.num_vertices(), "NA", "NA", "NA",
                        "NA", "NA", sanitize(assoc.joint_note));
        };
        if (table.has_trajectory_features) {
            joint_row(assoc.joint_sqrt_pi, Response::sqrt_pi);
            joint_row(assoc.joint_pi, Response::pi);
            if (assoc.incoming_on_traffic) {
                const auto &f = *assoc.incoming_on_traffic;
                csv.row("total_traffic", "total_incoming", f.n, f.slope, f.intercept, f.slope_p_value, f.r_squared,
                        f.adjusted_r_squared, "");
            }
        }
        emit("association.csv", csv.str());

        // Fitted vs. residual of the joint trajectory model on sqrt(pi); weighted in-degree without trajectories.
        detail::Csv residuals("zone,model,fitted,residual,is_locus");
        const std::vector<double> *fitted = nullptr, *resid = nullptr;
        std::string model;
        if (assoc.joint_sqrt_pi) {
            fitted = &assoc.joint_sqrt_pi->fitted;
            resid = &assoc.joint_sqrt_pi->residuals;
            model = "sqrt_pi~total_incoming+total_traffic";
        } else {
            for (const auto &row : assoc.rows)
                if (row.feature == "weighted_in_degree" && row.response == Response::sqrt_pi && row.fit) {
                    fitted = &row.fit->fitted;
                    resid = &row.fit->residuals;
                    model = "sqrt_pi~weighted_in_degree";
                }
        }
        if (fitted)
            for (std::size_t v = 0; v < g.num_vertices(); ++v)
                residuals.row(g.zone(static_cast<VertexId>(v)), model, (*fitted)[v], (*resid)[v], locus_flag[v]);
        emit("residuals.csv", residuals.str());

        manifest_["features"] = {{"trajectory_features", table.has_trajectory_features},
                                 {"residual_model", fitted ? detail::Json(model) : detail::Json(nullptr)}};
    }

private:
    SolverOptions solver_options() const {
        SolverOptions o;
        o.tolerance = config_.tolerance;
        return o;
    }

    static std::string sanitize(std::string s) {
        for (char &c : s)
            if (c == ',' || c == '\n' || c == '\r') c = ';';
        return s;
    }

    void emit(const std::string &name, const std::string &content) {
        outputs_.write(dir_ / name, content);
        manifest_["outputs"].push_back(name);
    }

    const RunConfig &config_;
    const DirectionView &view_;
    fs::path dir_;
    OutputSet &outputs_;
    detail::Json &manifest_;
    std::ostream &log_;
    std::optional<StationaryResult> stationary_;
    std::optional<LociResult> loci_;
};

/**
 * Runs `command` end to end. With direction `both`, morning and evening
 * results go to `out/morning` and `out/evening`. Throws on failure, in which
 * case every file written so far is removed.
 */
inline void run_command(Command command, const RunConfig &config, std::ostream &log) {
    config.validate();
    if ((command == Command::loci || command == Command::report) && !config.seed)
        throw Error("the " + std::string(to_string(command)) + " command requires --seed");

    const Dataset data = load_dataset(config);
    OutputSet outputs;

    std::vector<Direction> directions;
    if (config.direction != DirectionChoice::evening) directions.push_back(Direction::morning);
    if (config.direction != DirectionChoice::morning) directions.push_back(Direction::evening);

    for (Direction direction : directions) {
        const fs::path dir =
            config.direction == DirectionChoice::both ? config.out_dir / to_string(direction) : config.out_dir;
        const DirectionView view = analyze_direction(data, direction, config.component);

        detail::Json manifest;
        manifest["tool"] = "mobloci";
        manifest["version"] = version;
        manifest["command"] = to_string(command);
        manifest["config"] = detail::config_json(config);
        manifest["inputs"] = detail::Json::array();
        for (const auto &d : data.digests)
            manifest["inputs"].push_back({{"path", d.path}, {"sha256", d.sha256}, {"bytes", d.bytes}});
        manifest["graph"] = detail::graph_json(view);
        manifest["outputs"] = detail::Json::array();

        DirectionRun run(config, view, dir, outputs, manifest, log);
        switch (command) {
        case Command::build: run.build(); break;
        case Command::stationary: run.write_stationary(); break;
        case Command::loci: run.write_loci(); break;
        case Command::features: run.write_features(); break;
        case Command::report:
            run.build();
            run.write_stationary();
            run.write_loci();
            run.write_features();
            break;
        }
        manifest["outputs"].push_back("manifest.json");
        outputs.write(dir / "manifest.json", manifest.dump(2) + "\n");
    }
    outputs.commit();
}

} // namespace mobloci
