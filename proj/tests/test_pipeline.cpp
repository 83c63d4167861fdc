#include "mobloci/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>

using namespace mobloci;

namespace {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("mobloci-test-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path &path() const { return path_; }
    fs::path operator/(const std::string &name) const { return path_ / name; }

private:
    fs::path path_;
};

void write_text(const fs::path &path, const std::string &text) {
    fs::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

std::vector<std::vector<std::string>> read_csv(const fs::path &path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
            cells.push_back(line.substr(start, pos - start));
        cells.push_back(line.substr(start));
        rows.push_back(std::move(cells));
    }
    return rows;
}

MobilityGraph load_edges(const fs::path &path) {
    std::istringstream in(read_file(path));
    return parse_edge_list(in);
}

const char *toy_trajectories = "count,path\n"
                               "5,A|B|C\n"
                               "3,B|C|A\n"
                               "2,C|A\n"
                               "4,A|C\n"
                               "1,D|A\n"
                               "2,B\n";

RunConfig config_for(const fs::path &input, const fs::path &out) {
    RunConfig c;
    c.inputs = {input};
    c.out_dir = out;
    c.seed = 11;
    c.permutations = 199;
    return c;
}

int run_cli(const std::string &args) {
    const std::string cmd = std::string(MOBLOCI_CLI_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Pipeline, BuildWritesTables) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    auto c = config_for(dir / "in.csv", dir / "out");
    std::ostringstream log;
    run_command(Command::build, c, log);
    for (const char *name : {"graph.csv", "components.csv", "degrees.csv", "histogram.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir / "out" / name)) << name;
    auto components = read_csv(dir / "out" / "components.csv");
    ASSERT_EQ(components.size(), 5u); // header + A..D
    EXPECT_EQ(components[4][0], "D");
    EXPECT_EQ(components[4][1], "1");
    auto manifest = nlohmann::json::parse(read_file(dir / "out" / "manifest.json"));
    EXPECT_EQ(manifest["graph"]["components"], 2);
    EXPECT_EQ(manifest["inputs"][0]["sha256"], sha256_hex(toy_trajectories));
}

TEST(Pipeline, ThreeCycleIsUniform) {
    TempDir dir;
    write_text(dir / "in.csv", "from,to,weight\nA,B,2\nB,C,2\nC,A,2\n");
    auto c = config_for(dir / "in.csv", dir / "out");
    c.format = InputFormat::edges;
    std::ostringstream log;
    run_command(Command::stationary, c, log);
    auto rows = read_csv(dir / "out" / "stationary.csv");
    ASSERT_EQ(rows.size(), 4u);
    for (std::size_t r = 1; r < rows.size(); ++r) EXPECT_NEAR(std::stod(rows[r][1]), 1.0 / 3.0, 1e-12);
    // Period 3.
    EXPECT_NE(log.str().find("periodic"), std::string::npos);
}

TEST(Pipeline, TwoCycleWarnsPeriodic) {
    TempDir dir;
    write_text(dir / "in.csv", "from,to,weight\nA,B,1\nB,A,1\n");
    auto c = config_for(dir / "in.csv", dir / "out");
    c.format = InputFormat::edges;
    std::ostringstream log;
    run_command(Command::stationary, c, log);
    auto manifest = nlohmann::json::parse(read_file(dir / "out" / "manifest.json"));
    EXPECT_EQ(manifest["stationary"]["aperiodic"], false);
    EXPECT_EQ(manifest["stationary"]["period"], 2);
    EXPECT_EQ(manifest["stationary"]["warnings"].size(), 1u);
    EXPECT_NE(log.str().find("warning"), std::string::npos);
}

TEST(Pipeline, EveningMatchesTransposedEdgeList) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    auto c = config_for(dir / "in.csv", dir / "out");
    c.direction = DirectionChoice::both;
    std::ostringstream log;
    run_command(Command::build, c, log);

    const auto morning = load_edges(dir / "out/morning/graph.csv");
    const auto evening = load_edges(dir / "out/evening/graph.csv");
    EXPECT_EQ(evening, transpose(morning));

    // Evening from an edge list is the transpose as well.
    auto e = config_for(dir / "out/morning/graph.csv", dir / "edges");
    e.format = InputFormat::edges;
    e.direction = DirectionChoice::evening;
    run_command(Command::build, e, log);
    EXPECT_EQ(read_file(dir / "edges/graph.csv"), read_file(dir / "out/evening/graph.csv"));
}

TEST(Pipeline, EmptyInputNamesFile) {
    TempDir dir;
    write_text(dir / "empty.csv", "count,path\n");
    auto c = config_for(dir / "empty.csv", dir / "out");
    std::ostringstream log;
    try {
        run_command(Command::report, c, log);
        FAIL();
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("empty.csv"), std::string::npos);
    }
    write_text(dir / "blank.csv", "");
    c.inputs = {dir / "blank.csv"};
    EXPECT_THROW(run_command(Command::build, c, log), Error);
    EXPECT_FALSE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Pipeline, ReportIsDeterministicAndConsistent) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    std::ostringstream log;
    auto a = config_for(dir / "in.csv", dir / "a");
    a.workers = 1;
    run_command(Command::report, a, log);
    auto b = config_for(dir / "in.csv", dir / "b");
    b.workers = 3;
    run_command(Command::report, b, log);
    for (const auto &entry : fs::directory_iterator(dir / "a"))
        EXPECT_EQ(read_file(entry.path()), read_file(dir / "b" / entry.path().filename())) << entry.path();

    // Residual locus flags agree with the loci report.
    auto report = nlohmann::json::parse(read_file(dir / "a" / "loci_report.json"));
    std::map<std::string, bool> is_locus;
    for (const auto &rec : report["records"]) is_locus[rec["zone"]] = rec["is_locus"];
    auto residuals = read_csv(dir / "a" / "residuals.csv");
    ASSERT_GT(residuals.size(), 1u);
    for (std::size_t r = 1; r < residuals.size(); ++r)
        EXPECT_EQ(residuals[r][4], is_locus.at(residuals[r][0]) ? "true" : "false");
    EXPECT_EQ(report["summary"]["permutations"], 199);
}

TEST(Pipeline, EnumerationOnSmallGraph) {
    TempDir dir;
    write_text(dir / "in.csv", "from,to,weight\nA,B,1\nB,A,3\nB,C,2\nC,A,5\n");
    auto c = config_for(dir / "in.csv", dir / "out");
    c.format = InputFormat::edges;
    c.enumerate = true;
    std::ostringstream log;
    run_command(Command::loci, c, log);
    auto report = nlohmann::json::parse(read_file(dir / "out" / "loci_report.json"));
    EXPECT_EQ(report["summary"]["permutations"], 24);
    EXPECT_EQ(report["summary"]["estimator"], "exact");
    for (const auto &rec : report["records"]) {
        const double p = rec["raw_p"];
        const double scaled = p * 24.0;
        EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
        EXPECT_GE(p, 1.0 / 24.0);
    }
}

TEST(Pipeline, EdgeListFeaturesAreDegreesOnly) {
    TempDir dir;
    write_text(dir / "in.csv", "from,to,weight\nA,B,1\nB,A,3\nB,C,2\nC,A,5\nA,C,1\n");
    auto c = config_for(dir / "in.csv", dir / "out");
    c.format = InputFormat::edges;
    c.seed.reset();
    std::ostringstream log;
    run_command(Command::features, c, log);
    auto features = read_csv(dir / "out" / "features.csv");
    EXPECT_EQ(features[1][3], "NA");
    auto association = read_csv(dir / "out" / "association.csv");
    for (std::size_t r = 1; r < association.size(); ++r)
        EXPECT_TRUE(association[r][0] == "in_degree" || association[r][0] == "weighted_in_degree");
    auto residuals = read_csv(dir / "out" / "residuals.csv");
    for (std::size_t r = 1; r < residuals.size(); ++r) EXPECT_EQ(residuals[r][4], "NA");
}

TEST(Pipeline, LociRequiresSeed) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    auto c = config_for(dir / "in.csv", dir / "out");
    c.seed.reset();
    std::ostringstream log;
    EXPECT_THROW(run_command(Command::loci, c, log), Error);
}

TEST(Pipeline, FailureRemovesPartialOutputs) {
    TempDir dir;
    // Component 1 is the single vertex D, which has no outgoing edges inside it.
    write_text(dir / "in.csv", toy_trajectories);
    auto c = config_for(dir / "in.csv", dir / "out");
    c.component.index = 1;
    std::ostringstream log;
    EXPECT_THROW(run_command(Command::report, c, log), Error);
    EXPECT_FALSE(fs::exists(dir / "out" / "graph.csv"));
    EXPECT_FALSE(fs::exists(dir / "out" / "manifest.json"));
    c.component.index = 9;
    EXPECT_THROW(run_command(Command::build, c, log), Error);
}

TEST(Pipeline, NullFileReuse) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    std::ostringstream log;
    auto save = config_for(dir / "in.csv", dir / "a");
    save.save_null = dir / "null.bin";
    run_command(Command::loci, save, log);
    auto load = config_for(dir / "in.csv", dir / "b");
    load.load_null = dir / "null.bin";
    run_command(Command::loci, load, log);
    EXPECT_EQ(read_file(dir / "a" / "pvalues.csv"), read_file(dir / "b" / "pvalues.csv"));
}

TEST(Cli, RunsAndReportsErrors) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    const std::string in = (dir / "in.csv").string(), out = (dir / "out").string();
    EXPECT_EQ(run_cli("report --input " + in + " --seed 5 -B 99 --out " + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "loci_report.json"));
    EXPECT_EQ(run_cli("loci --input " + in + " --out " + out + "/x"), 1);
    EXPECT_NE(run_cli("frobnicate --input " + in), 0);
    EXPECT_NE(run_cli("build --input " + (dir / "missing.csv").string()), 0);
    EXPECT_NE(run_cli("build --input " + in + " --alpha 2"), 0);
}

TEST(Cli, ConfigFileWithCommandLinePrecedence) {
    TempDir dir;
    write_text(dir / "in.csv", toy_trajectories);
    write_text(dir / "run.ini", "input = " + (dir / "in.csv").string() + "\nseed = 3\npermutations = 49\nalpha = 0.1\n");
    const std::string out = (dir / "out").string();
    ASSERT_EQ(run_cli("loci --config " + (dir / "run.ini").string() + " --permutations 59 --out " + out), 0);
    auto manifest = nlohmann::json::parse(read_file(dir / "out" / "manifest.json"));
    EXPECT_EQ(manifest["config"]["permutations"], 59);
    EXPECT_EQ(manifest["config"]["seed"], 3);
    EXPECT_EQ(manifest["config"]["alpha"], 0.1);
}
