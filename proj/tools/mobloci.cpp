// Command-line front end: mobloci {build,stationary,loci,features,report} [options]

#include "mobloci/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <thread>

int main(int argc, char **argv) {
    using namespace mobloci;

    CLI::App app{"Mobility loci: stationary-distribution permutation test on mobility graphs", "mobloci"};
    app.set_version_flag("--version", std::string(version));
    app.set_config("--config", "", "Read options from a 'key = value' file; command-line flags take precedence");
    app.require_subcommand(1);

    RunConfig config;
    config.workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::string> inputs;
    std::string component = "largest";
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string save_null, load_null;

    app.add_option("-i,--input", inputs, "Input file(s)")->required()->check(CLI::ExistingFile);
    std::string format = "traj", direction = "morning", fdr = "bh";
    app.add_option("--format", format, "Input format: trajectories or edge list")
        ->check(CLI::IsMember({"traj", "edges"}));
    app.add_option("--direction", direction, "Commute direction")
        ->check(CLI::IsMember({"morning", "evening", "both"}));
    app.add_option("--component", component, "Strong component to analyse: 'largest' or a 0-based index");
    app.add_option("--alpha", config.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    app.add_option("-B,--permutations", config.permutations, "Permutation replicates")->check(CLI::PositiveNumber);
    auto *seed_opt = app.add_option("--seed", seed, "Master seed for the permutation test");
    app.add_option("--tol", config.tolerance, "Stationary solver tolerance")->check(CLI::PositiveNumber);
    app.add_option("-o,--out", out_dir, "Output directory");
    app.add_flag("--enumerate", config.enumerate, "Enumerate every weight assignment instead of sampling");
    app.add_option("--fdr", fdr, "Multiple-testing adjustment")->check(CLI::IsMember({"bh", "by", "bonferroni"}));
    app.add_option("--workers", config.workers, "Worker threads for the permutation test")->check(CLI::PositiveNumber);
    app.add_option("--bins", config.histogram_bins, "Edge-weight histogram bins")->check(CLI::PositiveNumber);
    app.add_option("--save-null", save_null, "Write null samples to this binary file");
    app.add_option("--load-null", load_null, "Reuse null samples from this binary file")->check(CLI::ExistingFile);

    Command command = Command::report;
    const std::pair<const char *, Command> commands[] = {
        {"build", Command::build},         {"stationary", Command::stationary}, {"loci", Command::loci},
        {"features", Command::features},   {"report", Command::report}};
    const std::map<std::string, std::string> help = {
        {"build", "Aggregate inputs and write graph, component, degree and histogram tables"},
        {"stationary", "Solve the stationary distribution of the selected component"},
        {"loci", "Run the permutation test and select mobility loci"},
        {"features", "Compare the stationary distribution with local features"},
        {"report", "Run every step"}};
    // Options are declared on the main app; let subcommands pass them up.
    app.fallthrough();
    for (const auto &[name, cmd] : commands) {
        auto *sub = app.add_subcommand(name, help.at(name));
        sub->callback([&command, cmd = cmd] { command = cmd; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }

    try {
        config.format = format == "edges" ? InputFormat::edges : InputFormat::trajectories;
        config.direction = direction == "both"      ? DirectionChoice::both
                           : direction == "evening" ? DirectionChoice::evening
                                                    : DirectionChoice::morning;
        config.fdr = fdr == "by" ? FdrMethod::by : fdr == "bonferroni" ? FdrMethod::bonferroni : FdrMethod::bh;
        for (const auto &in : inputs) config.inputs.emplace_back(in);
        config.out_dir = out_dir;
        if (seed_opt->count() > 0) config.seed = seed;
        if (!save_null.empty()) config.save_null = save_null;
        if (!load_null.empty()) config.load_null = load_null;
        if (component != "largest") {
            auto index = parse_int(component);
            if (!index || *index < 0) throw Error("--component must be 'largest' or a non-negative index");
            config.component.index = static_cast<std::size_t>(*index);
        }
        run_command(command, config, std::cerr);
    } catch (const std::exception &e) {
        std::cerr << "mobloci: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
