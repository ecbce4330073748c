// Experiment harness: `fedcme run --config cfg.json [--workers N]
// [--sweep seeds=a..b]` executes a federated simulation and writes per-round
// metrics CSV; `fedcme compare a.csv b.csv ...` summarizes finished runs.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedcme/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"FedCME federated-learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    int workers = 1;
    std::string sweep;
    CLI::App* run = app.add_subcommand("run", "execute a configured experiment");
    run->add_option("--config", config_path, "JSON run configuration")->required();
    run->add_option("--workers", workers, "parallel client workers")->check(CLI::PositiveNumber);
    run->add_option("--sweep", sweep, "seed sweep, e.g. seeds=1..5");

    std::vector<std::string> metric_paths;
    CLI::App* compare = app.add_subcommand("compare", "summarize metrics CSV files");
    compare->add_option("paths", metric_paths, "metrics CSV files")->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        return fedcme::run_command(config_path, workers, sweep, std::cout, std::cerr);
    }
    return fedcme::compare_command(metric_paths, std::cout, std::cerr);
}
