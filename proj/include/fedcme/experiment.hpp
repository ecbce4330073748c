#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedcme/config.hpp"
#include "fedcme/metrics.hpp"

namespace fedcme {

// Build the dataset, partition and model from the config, run T rounds,
// and return one record per round. Deterministic in the config (including
// seed) for any worker count; wall_ms is the only nondeterministic field.
std::vector<MetricsRecord> run_experiment(const RunConfig& cfg, int workers = 1);

// `run` subcommand: execute the config (or a seed sweep of it), write one
// CSV per run, print a summary line per run. Returns the process exit code
// (0 iff every run completed all rounds). `sweep` is empty or "seeds=a..b".
int run_command(const std::string& config_path, int workers, const std::string& sweep,
                std::ostream& out, std::ostream& err);

// `compare` subcommand: print the per-strategy summary table.
int compare_command(const std::vector<std::string>& paths, std::ostream& out, std::ostream& err);

// Default directory for relative metrics paths; honors FEDCME_OUT_DIR.
std::string default_output_dir();

}  // namespace fedcme
