#include "fedcme/experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <string>

#include "fedcme/data.hpp"
#include "fedcme/orchestrator.hpp"
#include "fedcme/rng.hpp"

namespace fedcme {

namespace {

struct BuiltData {
    Dataset train;
    Dataset test;
};

BuiltData build_datasets(const RunConfig& cfg) {
    BuiltData out;
    if (cfg.dataset.kind == DatasetSpec::Kind::Blobs) {
        const BlobsSpec& b = cfg.dataset.blobs;
        const Dataset full = generate_blobs(b.classes, b.dim, b.per_class + b.test_per_class,
                                            b.spread, cfg.seed);
        std::tie(out.train, out.test) = split_train_test(full, b.test_per_class);
    } else {
        out.train = load_idx(cfg.dataset.idx.train_images, cfg.dataset.idx.train_labels);
        out.test = load_idx(cfg.dataset.idx.test_images, cfg.dataset.idx.test_labels);
        const int classes = std::max(out.train.num_classes, out.test.num_classes);
        out.train.num_classes = classes;
        out.test.num_classes = classes;
    }
    out.train.validate();
    out.test.validate();
    return out;
}

}  // namespace

std::vector<MetricsRecord> run_experiment(const RunConfig& cfg, int workers) {
    cfg.validate();
    const BuiltData data = build_datasets(cfg);
    const Partition partition =
        dirichlet_partition(data.train, cfg.num_clients, cfg.dirichlet_alpha, cfg.seed);
    const SplitModel tmpl =
        make_split_model(data.train.dim(), {64, 32},
                         static_cast<std::size_t>(data.train.num_classes),
                         rng::derive(cfg.seed, {rng::kModelInit}));

    SimulationEnv env;
    env.train = &data.train;
    env.test = &data.test;
    env.partition = &partition;
    env.tmpl = &tmpl;
    env.run_seed = cfg.seed;
    env.clients_per_round = cfg.clients_per_round;
    env.client = cfg.client;
    env.match_mode = cfg.match_mode;
    env.weight_norm = cfg.weight_norm;
    env.workers = workers;

    GlobalState state = init_global_state(env);
    std::vector<MetricsRecord> records;
    records.reserve(static_cast<std::size_t>(cfg.rounds));
    for (int t = 1; t <= cfg.rounds; ++t) {
        const auto start = std::chrono::steady_clock::now();
        RoundStats stats;
        state = run_round(state, env, &stats);
        const SplitModel current = unflatten(state.model, tmpl);
        MetricsRecord r;
        r.round = t;
        r.test_acc = evaluate_global(current, data.test);
        r.mean_train_loss = stats.mean_train_loss;
        r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
        r.strategy = cfg.strategy_tag;
        r.seed = cfg.seed;
        records.push_back(std::move(r));
    }
    return records;
}

std::string default_output_dir() {
    const char* dir = std::getenv("FEDCME_OUT_DIR");
    return (dir != nullptr && *dir != '\0') ? dir : ".";
}

namespace {

std::string resolve_output(const std::string& configured, std::uint64_t seed, bool suffix_seed) {
    std::filesystem::path p = configured.empty() ? "metrics.csv" : configured;
    if (suffix_seed) {
        std::filesystem::path stem = p.stem();
        stem += "_seed" + std::to_string(seed);
        stem += p.extension();
        p = p.parent_path() / stem;
    }
    if (p.is_relative()) p = std::filesystem::path(default_output_dir()) / p;
    return p.string();
}

// "seeds=a..b" -> [a, b]; empty sweep means a single run with the config seed.
std::vector<std::uint64_t> parse_sweep(const std::string& sweep, std::uint64_t config_seed) {
    if (sweep.empty()) return {config_seed};
    const std::string prefix = "seeds=";
    const std::size_t dots = sweep.find("..");
    if (sweep.rfind(prefix, 0) != 0 || dots == std::string::npos) {
        throw ConfigError("sweep: expected seeds=a..b, got '" + sweep + "'");
    }
    std::uint64_t a = 0, b = 0;
    try {
        a = std::stoull(sweep.substr(prefix.size(), dots - prefix.size()));
        b = std::stoull(sweep.substr(dots + 2));
    } catch (const std::exception&) {
        throw ConfigError("sweep: expected seeds=a..b, got '" + sweep + "'");
    }
    if (b < a) throw ConfigError("sweep: seed range is empty");
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
}

}  // namespace

int run_command(const std::string& config_path, int workers, const std::string& sweep,
                std::ostream& out, std::ostream& err) {
    try {
        const RunConfig base = parse_config(config_path);
        const std::vector<std::uint64_t> seeds = parse_sweep(sweep, base.seed);
        for (std::uint64_t seed : seeds) {
            RunConfig cfg = base;
            cfg.seed = seed;
            const std::string path = resolve_output(cfg.output_path, seed, seeds.size() > 1);
            const auto records = run_experiment(cfg, workers);
            write_metrics_csv(path, records);
            out << "strategy=" << cfg.strategy_tag << " seed=" << seed << " rounds="
                << records.size() << " final_acc=" << records.back().test_acc << " -> " << path
                << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        err << "run failed: " << e.what() << "\n";
        return 1;
    }
}

int compare_command(const std::vector<std::string>& paths, std::ostream& out, std::ostream& err) {
    try {
        out << format_compare_table(compare_metrics(paths));
        return 0;
    } catch (const std::exception& e) {
        err << "compare failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedcme
