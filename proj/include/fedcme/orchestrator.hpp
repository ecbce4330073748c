#pragma once

#include <cstdint>
#include <vector>

#include "fedcme/barrier.hpp"
#include "fedcme/data.hpp"
#include "fedcme/strategies.hpp"

namespace fedcme {

// How aggregation weights are normalized: over the selected clients' data
// (weights sum to 1) or over the total data held by all clients.
enum class WeightNorm { Selected, GlobalTotal };

// Pairing map for one round; partner[k] == -1 means unmatched. Pairwise
// plans are symmetric involutions; the many-to-one ablation waives that.
struct MatchPlan {
    std::vector<int> partner;

    int partner_of(int client_id) const { return partner[static_cast<std::size_t>(client_id)]; }
    bool has_partner(int client_id) const { return partner_of(client_id) >= 0; }
};

struct GlobalState {
    int round = 0;
    ParamVector model;
    PerClassFeatures global_features;              // per-class ever-set flags inside
    std::vector<std::vector<double>> eval_table;   // [K][C], most recent upload per client
    std::vector<char> ever_reported;               // per client
};

// Uniform sample of m distinct eligible client ids, ascending order.
std::vector<int> select_clients(const std::vector<char>& eligible, int m,
                                std::uint64_t round_seed);

// u.v / (|u||v|); 0 when either norm is 0 so never-reported clients compare
// as neutral.
double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

// Greedy pairing: sort selected ascending by similarity to the mean vector,
// repeatedly pop the front and pair it with the remaining client of minimum
// similarity to it. Ties break by ascending client id. Odd leftover stays
// unmatched.
MatchPlan make_matching(const std::vector<int>& selected,
                        const std::vector<std::vector<double>>& eval_table);

// Ablation: every client is independently assigned its most dissimilar
// partner; repeats allowed, symmetry not guaranteed.
MatchPlan make_matching_many_to_one(const std::vector<int>& selected,
                                    const std::vector<std::vector<double>>& eval_table);

// Weighted average of client parameters by sample count. `global_total`
// is only consulted in GlobalTotal mode.
ParamVector aggregate_models(const std::vector<LocalResult>& results, WeightNorm norm,
                             std::size_t global_total = 0);

// Memory mechanism: a client's missing class entry is substituted with the
// current global feature (when ever set) before the per-class mean. Classes
// never seen by anyone remain unset.
PerClassFeatures aggregate_features(const std::vector<LocalResult>& results,
                                    const PerClassFeatures& current);

// Fraction of argmax-correct predictions.
double evaluate_global(const SplitModel& m, const Dataset& test);

// Immutable context for a whole simulation run.
struct SimulationEnv {
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;
    const Partition* partition = nullptr;
    const SplitModel* tmpl = nullptr;
    std::uint64_t run_seed = 0;
    int clients_per_round = 0;
    ClientConfig client;
    MatchMode match_mode = MatchMode::Pairwise;
    WeightNorm weight_norm = WeightNorm::Selected;
    int workers = 1;

    int num_clients() const { return static_cast<int>(partition->num_clients()); }
    std::vector<char> eligible_clients() const;
};

struct RoundStats {
    double mean_train_loss = 0.0;
};

GlobalState init_global_state(const SimulationEnv& env);

// One full round: select, match (exchange strategies only), dispatch client
// updates across workers with the exchange barrier, aggregate models /
// features / evaluation table. Throws on any client failure, leaving the
// caller's state untouched.
GlobalState run_round(const GlobalState& state, const SimulationEnv& env,
                      RoundStats* stats = nullptr);

}  // namespace fedcme
