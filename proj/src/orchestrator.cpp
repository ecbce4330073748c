#include "fedcme/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <semaphore>
#include <string>
#include <thread>

#include "fedcme/rng.hpp"

namespace fedcme {

std::vector<int> select_clients(const std::vector<char>& eligible, int m,
                                std::uint64_t round_seed) {
    std::vector<int> pool;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
        if (eligible[i]) pool.push_back(static_cast<int>(i));
    }
    if (m < 1 || static_cast<std::size_t>(m) > pool.size()) {
        throw ConfigError("select_clients: need 1 <= m <= " + std::to_string(pool.size()) +
                          " eligible clients, got m=" + std::to_string(m));
    }
    auto gen = rng::engine(round_seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(gen)]);
    }
    std::vector<int> selected(pool.begin(), pool.begin() + m);
    std::sort(selected.begin(), selected.end());
    return selected;
}

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

MatchPlan make_matching(const std::vector<int>& selected,
                        const std::vector<std::vector<double>>& eval_table) {
    if (selected.empty()) throw ValidationError("make_matching: no clients selected");
    MatchPlan plan;
    plan.partner.assign(eval_table.size(), -1);

    const std::size_t dim = eval_table[static_cast<std::size_t>(selected.front())].size();
    std::vector<double> mean(dim, 0.0);
    const double inv_m = 1.0 / static_cast<double>(selected.size());
    for (int k : selected) {
        const auto& v = eval_table[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i] * inv_m;
    }

    // Ascending similarity to the group mean; the most atypical client
    // picks its counterpart first. Ties break by client id.
    std::vector<int> order = selected;
    std::vector<double> sim_to_mean(eval_table.size(), 0.0);
    for (int k : selected) {
        sim_to_mean[static_cast<std::size_t>(k)] =
            cosine_similarity(eval_table[static_cast<std::size_t>(k)], mean);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = sim_to_mean[static_cast<std::size_t>(a)];
        const double sb = sim_to_mean[static_cast<std::size_t>(b)];
        if (sa != sb) return sa < sb;
        return a < b;
    });

    while (order.size() >= 2) {
        const int k = order.front();
        order.erase(order.begin());
        std::size_t best_pos = 0;
        double best_sim = 0.0;
        for (std::size_t p = 0; p < order.size(); ++p) {
            const double s = cosine_similarity(eval_table[static_cast<std::size_t>(k)],
                                               eval_table[static_cast<std::size_t>(order[p])]);
            if (p == 0 || s < best_sim || (s == best_sim && order[p] < order[best_pos])) {
                best_sim = s;
                best_pos = p;
            }
        }
        const int j = order[best_pos];
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(best_pos));
        plan.partner[static_cast<std::size_t>(k)] = j;
        plan.partner[static_cast<std::size_t>(j)] = k;
    }
    // An odd leftover trains without exchange.
    return plan;
}

MatchPlan make_matching_many_to_one(const std::vector<int>& selected,
                                    const std::vector<std::vector<double>>& eval_table) {
    if (selected.empty()) throw ValidationError("make_matching: no clients selected");
    MatchPlan plan;
    plan.partner.assign(eval_table.size(), -1);
    if (selected.size() < 2) return plan;
    for (int k : selected) {
        int best = -1;
        double best_sim = 0.0;
        for (int j : selected) {
            if (j == k) continue;
            const double s = cosine_similarity(eval_table[static_cast<std::size_t>(k)],
                                               eval_table[static_cast<std::size_t>(j)]);
            if (best < 0 || s < best_sim || (s == best_sim && j < best)) {
                best_sim = s;
                best = j;
            }
        }
        plan.partner[static_cast<std::size_t>(k)] = best;
    }
    return plan;
}

ParamVector aggregate_models(const std::vector<LocalResult>& results, WeightNorm norm,
                             std::size_t global_total) {
    if (results.empty()) throw ValidationError("aggregate_models: no results");
    for (const auto& r : results) {
        if (!r.params.same_layout(results.front().params)) {
            throw ValidationError("aggregate_models: parameter layout mismatch");
        }
    }
    std::size_t denom = 0;
    if (norm == WeightNorm::Selected) {
        for (const auto& r : results) denom += r.sample_count;
    } else {
        denom = global_total;
    }
    if (denom == 0) throw ValidationError("aggregate_models: zero total weight");

    ParamVector out = results.front().params;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    const double inv = 1.0 / static_cast<double>(denom);
    for (const auto& r : results) {
        const double w = static_cast<double>(r.sample_count) * inv;
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * r.params.values[i];
    }
    return out;
}

PerClassFeatures aggregate_features(const std::vector<LocalResult>& results,
                                    const PerClassFeatures& current) {
    const std::size_t classes = current.num_classes();
    const std::size_t fdim = current.values.cols();
    for (const auto& r : results) {
        if (r.local_features.num_classes() != classes ||
            r.local_features.values.cols() != fdim) {
            throw DimensionError("aggregate_features: feature table shape mismatch");
        }
    }
    PerClassFeatures next(classes, fdim);
    for (std::size_t c = 0; c < classes; ++c) {
        // A client missing class c contributes the current global feature
        // instead, so an established class never drifts toward zero.
        std::size_t contributors = 0;
        for (const auto& r : results) {
            const bool own = r.local_features.set[c] != 0;
            if (!own && !current.set[c]) continue;
            const Tensor& src = own ? r.local_features.values : current.values;
            for (std::size_t f = 0; f < fdim; ++f) next.values.at(c, f) += src.at(c, f);
            ++contributors;
        }
        if (contributors == 0) continue;  // never seen by anyone, stays unset
        const double inv = 1.0 / static_cast<double>(contributors);
        for (std::size_t f = 0; f < fdim; ++f) next.values.at(c, f) *= inv;
        next.set[c] = 1;
    }
    return next;
}

double evaluate_global(const SplitModel& m, const Dataset& test) {
    if (test.size() == 0) throw ValidationError("evaluate_global: empty test set");
    constexpr std::size_t kChunk = 512;
    std::size_t correct = 0;
    Tensor x;
    std::vector<int> y;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < test.size(); start += kChunk) {
        const std::size_t end = std::min(start + kChunk, test.size());
        rows.resize(end - start);
        for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
        gather_batch(test, rows, x, y);
        const Tensor logits = forward_logits(m, forward_features(m, x));
        for (std::size_t b = 0; b < rows.size(); ++b) {
            std::size_t pred = 0;
            for (std::size_t c = 1; c < logits.cols(); ++c) {
                if (logits.at(b, c) > logits.at(b, pred)) pred = c;
            }
            if (pred == static_cast<std::size_t>(y[b])) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<char> SimulationEnv::eligible_clients() const {
    std::vector<char> eligible(partition->num_clients(), 0);
    for (std::size_t k = 0; k < partition->num_clients(); ++k) {
        eligible[k] = partition->client_indices[k].empty() ? 0 : 1;
    }
    return eligible;
}

GlobalState init_global_state(const SimulationEnv& env) {
    GlobalState state;
    state.round = 0;
    state.model = flatten(*env.tmpl);
    state.global_features = PerClassFeatures(static_cast<std::size_t>(env.train->num_classes),
                                             env.tmpl->feature_dim());
    state.eval_table.assign(env.partition->num_clients(),
                            std::vector<double>(static_cast<std::size_t>(env.train->num_classes),
                                                0.0));
    state.ever_reported.assign(env.partition->num_clients(), 0);
    return state;
}

namespace {

// Releases its compute permit while blocked inside the wrapped barrier so a
// narrow worker pool cannot deadlock the rendezvous.
class PermitYieldingBarrier final : public ExchangeBarrier {
public:
    PermitYieldingBarrier(ExchangeBarrier& inner, std::counting_semaphore<>& permits)
        : inner_(inner), permits_(permits) {}

    void exchange(int client_id, SplitModel& model) override {
        permits_.release();
        try {
            inner_.exchange(client_id, model);
        } catch (...) {
            permits_.acquire();
            throw;
        }
        permits_.acquire();
    }

private:
    ExchangeBarrier& inner_;
    std::counting_semaphore<>& permits_;
};

}  // namespace

GlobalState run_round(const GlobalState& state, const SimulationEnv& env, RoundStats* stats) {
    const std::vector<char> eligible = env.eligible_clients();
    const std::vector<int> selected = select_clients(
        eligible, env.clients_per_round,
        rng::derive(env.run_seed, {rng::kSelection, static_cast<std::uint64_t>(state.round)}));

    const Strategy strategy = env.client.strategy;
    const bool exchanging = strategy == Strategy::FedCME && env.client.exchange_enabled;

    MatchPlan plan;
    plan.partner.assign(env.partition->num_clients(), -1);
    if (exchanging) {
        plan = env.match_mode == MatchMode::Pairwise
                   ? make_matching(selected, state.eval_table)
                   : make_matching_many_to_one(selected, state.eval_table);
    }

    RendezvousBarrier barrier(plan.partner, env.client.swap_mode, env.match_mode);
    std::counting_semaphore<> permits(std::max(1, env.workers));
    PermitYieldingBarrier yielding(barrier, permits);

    std::vector<LocalResult> results(selected.size());
    std::vector<std::exception_ptr> errors(selected.size());
    std::vector<std::thread> threads;
    threads.reserve(selected.size());
    for (std::size_t p = 0; p < selected.size(); ++p) {
        threads.emplace_back([&, p] {
            const int k = selected[p];
            permits.acquire();
            try {
                ClientTask task;
                task.data = env.train;
                task.indices = &env.partition->client_indices[static_cast<std::size_t>(k)];
                task.tmpl = env.tmpl;
                task.client_id = k;
                task.round = state.round;
                task.run_seed = env.run_seed;
                switch (strategy) {
                    case Strategy::FedAvg:
                        results[p] = local_update_fedavg(state.model, task, env.client);
                        break;
                    case Strategy::FedProx:
                        results[p] = local_update_fedprox(state.model, task, env.client);
                        break;
                    case Strategy::FedRS:
                        results[p] = local_update_fedrs(state.model, task, env.client);
                        break;
                    case Strategy::FedCME:
                        results[p] = local_update_fedcme(state.model, task, env.client,
                                                         state.global_features, yielding);
                        break;
                }
            } catch (...) {
                errors[p] = std::current_exception();
                barrier.abort("client " + std::to_string(k) + " failed");
            }
            permits.release();
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    GlobalState next = state;
    next.round = state.round + 1;
    next.model = aggregate_models(results, env.weight_norm, env.partition->total_assigned());
    if (strategy == Strategy::FedCME) {
        next.global_features = aggregate_features(results, state.global_features);
        for (std::size_t p = 0; p < selected.size(); ++p) {
            next.eval_table[static_cast<std::size_t>(selected[p])] = results[p].eval_vector;
            next.ever_reported[static_cast<std::size_t>(selected[p])] = 1;
        }
    }
    if (stats != nullptr) {
        double loss = 0.0;
        for (const auto& r : results) loss += r.mean_train_loss;
        stats->mean_train_loss = loss / static_cast<double>(results.size());
    }
    return next;
}

}  // namespace fedcme
