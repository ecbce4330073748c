#include "fedcme/strategies.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "fedcme/rng.hpp"

namespace fedcme {

void ClientConfig::validate() const {
    if (!(lr > 0.0)) throw ValidationError("client config: lr must be > 0");
    if (local_epochs < 1) throw ValidationError("client config: local_epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("client config: batch_size must be >= 1");
    if (mu < 0.0 || mu_prox < 0.0) throw ValidationError("client config: factors must be >= 0");
    if (!(alpha_rs > 0.0 && alpha_rs <= 1.0)) {
        throw ValidationError("client config: alpha_rs must be in (0, 1]");
    }
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw ValidationError("client config: eval_fraction must be in (0, 1)");
    }
}

void FeatureAccumulator::add(const Tensor& features, const std::vector<int>& labels) {
    const std::size_t fdim = features.cols();
    if (fdim != sums.cols()) throw DimensionError("feature accumulator: feature dim mismatch");
    for (std::size_t b = 0; b < features.rows(); ++b) {
        const std::size_t c = static_cast<std::size_t>(labels[b]);
        present[c] = 1;
        for (std::size_t f = 0; f < fdim; ++f) sums.at(c, f) += features.at(b, f);
    }
}

namespace {

// Optional additions to the plain cross-entropy objective. Null members are
// genuinely skipped, not applied with zero factors, so every degenerate
// configuration follows the exact FedAvg instruction sequence.
struct TrainExtras {
    const PerClassFeatures* align_target = nullptr;
    double mu = 0.0;
    const ParamVector* prox_anchor = nullptr;
    double mu_prox = 0.0;
    const std::vector<char>* class_present = nullptr;  // FedRS mask
    double alpha_rs = 1.0;
    FeatureAccumulator* acc = nullptr;
};

void check_task(const ClientTask& task) {
    if (task.data == nullptr || task.indices == nullptr || task.tmpl == nullptr) {
        throw ValidationError("client task: missing data, indices or template");
    }
    if (task.indices->empty()) {
        throw ValidationError("client task: client " + std::to_string(task.client_id) +
                              " has no data");
    }
}

std::vector<char> present_classes(const Dataset& ds, const std::vector<std::size_t>& indices) {
    std::vector<char> present(static_cast<std::size_t>(ds.num_classes), 0);
    for (std::size_t i : indices) present[static_cast<std::size_t>(ds.y[i])] = 1;
    return present;
}

double prox_penalty(const SplitModel& m, const ParamVector& anchor, double mu_prox) {
    double sq = 0.0;
    std::size_t offset = 0;
    for (const Tensor* p : m.param_tensors()) {
        for (std::size_t i = 0; i < p->size(); ++i, ++offset) {
            const double d = (*p)[i] - anchor.values[offset];
            sq += d * d;
        }
    }
    return 0.5 * mu_prox * sq;
}

void add_prox_grad(const SplitModel& m, const ParamVector& anchor, double mu_prox,
                   GradBundle& grads) {
    std::size_t offset = 0;
    std::size_t t = 0;
    for (const Tensor* p : m.param_tensors()) {
        for (std::size_t i = 0; i < p->size(); ++i, ++offset) {
            grads.grads[t][i] += mu_prox * ((*p)[i] - anchor.values[offset]);
        }
        ++t;
    }
}

// One SGD step on one mini-batch; returns the batch objective value.
double train_batch(SplitModel& m, const Tensor& x, const std::vector<int>& y,
                   const ClientConfig& cfg, const TrainExtras& extras) {
    ForwardCache cache;
    const Tensor features = forward_features(m, x, cache);
    if (extras.acc != nullptr) extras.acc->add(features, y);

    Tensor logits = forward_logits(m, features);
    double loss;
    Tensor dlogits;
    const bool restrict_softmax = extras.class_present != nullptr && extras.alpha_rs != 1.0;
    if (restrict_softmax) {
        Tensor scaled = logits;
        for (std::size_t b = 0; b < scaled.rows(); ++b) {
            for (std::size_t c = 0; c < scaled.cols(); ++c) {
                if (!(*extras.class_present)[c]) scaled.at(b, c) *= extras.alpha_rs;
            }
        }
        auto [ce, dscaled] = softmax_cross_entropy(scaled, y);
        loss = ce;
        dlogits = std::move(dscaled);
        for (std::size_t b = 0; b < dlogits.rows(); ++b) {
            for (std::size_t c = 0; c < dlogits.cols(); ++c) {
                if (!(*extras.class_present)[c]) dlogits.at(b, c) *= extras.alpha_rs;
            }
        }
    } else {
        auto [ce, dl] = softmax_cross_entropy(logits, y);
        loss = ce;
        dlogits = std::move(dl);
    }

    Tensor dfeatures_extra;  // stays empty unless alignment contributes
    if (extras.align_target != nullptr && extras.mu != 0.0 && extras.align_target->any_set()) {
        auto [l2, dfeat] = l2_feature_loss(features, y, *extras.align_target);
        loss += extras.mu * l2;
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] *= extras.mu;
        dfeatures_extra = std::move(dfeat);
    }

    GradBundle grads = backward(m, cache, features, dlogits, dfeatures_extra);
    if (extras.prox_anchor != nullptr && extras.mu_prox != 0.0) {
        loss += prox_penalty(m, *extras.prox_anchor, extras.mu_prox);
        add_prox_grad(m, *extras.prox_anchor, extras.mu_prox, grads);
    }
    sgd_step(m.param_tensors(), grads, cfg.lr);
    return loss;
}

void train_epochs(SplitModel& m, const ClientTask& task, const ClientConfig& cfg,
                  const TrainExtras& extras, int epoch_begin, int epoch_end, double& loss_sum,
                  long& steps) {
    const std::uint64_t batch_seed =
        rng::derive(task.run_seed, {rng::kBatch, static_cast<std::uint64_t>(task.client_id),
                                    static_cast<std::uint64_t>(task.round)});
    Tensor x;
    std::vector<int> y;
    for (int epoch = epoch_begin; epoch < epoch_end; ++epoch) {
        for (const auto& batch : batch_iter(*task.indices, cfg.batch_size, batch_seed, epoch)) {
            gather_batch(*task.data, batch, x, y);
            loss_sum += train_batch(m, x, y, cfg, extras);
            ++steps;
        }
    }
}

LocalResult run_baseline(const ParamVector& w_global, const ClientTask& task,
                         const ClientConfig& cfg, const TrainExtras& extras) {
    check_task(task);
    SplitModel m = unflatten(w_global, *task.tmpl);
    double loss_sum = 0.0;
    long steps = 0;
    train_epochs(m, task, cfg, extras, 0, cfg.local_epochs, loss_sum, steps);
    LocalResult out;
    out.params = flatten(m);
    out.sample_count = task.indices->size();
    out.mean_train_loss = loss_sum / static_cast<double>(steps);
    return out;
}

}  // namespace

LocalResult local_update_fedavg(const ParamVector& w_global, const ClientTask& task,
                                const ClientConfig& cfg) {
    return run_baseline(w_global, task, cfg, TrainExtras{});
}

LocalResult local_update_fedprox(const ParamVector& w_global, const ClientTask& task,
                                 const ClientConfig& cfg) {
    TrainExtras extras;
    extras.prox_anchor = &w_global;
    extras.mu_prox = cfg.mu_prox;
    return run_baseline(w_global, task, cfg, extras);
}

LocalResult local_update_fedrs(const ParamVector& w_global, const ClientTask& task,
                               const ClientConfig& cfg) {
    check_task(task);
    const std::vector<char> present = present_classes(*task.data, *task.indices);
    bool all_present = true;
    for (char p : present) all_present = all_present && p != 0;
    TrainExtras extras;
    if (!all_present) {  // a client holding every class trains exactly as FedAvg
        extras.class_present = &present;
        extras.alpha_rs = cfg.alpha_rs;
    }
    return run_baseline(w_global, task, cfg, extras);
}

PhaseState fedcme_phase(PhaseState state, const ClientTask& task, const ClientConfig& cfg,
                        const PerClassFeatures& global_features, int epoch_begin, int epoch_end) {
    check_task(task);
    if (epoch_begin >= epoch_end) {
        std::fprintf(stderr, "fedcme_phase: empty epoch range [%d, %d) for client %d, skipping\n",
                     epoch_begin, epoch_end, task.client_id);
        return state;
    }
    TrainExtras extras;
    if (cfg.alignment_enabled) {
        extras.align_target = &global_features;
        extras.mu = cfg.mu;
    }
    extras.acc = &state.acc;
    train_epochs(state.model, task, cfg, extras, epoch_begin, epoch_end, state.loss_sum,
                 state.steps);
    state.epochs_completed = epoch_end;
    return state;
}

PerClassFeatures finalize_features(const FeatureAccumulator& acc, int epochs,
                                   const std::vector<std::size_t>& per_class_counts) {
    const std::size_t classes = acc.present.size();
    if (per_class_counts.size() != classes) {
        throw DimensionError("finalize_features: class count mismatch");
    }
    PerClassFeatures out(classes, acc.sums.cols());
    for (std::size_t c = 0; c < classes; ++c) {
        if (!acc.present[c]) continue;  // absent classes stay unset, never divided
        if (per_class_counts[c] == 0) {
            throw ValidationError("finalize_features: class " + std::to_string(c) +
                                  " present in accumulator but counted 0");
        }
        const double denom = static_cast<double>(epochs) * static_cast<double>(per_class_counts[c]);
        for (std::size_t f = 0; f < acc.sums.cols(); ++f) {
            out.values.at(c, f) = acc.sums.at(c, f) / denom;
        }
        out.set[c] = 1;
    }
    return out;
}

std::vector<double> evaluate_vector(const SplitModel& m, const Tensor& eval_x,
                                    const std::vector<int>& eval_y, int num_classes) {
    std::vector<double> eps(static_cast<std::size_t>(num_classes), 0.0);
    if (eval_y.empty()) return eps;
    const Tensor logits = forward_logits(m, forward_features(m, eval_x));
    std::vector<std::size_t> total(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::size_t> correct(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t b = 0; b < eval_y.size(); ++b) {
        std::size_t pred = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (logits.at(b, c) > logits.at(b, pred)) pred = c;
        }
        const std::size_t label = static_cast<std::size_t>(eval_y[b]);
        ++total[label];
        if (pred == label) ++correct[label];
    }
    for (std::size_t c = 0; c < eps.size(); ++c) {
        if (total[c] > 0) eps[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    }
    return eps;
}

LocalResult local_update_fedcme(const ParamVector& w_global, const ClientTask& task,
                                const ClientConfig& cfg, const PerClassFeatures& global_features,
                                ExchangeBarrier& barrier) {
    check_task(task);
    const Dataset& ds = *task.data;
    const std::size_t classes = static_cast<std::size_t>(ds.num_classes);

    PhaseState state;
    state.model = unflatten(w_global, *task.tmpl);
    state.acc = FeatureAccumulator(classes, state.model.feature_dim());

    const int half = cfg.local_epochs / 2;
    state = fedcme_phase(std::move(state), task, cfg, global_features, 0, half);
    if (cfg.exchange_enabled) {
        barrier.exchange(task.client_id, state.model);
    }
    state = fedcme_phase(std::move(state), task, cfg, global_features, half, cfg.local_epochs);

    std::vector<std::size_t> class_counts(classes, 0);
    for (std::size_t i : *task.indices) ++class_counts[static_cast<std::size_t>(ds.y[i])];

    LocalResult out;
    out.params = flatten(state.model);
    out.local_features = finalize_features(state.acc, cfg.local_epochs, class_counts);
    out.sample_count = task.indices->size();
    out.mean_train_loss = state.loss_sum / static_cast<double>(state.steps);

    const std::uint64_t eval_seed =
        rng::derive(task.run_seed, {rng::kEvalSplit, static_cast<std::uint64_t>(task.client_id),
                                    static_cast<std::uint64_t>(task.round)});
    const EvalSplit eval = split_eval(*task.indices, cfg.eval_fraction, eval_seed);
    if (eval.indices.empty()) {
        out.eval_vector.assign(classes, 0.0);
    } else {
        Tensor ex;
        std::vector<int> ey;
        gather_batch(ds, eval.indices, ex, ey);
        out.eval_vector = evaluate_vector(state.model, ex, ey, ds.num_classes);
    }
    return out;
}

}  // namespace fedcme
