#pragma once

#include <cstdint>
#include <vector>

#include "fedcme/data.hpp"
#include "fedcme/split_model.hpp"

namespace fedcme {

enum class Strategy { FedAvg, FedProx, FedRS, FedCME };

// Which part of the model the barrier exchanges (classifier is the
// protocol; the others are ablations).
enum class SwapMode { Classifier, Extractor, Whole };

struct ClientConfig {
    Strategy strategy = Strategy::FedAvg;
    double lr = 0.01;
    int local_epochs = 6;
    int batch_size = 32;
    double mu = 0.01;        // feature-alignment factor
    double mu_prox = 0.01;   // proximal factor
    double alpha_rs = 0.5;   // restricted-softmax factor, in (0, 1]
    bool exchange_enabled = true;    // FedCME: classifier exchange on/off
    bool alignment_enabled = true;   // FedCME: alignment loss on/off
    SwapMode swap_mode = SwapMode::Classifier;
    double eval_fraction = 0.2;

    void validate() const;
};

// Everything a worker needs to train one client for one round. The dataset
// and index list are shared read-only; seeds are derived per (run, client,
// round) so workers never contend on RNG state.
struct ClientTask {
    const Dataset* data = nullptr;
    const std::vector<std::size_t>* indices = nullptr;
    const SplitModel* tmpl = nullptr;
    int client_id = 0;
    int round = 0;
    std::uint64_t run_seed = 0;
};

// Running per-class feature sums over every extraction event of a round.
struct FeatureAccumulator {
    Tensor sums;               // [C x F]
    std::vector<char> present;

    FeatureAccumulator() = default;
    FeatureAccumulator(std::size_t num_classes, std::size_t feature_dim)
        : sums({num_classes, feature_dim}), present(num_classes, 0) {}

    void add(const Tensor& features, const std::vector<int>& labels);
};

struct LocalResult {
    ParamVector params;
    PerClassFeatures local_features;    // empty for baselines
    std::vector<double> eval_vector;    // empty for baselines
    std::size_t sample_count = 0;
    double mean_train_loss = 0.0;
};

struct PhaseState {
    SplitModel model;
    FeatureAccumulator acc;
    int epochs_completed = 0;
    double loss_sum = 0.0;
    long steps = 0;
};

// Rendezvous the orchestrator hands to FedCME clients; exchange() returns
// once this client's swap (if any) has been performed.
class ExchangeBarrier {
public:
    virtual ~ExchangeBarrier() = default;
    virtual void exchange(int client_id, SplitModel& model) = 0;
};

// Used when exchange is disabled or a client has no counterpart.
class NullBarrier final : public ExchangeBarrier {
public:
    void exchange(int, SplitModel&) override {}
};

LocalResult local_update_fedavg(const ParamVector& w_global, const ClientTask& task,
                                const ClientConfig& cfg);

LocalResult local_update_fedprox(const ParamVector& w_global, const ClientTask& task,
                                 const ClientConfig& cfg);

LocalResult local_update_fedrs(const ParamVector& w_global, const ClientTask& task,
                               const ClientConfig& cfg);

// Epochs [epoch_begin, epoch_end) of the FedCME objective: cross-entropy
// plus mu * alignment loss, feature sums accumulated per batch. Alignment
// gradients reach the extractor only.
PhaseState fedcme_phase(PhaseState state, const ClientTask& task, const ClientConfig& cfg,
                        const PerClassFeatures& global_features, int epoch_begin, int epoch_end);

// Per-class sums divided by epochs * |D_{k,c}|; absent classes stay unset.
PerClassFeatures finalize_features(const FeatureAccumulator& acc, int epochs,
                                   const std::vector<std::size_t>& per_class_counts);

// Per-class accuracy on the provided samples; classes absent from the
// sample are reported as 0.
std::vector<double> evaluate_vector(const SplitModel& m, const Tensor& eval_x,
                                    const std::vector<int>& eval_y, int num_classes);

// Full FedCME client round: first phase, barrier exchange, second phase,
// feature finalization, self-evaluation on a fresh eval split.
LocalResult local_update_fedcme(const ParamVector& w_global, const ClientTask& task,
                                const ClientConfig& cfg, const PerClassFeatures& global_features,
                                ExchangeBarrier& barrier);

}  // namespace fedcme
