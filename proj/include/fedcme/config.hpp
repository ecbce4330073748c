#pragma once

#include <cstdint>
#include <string>

#include "fedcme/orchestrator.hpp"
#include "fedcme/strategies.hpp"

namespace fedcme {

struct BlobsSpec {
    int classes = 10;
    int dim = 20;
    int per_class = 200;      // training samples per class
    int test_per_class = 50;
    double spread = 0.5;
};

struct IdxSpec {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

struct DatasetSpec {
    enum class Kind { Blobs, Idx };
    Kind kind = Kind::Blobs;
    BlobsSpec blobs;
    IdxSpec idx;
};

struct RunConfig {
    std::string strategy_tag = "fedavg";
    int num_clients = 50;        // K
    int clients_per_round = 10;  // M
    int rounds = 1;              // T
    ClientConfig client;
    double dirichlet_alpha = 0.5;
    DatasetSpec dataset;
    std::uint64_t seed = 0;
    std::string output_path;
    WeightNorm weight_norm = WeightNorm::Selected;
    MatchMode match_mode = MatchMode::Pairwise;

    void validate() const;
};

// Parse a JSON config file. Unknown keys are rejected; errors name the
// offending key path. The strategy tag also sets the derived client flags
// (fedcme-ol disables exchange, fedcme-oe disables alignment, fedcme-mto
// selects many-to-one matching, fedcme-wm / fedcme-fe select the whole-model
// and extractor-only exchange ablations).
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& json_text);

}  // namespace fedcme
