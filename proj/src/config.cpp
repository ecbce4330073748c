#include "fedcme/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

namespace fedcme {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& path) {
    for (const auto& item : j.items()) {
        if (allowed.find(item.key()) == allowed.end()) {
            throw ConfigError("config: unknown key '" + path + item.key() + "'");
        }
    }
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError("config: missing key '" + path + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: invalid value for key '" + path + key + "'");
    }
}

template <typename T>
T optional(const json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: invalid value for key '" + path + key + "'");
    }
}

DatasetSpec parse_dataset(const json& j) {
    DatasetSpec spec;
    const std::string type = require<std::string>(j, "type", "dataset.");
    if (type == "blobs") {
        spec.kind = DatasetSpec::Kind::Blobs;
        reject_unknown_keys(
            j, {"type", "classes", "dim", "per_class", "test_per_class", "spread"}, "dataset.");
        spec.blobs.classes = optional<int>(j, "classes", "dataset.", spec.blobs.classes);
        spec.blobs.dim = optional<int>(j, "dim", "dataset.", spec.blobs.dim);
        spec.blobs.per_class = optional<int>(j, "per_class", "dataset.", spec.blobs.per_class);
        spec.blobs.test_per_class =
            optional<int>(j, "test_per_class", "dataset.", spec.blobs.test_per_class);
        spec.blobs.spread = optional<double>(j, "spread", "dataset.", spec.blobs.spread);
    } else if (type == "idx") {
        spec.kind = DatasetSpec::Kind::Idx;
        reject_unknown_keys(
            j, {"type", "train_images", "train_labels", "test_images", "test_labels"}, "dataset.");
        spec.idx.train_images = require<std::string>(j, "train_images", "dataset.");
        spec.idx.train_labels = require<std::string>(j, "train_labels", "dataset.");
        spec.idx.test_images = require<std::string>(j, "test_images", "dataset.");
        spec.idx.test_labels = require<std::string>(j, "test_labels", "dataset.");
    } else {
        throw ConfigError("config: invalid value for key 'dataset.type'");
    }
    return spec;
}

void apply_strategy_tag(RunConfig& cfg) {
    ClientConfig& c = cfg.client;
    const std::string& tag = cfg.strategy_tag;
    if (tag == "fedavg") {
        c.strategy = Strategy::FedAvg;
    } else if (tag == "fedprox") {
        c.strategy = Strategy::FedProx;
    } else if (tag == "fedrs") {
        c.strategy = Strategy::FedRS;
    } else if (tag == "fedcme" || tag == "fedcme-ol" || tag == "fedcme-oe" ||
               tag == "fedcme-mto" || tag == "fedcme-wm" || tag == "fedcme-fe") {
        c.strategy = Strategy::FedCME;
        c.exchange_enabled = tag != "fedcme-ol";
        c.alignment_enabled = tag != "fedcme-oe";
        if (tag == "fedcme-wm") c.swap_mode = SwapMode::Whole;
        if (tag == "fedcme-fe") c.swap_mode = SwapMode::Extractor;
        if (tag == "fedcme-mto") cfg.match_mode = MatchMode::ManyToOne;
    } else {
        throw ConfigError("config: invalid value for key 'strategy'");
    }
}

}  // namespace

void RunConfig::validate() const {
    if (num_clients < 1) throw ConfigError("config: invalid value for key 'k'");
    if (clients_per_round < 1 || clients_per_round > num_clients) {
        throw ConfigError("config: key 'm' must satisfy 1 <= m <= k");
    }
    if (rounds < 1) throw ConfigError("config: invalid value for key 't'");
    if (!(dirichlet_alpha > 0.0)) {
        throw ConfigError("config: key 'dirichlet_alpha' must be > 0");
    }
    try {
        client.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (dataset.kind == DatasetSpec::Kind::Blobs) {
        if (dataset.blobs.classes < 2 || dataset.blobs.dim < 2 || dataset.blobs.per_class < 1 ||
            dataset.blobs.test_per_class < 1 || dataset.blobs.spread < 0.0) {
            throw ConfigError("config: invalid blobs dataset parameters");
        }
    }
}

RunConfig parse_config_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    reject_unknown_keys(j,
                        {"strategy", "k", "m", "t", "local_epochs", "batch_size", "lr", "mu",
                         "mu_prox", "alpha_rs", "dirichlet_alpha", "dataset", "seed",
                         "eval_fraction", "output_path", "weight_normalization"},
                        "");

    RunConfig cfg;
    cfg.strategy_tag = require<std::string>(j, "strategy", "");
    cfg.num_clients = require<int>(j, "k", "");
    cfg.clients_per_round = require<int>(j, "m", "");
    cfg.rounds = require<int>(j, "t", "");
    cfg.seed = require<std::uint64_t>(j, "seed", "");
    if (!j.contains("dataset")) throw ConfigError("config: missing key 'dataset'");
    cfg.dataset = parse_dataset(j.at("dataset"));

    cfg.client.local_epochs = optional<int>(j, "local_epochs", "", 6);
    cfg.client.batch_size = optional<int>(j, "batch_size", "", 32);
    cfg.client.lr = optional<double>(j, "lr", "", 0.01);
    cfg.client.mu = optional<double>(j, "mu", "", 0.01);
    cfg.client.mu_prox = optional<double>(j, "mu_prox", "", 0.01);
    cfg.client.alpha_rs = optional<double>(j, "alpha_rs", "", 0.5);
    cfg.client.eval_fraction = optional<double>(j, "eval_fraction", "", 0.2);
    cfg.dirichlet_alpha = optional<double>(j, "dirichlet_alpha", "", 0.5);
    cfg.output_path = optional<std::string>(j, "output_path", "", "metrics.csv");

    const std::string norm = optional<std::string>(j, "weight_normalization", "", "selected");
    if (norm == "selected") {
        cfg.weight_norm = WeightNorm::Selected;
    } else if (norm == "global") {
        cfg.weight_norm = WeightNorm::GlobalTotal;
    } else {
        throw ConfigError("config: invalid value for key 'weight_normalization'");
    }

    apply_strategy_tag(cfg);
    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

}  // namespace fedcme
